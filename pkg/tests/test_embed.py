import math

import numpy as np
import pytest

from m1_wav_io import AudioBuffer
from m2_dwt import block_approx, forward_dwt
from m4_embed import (
    AudioTooShortError,
    DegenerateFrameError,
    EmbedConfig,
    boost_rows,
    build_bit_stream,
    embed,
    embed_bit,
    embed_rows,
    embedding_strength,
    energy_diffs,
    group_energies,
    layout_frames,
    strength_cap,
)
from m5_extract import decode_rows, extract_bit
from m7_metrics import capacity, snr


def _energies(coeffs, group_size):
    g = group_energies(coeffs, group_size)
    return sorted(g.values, reverse=True)


class TestGroupEnergies:
    def test_absolute_values(self):
        g = group_energies([-3, 2, 1], 1)
        assert g.values == (3, 2, 1)
        assert g.ordering == (0, 1, 2)

    def test_all_zero_tie_break(self):
        g = group_energies([0, 0, 0], 1)
        assert g.values == (0, 0, 0)
        assert g.ordering == (0, 1, 2)

    def test_two_per_group(self):
        g = group_energies([1, 1, 2, 2, 0, 3], 2)
        assert g.values == (2, 4, 3)
        assert g.ordering == (1, 2, 0)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            group_energies([1, 2, 3, 4], 1)

    @pytest.mark.parametrize("values,expected", [((10, 4, 2), (6, 2)), ((5, 5, 5), (0, 0)), ((9, 5, 2), (4, 3))])
    def test_energy_diffs(self, values, expected):
        assert energy_diffs(group_energies(list(values), 1)) == expected


class TestStrength:
    def test_embedding_strength(self):
        assert embedding_strength([10, -10, 10], 0.1) == pytest.approx(1.0)
        assert embedding_strength([0, 0, 0], 0.4) == 0.0

    def test_strength_is_homogeneous(self):
        c = np.array([1.0, -2.0, 3.0])
        assert embedding_strength(2 * c, 0.3) == pytest.approx(2 * embedding_strength(c, 0.3))

    def test_strength_rejects_zero_d(self):
        with pytest.raises(ValueError):
            embedding_strength([1, 2, 3], 0.0)

    def test_caps(self):
        assert strength_cap(1, group_energies([9, 5, 2], 1)) == pytest.approx(10.0)
        assert strength_cap(0, group_energies([10, 4, 2], 1)) == pytest.approx(8 / 14 * 8)
        assert strength_cap(1, group_energies([5, 5, 5], 1)) == 0.0

    def test_cap_of_silence(self):
        with pytest.raises(DegenerateFrameError):
            strength_cap(1, group_energies([0, 0, 0], 1))


class TestEmbedBit:
    def test_bit_one_example(self):
        out = embed_bit([9.0, 5.0, 2.0], 1, 3.0)
        np.testing.assert_allclose(out, [9 * 23 / 21, 5 * 19 / 21, 2 * 23 / 21], rtol=1e-12)
        emax, emed, emin = _energies(out, 1)
        assert (emax - emed) - (emed - emin) == pytest.approx(3.0, rel=1e-9)

    def test_bit_zero_example(self):
        out = embed_bit([10.0, 4.0, 2.0], 0, 2.0)
        np.testing.assert_allclose(out, [7.0, 5.2, 1.4], rtol=1e-12)

    def test_already_satisfied_is_unchanged(self):
        c = np.array([10.0, 4.0, 2.0])
        np.testing.assert_array_equal(embed_bit(c, 1, 3.0), c)

    def test_idempotent(self):
        once = embed_bit([9.0, 5.0, 2.0], 1, 3.0)
        np.testing.assert_array_equal(embed_bit(once, 1, 3.0), once)

    def test_signs_are_kept(self):
        out = embed_bit([-9.0, 5.0, -2.0], 1, 3.0)
        assert out[0] < 0 and out[1] > 0 and out[2] < 0

    def test_scale_equivariance(self):
        c = np.random.default_rng(5).standard_normal(24)
        np.testing.assert_allclose(embed_bit(2.5 * c, 0, 2.5 * 0.7), 2.5 * embed_bit(c, 0, 0.7), rtol=1e-10)

    def test_silent_coefficients(self):
        with pytest.raises(DegenerateFrameError):
            embed_bit(np.zeros(24), 1, 1.0)

    def test_rejects_bad_bit(self):
        with pytest.raises(ValueError):
            embed_bit([1.0, 2.0, 3.0], 2, 1.0)

    def test_bit_zero_needs_two_groups(self):
        with pytest.raises(DegenerateFrameError, match="two groups"):
            embed_bit([3.0, 0.0, 0.0], 0, 1.0)
        np.testing.assert_array_equal(embed_bit([3.0, 0.0, 0.0], 1, 1.0), [3.0, 0.0, 0.0])

    def test_single_group_rows_are_skipped(self):
        rows = np.array([[3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 1.0, 0.0]])
        out, _, modified, skipped = embed_rows(rows, [0, 1, 0], 1.0, 1)
        np.testing.assert_array_equal(skipped, [True, False, False])
        np.testing.assert_array_equal(out[0], rows[0])
        assert not modified[0]
        assert extract_bit(out[2]) == 0

    @pytest.mark.slow
    def test_random_triples(self):
        """Ordering kept, margin exact when modified, and the bit reads back."""
        rng = np.random.default_rng(2024)
        n = 100_000
        rows = rng.uniform(0.01, 10.0, (n, 3)) * rng.choice([-1.0, 1.0], (n, 3))
        bits = rng.integers(0, 2, n).astype(np.uint8)
        requested = rng.uniform(0.0, 10.0, n)

        out, clamped, modified, skipped = embed_rows(rows, bits, requested, 1)
        assert not skipped.any()

        before = np.abs(rows)
        after = np.abs(out)
        order = np.argsort(-before, axis=1, kind="stable")
        e = np.take_along_axis(after, order, axis=1)
        assert np.all(e[:, 0] >= e[:, 1] * (1 - 1e-12))
        assert np.all(e[:, 1] >= e[:, 2] * (1 - 1e-12))

        diff = (e[:, 0] - e[:, 1]) - (e[:, 1] - e[:, 2])
        achieved = np.where(bits == 1, diff, -diff)
        scale = e.sum(axis=1)
        np.testing.assert_allclose(achieved[modified], clamped[modified], atol=1e-9 * scale[modified].max(), rtol=1e-9)

        positive = clamped > 0
        assert np.count_nonzero(positive) > 99_000
        recovered, _, silent = decode_rows(out[positive], 1)
        assert not silent.any()
        np.testing.assert_array_equal(recovered, bits[positive])
        assert np.all(np.where(bits[positive] == 1, diff[positive], -diff[positive]) >= 0)


class TestBoostRows:
    def test_bit_one_grows_max_only(self):
        out, boosted = boost_rows([[5.0, 5.0, 5.0]], [1], 2.0, 1)
        np.testing.assert_allclose(out[0], [7.0, 5.0, 5.0])
        assert boosted[0]

    def test_bit_zero_grows_max_and_med(self):
        out, boosted = boost_rows([[5.0, -5.0, 5.0]], [0], 2.0, 1)
        np.testing.assert_allclose(out[0], [7.0, -7.0, 5.0])
        assert boosted[0]

    def test_reached_targets_are_untouched(self):
        rows = np.array([[9.0, 2.0, 1.0]])
        out, boosted = boost_rows(rows, [1], 2.0, 1)
        np.testing.assert_array_equal(out, rows)
        assert not boosted.any()

    def test_unliftable_bit_zero(self):
        # 2·Emed <= Emax: growing max and med together cannot raise B - A
        out, boosted = boost_rows([[9.0, 3.0, 1.0]], [0], 1.0, 1)
        np.testing.assert_array_equal(out[0], [9.0, 3.0, 1.0])
        assert not boosted[0]

    def test_random_rows_keep_order_and_reach_target(self):
        rng = np.random.default_rng(77)
        n = 20_000
        rows = rng.uniform(0.01, 10.0, (n, 3)) * rng.choice([-1.0, 1.0], (n, 3))
        bits = rng.integers(0, 2, n).astype(np.uint8)
        targets = rng.uniform(0.0, 3.0, n)

        out, boosted = boost_rows(rows, bits, targets, 1)
        assert boosted.any()
        np.testing.assert_array_equal(np.sign(out), np.sign(rows))

        order = np.argsort(-np.abs(rows), axis=1, kind="stable")
        e = np.take_along_axis(np.abs(out), order, axis=1)
        assert np.all(e[:, 0] >= e[:, 1] * (1 - 1e-12))
        assert np.all(e[:, 1] >= e[:, 2] * (1 - 1e-12))

        diff = (e[:, 0] - e[:, 1]) - (e[:, 1] - e[:, 2])
        achieved = np.where(bits == 1, diff, -diff)
        np.testing.assert_allclose(achieved[boosted], targets[boosted], rtol=1e-9, atol=1e-9)
        np.testing.assert_array_equal(out[~boosted], rows[~boosted])


class TestLayout:
    def test_defaults(self, cfg):
        assert cfg.block_samples == 1536
        assert cfg.n1_samples == 47616
        assert cfg.n2_samples == 49152
        assert cfg.frame_samples == 96768
        assert cfg.frame_samples / 44100 == pytest.approx(2.194, abs=1e-3)

    def test_56_seconds(self, cfg):
        layout = layout_frames(2_469_600, cfg)
        assert layout.frame_count == 25
        assert layout.frame_count * cfg.payload_bits == 800

    def test_exactly_one_frame(self, cfg):
        assert layout_frames(96768, cfg).frame_count == 1

    def test_too_short(self, cfg):
        with pytest.raises(AudioTooShortError):
            layout_frames(96767, cfg)

    def test_capacity_matches_layout(self, cfg):
        assert 44100 / cfg.block_samples == pytest.approx(capacity(44100, cfg.levels, cfg.group_size))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EmbedConfig(strength=0)
        with pytest.raises(ValueError):
            EmbedConfig(threshold=31)
        with pytest.raises(ValueError):
            EmbedConfig(levels=0)
        with pytest.raises(ValueError, match="margin_floor"):
            EmbedConfig(margin_floor=1.0)
        with pytest.raises(ValueError, match="margin_floor"):
            EmbedConfig(margin_floor=-0.1)


class TestEmbed:
    def test_empty_payload(self, corpus_audio, cfg):
        with pytest.raises(ValueError, match="at least one bit"):
            embed(corpus_audio, [], cfg)

    def test_short_audio(self, cfg):
        with pytest.raises(AudioTooShortError):
            embed(AudioBuffer(np.ones(1000), 44100), [1, 0], cfg)

    def test_silent_audio(self, cfg):
        with pytest.raises(DegenerateFrameError):
            embed(AudioBuffer(np.zeros(cfg.frame_samples), 44100), [1, 0], cfg)

    def test_report(self, watermarked, corpus_audio):
        marked, report = watermarked
        assert len(marked) == len(corpus_audio)
        assert report.frame_count == 25
        assert report.payload_bits == 800
        assert report.snr_db >= 20.0
        assert 0 < report.strength <= 0.4
        assert len(report.frame_snr_db) == 25
        assert 0 <= report.boosted_bits <= report.modified_bits

    def test_time_domain_snr_matches_report(self, corpus_audio, payload, cfg):
        marked, report = embed(corpus_audio, payload, cfg)
        assert snr(corpus_audio.samples, marked.samples) == pytest.approx(report.snr_db, abs=1e-6)

    def test_only_low_band_changes(self, corpus_audio, payload, cfg):
        marked, _ = embed(corpus_audio, payload, cfg)
        diff = (marked.samples - corpus_audio.samples)[:cfg.frame_samples]
        block = cfg.block_samples
        for start in range(0, len(diff), block):
            pyr = forward_dwt(diff[start:start + block], cfg.levels)
            assert max(float(np.max(np.abs(d))) for d in pyr.details) < 1e-9

    def test_tail_is_untouched(self, corpus_audio, payload, cfg):
        marked, report = embed(corpus_audio, payload, cfg)
        used = report.frame_count * cfg.frame_samples
        np.testing.assert_array_equal(marked.samples[used:], corpus_audio.samples[used:])

    def test_strength_decays_to_reach_target(self, corpus_audio, payload):
        cfg = EmbedConfig(strength=5.0, snr_target_db=22.0, max_iterations=40)
        _, report = embed(corpus_audio, payload, cfg)
        assert report.iterations > 1
        assert report.strength == pytest.approx(5.0 * 0.8 ** (report.iterations - 1))
        assert report.snr_db >= 22.0

    def test_quality_plateau_is_reported(self, corpus_audio, payload, caplog):
        # flipping the wrong-signed blocks costs a fixed amount however small d gets
        cfg = EmbedConfig(snr_target_db=35.0, max_iterations=40)
        marked, report = embed(corpus_audio, payload, cfg)
        assert report.iterations == 40
        assert "below target" in caplog.text
        assert math.isfinite(report.snr_db)
        assert report.snr_db < 35.0
        assert snr(corpus_audio.samples, marked.samples) == pytest.approx(report.snr_db, abs=1e-6)

    def test_unreachable_target_warns(self, corpus_audio, payload, caplog):
        cfg = EmbedConfig(strength=5.0, snr_target_db=200.0, max_iterations=3)
        _, report = embed(corpus_audio, payload, cfg)
        assert report.iterations == 3
        assert "below target" in caplog.text

    def test_pluggable_quality(self, corpus_audio, payload, cfg):
        calls = []

        def quality(signal_energy, approx, marked):
            calls.append(1)
            return math.inf

        _, report = embed(corpus_audio, payload, cfg, quality=quality)
        assert len(calls) == 1
        assert report.strength == cfg.strength

    def test_silent_blocks_are_skipped(self, cfg):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(cfg.frame_samples) * 0.1
        first_payload = cfg.n1_samples
        x[first_payload:first_payload + cfg.block_samples] = 0.0
        _, report = embed(AudioBuffer(x, 44100), [1, 0, 1, 1], cfg)
        assert report.skipped_bits == [0]
        assert report.skipped_sync_bits == 0

    def test_margin_floor_is_met(self, corpus_audio, payload, cfg):
        marked, report = embed(corpus_audio, payload, cfg)
        used = report.frame_count * cfg.frame_samples
        before = block_approx(corpus_audio.samples[:used].reshape(-1, cfg.block_samples), cfg.levels)
        after = block_approx(marked.samples[:used].reshape(-1, cfg.block_samples), cfg.levels)
        stream = build_bit_stream(payload, cfg, report.frame_count)

        total = np.abs(before).sum(axis=1)
        target = np.minimum(report.strength * total / 3, cfg.margin_floor * total)
        _, margins, silent = decode_rows(after, cfg.group_size)
        assert not silent.any()
        achieved = np.where(stream == 1, margins, -margins) * np.abs(after).sum(axis=1)
        assert np.all(achieved >= target - 1e-9 * total.max())

    def test_zero_margin_floor_disables_boost(self, corpus_audio, payload):
        _, report = embed(corpus_audio, payload, EmbedConfig(margin_floor=0.0))
        assert report.boosted_bits == 0
