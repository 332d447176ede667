import io
import json
import math
from argparse import Namespace

import numpy as np
import pandas as pd
import pytest
from rich.console import Console

from m0_corpus import synthesize, write_corpus
from m1_wav_io import AudioBuffer, load_wav, save_wav
from m4_embed import EmbedConfig
from progress_manager import AttackTally, BenchProgress
from run import bits_to_hex, build_config, parse_payload, resolve_seed, run
from run_all import BENCH_COLUMNS, attack_catalog, run_bench, write_bench_csv


@pytest.fixture
def short_wav(tmp_path):
    path = tmp_path / "short.wav"
    save_wav(path, synthesize("mixed", 5.0, 44100, seed=0))
    return path


class TestPayloadCodec:
    def test_hex_is_big_endian(self):
        np.testing.assert_array_equal(parse_payload("A5"), [1, 0, 1, 0, 0, 1, 0, 1])
        assert len(parse_payload("0xDEADBEEF")) == 32

    def test_file_payload(self, tmp_path):
        path = tmp_path / "payload.bin"
        path.write_bytes(b"\x0f")
        np.testing.assert_array_equal(parse_payload(f"@{path}"), [0, 0, 0, 0, 1, 1, 1, 1])

    def test_bad_payloads(self):
        with pytest.raises(ValueError, match="not a hex string"):
            parse_payload("XYZ")
        with pytest.raises(ValueError):
            parse_payload("")

    def test_bits_to_hex_pads_to_bytes(self):
        assert bits_to_hex([1, 0, 1, 0, 0, 1, 0, 1]) == "A5"
        assert bits_to_hex([1, 1, 1, 1]) == "F0"
        assert bits_to_hex([]) == ""


class TestSettings:
    def test_defaults(self):
        cfg, default = build_config(Namespace()), EmbedConfig()
        assert (cfg.levels, cfg.group_size, cfg.strength, cfg.snr_target_db, cfg.threshold) == (
            default.levels, default.group_size, default.strength, default.snr_target_db, default.threshold)
        np.testing.assert_array_equal(cfg.sync.bits, default.sync.bits)

    def test_settings_file_and_flags(self, tmp_path):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"levels": 5, "groupSize": 4, "snrTarget": 25.0, "syncDegree": 6,
                                    "marginFloor": 0.05}))
        cfg = build_config(Namespace(config=path, threshold=7, levels=None))
        assert cfg.levels == 5
        assert cfg.group_size == 4
        assert cfg.margin_floor == 0.05
        assert cfg.snr_target_db == 25.0
        assert cfg.threshold == 7
        assert cfg.sync.length == 63

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"strength": 0.2}))
        assert build_config(Namespace(config=path, strength=0.3)).strength == 0.3

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "settings.json"
        path.write_text("{levels: 5")
        with pytest.raises(ValueError, match="not valid JSON"):
            build_config(Namespace(config=path))

    def test_seed_resolution(self, monkeypatch):
        monkeypatch.delenv("WAVEMARK_SEED", raising=False)
        assert resolve_seed(None) == 0
        monkeypatch.setenv("WAVEMARK_SEED", "42")
        assert resolve_seed(None) == 42
        assert resolve_seed(7) == 7
        monkeypatch.setenv("WAVEMARK_SEED", "abc")
        with pytest.raises(ValueError):
            resolve_seed(None)


class TestCommands:
    def test_analyze(self, capsys):
        assert run(["analyze"]) == 0
        out = capsys.readouterr().out
        assert "28.71 bps" in out
        assert "9.610e-05" in out

    def test_embed_then_extract(self, tmp_path, short_wav):
        marked = tmp_path / "marked.wav"
        bits = tmp_path / "bits.hex"
        embed_report = tmp_path / "embed.json"
        extract_report = tmp_path / "extract.json"

        assert run(["embed", "--input", str(short_wav), "--output", str(marked),
                    "--payload", "A5", "--report", str(embed_report)]) == 0
        data = json.loads(embed_report.read_text())
        assert data["frame_count"] == 2
        assert data["snr_db"] >= 20.0

        assert run(["extract", "--input", str(marked), "--output", str(bits),
                    "--report", str(extract_report)]) == 0
        assert bits.read_text().strip() == "A5" * 8
        assert json.loads(extract_report.read_text())["frames_decoded"] == 2

    def test_channel_and_attack(self, tmp_path, short_wav):
        played = tmp_path / "played.wav"
        assert run(["channel", "--input", str(short_wav), "--output", str(played),
                    "--temporal-scale", "1.003", "--gain", "0.7", "--seed", "3"]) == 0
        assert len(load_wav(played)) == round(1.003 * len(load_wav(short_wav)))

        lowpassed = tmp_path / "lp.wav"
        assert run(["attack", "lowpass", "--input", str(short_wav), "--output", str(lowpassed),
                    "--cutoff", "9000"]) == 0
        assert len(load_wav(lowpassed)) == len(load_wav(short_wav))

    def test_extract_without_watermark(self, tmp_path, caplog):
        path = tmp_path / "dc.wav"
        save_wav(path, AudioBuffer(np.full(3 * 96768, 0.25), 44100))
        assert run(["extract", "--input", str(path)]) == 1
        assert "no sync found" in caplog.text

    def test_missing_input(self, tmp_path, caplog):
        assert run(["extract", "--input", str(tmp_path / "nope.wav")]) == 1
        assert "Error" in caplog.text

    def test_attack_missing_parameter(self, tmp_path, short_wav):
        assert run(["attack", "requantize", "--input", str(short_wav), "--output", str(tmp_path / "q.wav")]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["embed", "--input", "x.wav"])
        assert exc.value.code == 2


@pytest.fixture(scope="module")
def bench_corpus(tmp_path_factory):
    corpus = tmp_path_factory.mktemp("corpus")
    write_corpus(corpus, seconds=5.0)
    return corpus


class TestBench:
    def test_table_shape(self, bench_corpus):
        df = run_bench(bench_corpus, max_workers=2)
        assert list(df.columns) == BENCH_COLUMNS
        assert len(df) == 4 * len(attack_catalog())
        assert list(df["file"].unique()) == ["mixed.wav", "noise.wav", "speech.wav", "tones.wav"]
        assert list(df[df["file"] == "mixed.wav"]["attack"]) == [a.name for a in attack_catalog()]
        assert (df["frames_expected"] == 2).all()

        unattacked = df[(df["file"] == "mixed.wav") & (df["attack"] == "unattacked")].iloc[0]
        assert unattacked["frames_decoded"] == 2
        assert unattacked["ber_percent"] == 0.0
        assert unattacked["snr_db"] >= 20.0

    def test_empty_corpus(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            run_bench(tmp_path)

    @pytest.mark.slow
    def test_csv_is_reproducible(self, bench_corpus, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_bench_csv(run_bench(bench_corpus, seed=5, max_workers=2), first)
        write_bench_csv(run_bench(bench_corpus, seed=5, max_workers=1), second)
        assert first.read_bytes() == second.read_bytes()
        assert list(pd.read_csv(first).columns) == BENCH_COLUMNS

    def test_progress_scoreboard(self, bench_corpus):
        board = BenchProgress(console=Console(file=io.StringIO()))
        run_bench(bench_corpus, max_workers=2, progress_manager=board)
        assert set(board.tallies) == {a.name for a in attack_catalog()}
        assert all(t.runs == 4 for t in board.tallies.values())
        assert board.tallies["unattacked"].clean >= 1
        assert len(board.log_lines) == board.log_lines.maxlen


class TestAttackTally:
    def test_counts(self):
        tally = AttackTally()
        for ber in (0.0, 1.5, math.nan, 0.0):
            tally.add(ber)
        assert (tally.runs, tally.clean, tally.no_sync) == (4, 2, 1)
        assert tally.mean_ber == pytest.approx(0.5)

    def test_all_missed(self):
        tally = AttackTally()
        tally.add(math.nan)
        assert math.isnan(tally.mean_ber)
