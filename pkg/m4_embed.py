#!/usr/bin/env python3
"""
Embed sync codes and payload bits into the low-frequency DWT band of PCM audio.

Each bit owns one block of 3·L·2^K samples. The block's K-level db2
approximation band holds 3L coefficients split into three groups of L;
their absolute sums E1, E2, E3 are sorted into Emax >= Emed >= Emin and the
bit is written into the sign of (Emax - Emed) - (Emed - Emin) with margin S:

    bit 1:  A - B >= S        bit 0:  B - A >= S

Groups are rescaled multiplicatively, so the relationship survives any gain
applied to the audio. S is clamped per bit so the max/med/min ordering never
changes, and the global strength factor d is lowered until the watermarked
SNR reaches the target.

A frame is one sync region (Ns blocks) followed by one payload region
(payload_bits blocks), repeated over the whole signal:

    | sync 31 blocks | payload 32 blocks | sync 31 blocks | payload ... |

Usage:
    python m4_embed.py input.wav output.wav --payload DEADBEEF [--strength 0.4] [--snr-target 20]
"""

import argparse
import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from rich.logging import RichHandler

from m1_wav_io import AudioBuffer, load_wav, save_wav
from m2_dwt import block_approx, block_synthesize_approx
from m3_sync_codes import SyncCode, generate_msequence, DEFAULT_THRESHOLD
from m7_metrics import coefficient_snr

logger = logging.getLogger(__name__)

# ----------------------------
# Tunables
# ----------------------------
DEGENERATE_EPS = 1e-12          # Σ|c| below this cannot carry a bit multiplicatively
CAP_MARGIN = 1e-6               # S is held strictly below the ordering cap
DEFAULT_LEVELS = 6
DEFAULT_GROUP_SIZE = 8
DEFAULT_STRENGTH = 0.4
DEFAULT_SNR_TARGET_DB = 20.0
DEFAULT_PAYLOAD_BITS = 32
DEFAULT_MAX_ITERATIONS = 20
DEFAULT_DECAY = 0.8
DEFAULT_MARGIN_FLOOR = 0.1      # minimum margin as a share of Σ|c|, never above S


class AudioTooShortError(ValueError):
    """Raised when the audio cannot hold a single frame."""
    pass


class DegenerateFrameError(ValueError):
    """Raised when coefficients are (near) silent and cannot carry a bit."""
    pass


# ----------------------------
# Structures
# ----------------------------
@dataclass
class EmbedConfig:
    levels: int = DEFAULT_LEVELS
    group_size: int = DEFAULT_GROUP_SIZE
    strength: float = DEFAULT_STRENGTH
    snr_target_db: float = DEFAULT_SNR_TARGET_DB
    sync: SyncCode = field(default_factory=generate_msequence)
    payload_bits: int = DEFAULT_PAYLOAD_BITS
    threshold: int = DEFAULT_THRESHOLD
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    decay: float = DEFAULT_DECAY
    margin_floor: float = DEFAULT_MARGIN_FLOOR

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.group_size < 1:
            raise ValueError(f"group_size must be >= 1, got {self.group_size}")
        if not self.strength > 0:
            raise ValueError(f"strength factor d must be > 0, got {self.strength}")
        if not self.snr_target_db > 0:
            raise ValueError(f"snr_target_db must be > 0, got {self.snr_target_db}")
        if self.payload_bits < 1:
            raise ValueError(f"payload_bits must be >= 1, got {self.payload_bits}")
        if not 0 <= self.threshold < self.sync.length:
            raise ValueError(f"threshold must satisfy 0 <= T < {self.sync.length}, got {self.threshold}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.decay < 1:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if not 0 <= self.margin_floor < 1:
            raise ValueError(f"margin_floor must lie in [0, 1), got {self.margin_floor}")

    @property
    def block_samples(self) -> int:
        return 3 * self.group_size * (1 << self.levels)

    @property
    def n1_samples(self) -> int:
        return self.block_samples * self.sync.length

    @property
    def n2_samples(self) -> int:
        return self.block_samples * self.payload_bits

    @property
    def frame_samples(self) -> int:
        return self.n1_samples + self.n2_samples

    @property
    def blocks_per_frame(self) -> int:
        return self.sync.length + self.payload_bits


@dataclass
class FrameLayout:
    n1_samples: int
    n2_samples: int
    frame_samples: int
    frame_count: int


@dataclass
class GroupEnergies:
    e1: float
    e2: float
    e3: float
    ordering: Tuple[int, int, int]  # group indices (0-based) of max, med, min

    @property
    def values(self) -> Tuple[float, float, float]:
        return (self.e1, self.e2, self.e3)

    @property
    def emax(self) -> float:
        return self.values[self.ordering[0]]

    @property
    def emed(self) -> float:
        return self.values[self.ordering[1]]

    @property
    def emin(self) -> float:
        return self.values[self.ordering[2]]


@dataclass
class EmbedReport:
    strength: float
    snr_db: float
    iterations: int
    frame_count: int
    payload_bits: int
    modified_bits: int
    frame_snr_db: List[Optional[float]] = field(default_factory=list)
    skipped_bits: List[int] = field(default_factory=list)
    skipped_sync_bits: int = 0
    boosted_bits: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["snr_db"] = None if math.isinf(self.snr_db) else self.snr_db
        return out


# ----------------------------
# Group arithmetic (rows of 3L coefficients, vectorized)
# ----------------------------
def _row_energies(rows: np.ndarray, group_size: int) -> np.ndarray:
    return np.abs(rows).reshape(len(rows), 3, group_size).sum(axis=2)


def _ordering(energies: np.ndarray) -> np.ndarray:
    # descending energy, ties by ascending group index
    return np.argsort(-energies, axis=1, kind="stable")


def _caps(bits: np.ndarray, emax: np.ndarray, emed: np.ndarray, emin: np.ndarray) -> np.ndarray:
    spread = emax - emin
    with np.errstate(divide="ignore", invalid="ignore"):
        cap1 = np.where(emed + emin > 0, 2 * emed / (emed + emin) * spread, 0.0)
        cap0 = np.where(emax + emed > 0, 2 * emed / (emax + emed) * spread, 0.0)
    return np.where(bits == 1, cap1, cap0)


def embed_rows(rows, bits, strengths, group_size: int):
    """
    Embed one bit per row of 3L coefficients.

    Rows that cannot carry their bit are left unchanged and flagged: silent
    rows, and bit 0 on a row whose med and min groups are both zero.

    :return: (modified rows, clamped strengths, modified mask, skipped mask)
    """
    rows = np.array(rows, dtype=np.float64)
    bits = np.asarray(bits, dtype=np.uint8)
    strengths = np.broadcast_to(np.asarray(strengths, dtype=np.float64), bits.shape)
    n = len(rows)

    energies = _row_energies(rows, group_size)
    order = _ordering(energies)
    emax, emed, emin = np.take_along_axis(energies, order, axis=1).T
    is_one = bits == 1
    skipped = (energies.sum(axis=1) < DEGENERATE_EPS) | (~is_one & (emed < DEGENERATE_EPS))

    clamped = np.minimum(strengths, (1 - CAP_MARGIN) * _caps(bits, emax, emed, emin))
    a = emax - emed
    b = emed - emin
    modified = np.where(is_one, a - b < clamped, b - a < clamped) & ~skipped

    beta = np.where(is_one, clamped - a + b, clamped + a - b)
    factor = np.zeros(n)
    denom = emax + 2 * emed + emin
    factor[modified] = beta[modified] / denom[modified]

    sign = np.where(is_one, 1.0, -1.0)
    role_gain = np.stack([1 + sign * factor, 1 - sign * factor, 1 + sign * factor], axis=1)
    gains = np.empty_like(role_gain)
    np.put_along_axis(gains, order, role_gain, axis=1)

    out = (rows.reshape(n, 3, group_size) * gains[:, :, None]).reshape(n, 3 * group_size)
    return out, clamped, modified, skipped


def boost_rows(rows, bits, targets, group_size: int):
    """
    Raise every row's margin to its target without reordering the groups.

    Bit 1 grows the max group alone, bit 0 grows the max and med groups by the
    same factor; either way A - B moves towards the bit and no group changes
    rank. Used after embed_rows on rows the ordering cap held below target.

    :return: (rows, boosted mask)
    """
    rows = np.array(rows, dtype=np.float64)
    bits = np.asarray(bits, dtype=np.uint8)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.float64), bits.shape)
    n = len(rows)

    energies = _row_energies(rows, group_size)
    order = _ordering(energies)
    emax, emed, emin = np.take_along_axis(energies, order, axis=1).T
    is_one = bits == 1
    diff = (emax - emed) - (emed - emin)
    achieved = np.where(is_one, diff, -diff)
    lift = np.where(is_one, emax, 2 * emed - emax)  # margin gained per unit of growth
    boosted = (achieved < targets) & (lift > DEGENERATE_EPS)

    growth = np.zeros(n)
    growth[boosted] = (targets - achieved)[boosted] / lift[boosted]
    role_gain = np.stack([1 + growth, np.where(is_one, 1.0, 1 + growth), np.ones(n)], axis=1)
    gains = np.empty_like(role_gain)
    np.put_along_axis(gains, order, role_gain, axis=1)

    out = (rows.reshape(n, 3, group_size) * gains[:, :, None]).reshape(n, 3 * group_size)
    return out, boosted


def _group_size_of(coeffs: np.ndarray) -> int:
    if coeffs.ndim != 1 or len(coeffs) == 0 or len(coeffs) % 3:
        raise ValueError(f"expected 3L coefficients, got {len(coeffs)}")
    return len(coeffs) // 3


# ----------------------------
# Per-bit operations
# ----------------------------
def group_energies(coeffs, group_size: int) -> GroupEnergies:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape != (3 * group_size,):
        raise ValueError(f"expected exactly {3 * group_size} coefficients, got {c.size}")
    energies = _row_energies(c[None, :], group_size)
    order = _ordering(energies)[0]
    e1, e2, e3 = (float(e) for e in energies[0])
    return GroupEnergies(e1, e2, e3, tuple(int(i) for i in order))


def energy_diffs(g: GroupEnergies) -> Tuple[float, float]:
    """(A, B) = (Emax - Emed, Emed - Emin)."""
    return g.emax - g.emed, g.emed - g.emin


def embedding_strength(coeffs, d: float) -> float:
    """S = d · Σ|c| / 3."""
    if not d > 0:
        raise ValueError(f"strength factor d must be > 0, got {d}")
    return d * float(np.sum(np.abs(np.asarray(coeffs, dtype=np.float64)))) / 3.0


def strength_cap(bit: int, g: GroupEnergies) -> float:
    """
    Largest S that keeps Emax >= Emed >= Emin after embedding `bit`.

    :raises DegenerateFrameError: all three energies are zero.
    """
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    if g.emax + g.emed + g.emin <= 0:
        raise DegenerateFrameError("strength cap undefined for all-zero energies")
    return float(_caps(np.array([bit]), np.array([g.emax]), np.array([g.emed]), np.array([g.emin]))[0])


def embed_bit(coeffs, bit: int, strength: float) -> np.ndarray:
    """
    Write `bit` into 3L coefficients with margin min(S, (1 - 1e-6)·cap).

    Coefficients already satisfying the bit's inequality are returned unchanged.

    :raises DegenerateFrameError: Σ|c| < 1e-12, or bit 0 with the med and min groups both zero.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    group_size = _group_size_of(c)
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    if strength < 0:
        raise ValueError(f"strength must be >= 0, got {strength}")
    if np.sum(np.abs(c)) < DEGENERATE_EPS:
        raise DegenerateFrameError("coefficients are silent; bit cannot be embedded")

    out, _, _, skipped = embed_rows(c[None, :], np.array([bit]), strength, group_size)
    if skipped[0]:
        raise DegenerateFrameError("bit 0 needs energy in at least two groups")
    return out[0]


# ----------------------------
# Frame layout and bit stream
# ----------------------------
def layout_frames(total_samples: int, cfg: EmbedConfig) -> FrameLayout:
    """
    :raises AudioTooShortError: fewer samples than one frame.
    """
    frame = cfg.frame_samples
    if total_samples < frame:
        raise AudioTooShortError(f"audio has {total_samples} samples, one frame needs {frame}")
    return FrameLayout(cfg.n1_samples, cfg.n2_samples, frame, total_samples // frame)


def expected_payload(payload, cfg: EmbedConfig, frame_count: int) -> np.ndarray:
    """Payload bits cycled to fill every frame, shape (frame_count, payload_bits)."""
    bits = np.asarray(payload, dtype=np.uint8)
    return np.resize(bits, frame_count * cfg.payload_bits).reshape(frame_count, cfg.payload_bits)


def build_bit_stream(payload, cfg: EmbedConfig, frame_count: int) -> np.ndarray:
    per_frame = expected_payload(payload, cfg, frame_count)
    sync = np.broadcast_to(cfg.sync.bits, (frame_count, cfg.sync.length))
    return np.concatenate([sync, per_frame], axis=1).reshape(-1)


# ----------------------------
# Whole-signal embedding
# ----------------------------
QualityFn = Callable[[float, np.ndarray, np.ndarray], float]


def embed(audio: AudioBuffer, payload, cfg: EmbedConfig = None,
          quality: QualityFn = coefficient_snr) -> Tuple[AudioBuffer, EmbedReport]:
    """
    Watermark `audio` with `payload` (cycled across frames).

    `quality(signal_energy, approx, marked_approx)` scores a candidate in dB and
    must reach cfg.snr_target_db; the default is the coefficient-domain SNR.
    Until it does, d is multiplied by cfg.decay, at most cfg.max_iterations times.
    Blocks whose ordering cap keeps the margin under min(S, margin_floor·Σ|c|)
    are boosted up to it (see boost_rows).

    :raises ValueError: empty payload or non-binary payload bits.
    :raises AudioTooShortError: audio shorter than one frame.
    :raises DegenerateFrameError: every block is silent.
    """
    cfg = cfg or EmbedConfig()
    payload = np.asarray(payload, dtype=np.uint8).reshape(-1)
    if len(payload) == 0:
        raise ValueError("payload must contain at least one bit")
    if np.any(payload > 1):
        raise ValueError("payload bits must be 0 or 1")

    layout = layout_frames(len(audio), cfg)
    block = cfg.block_samples
    used = layout.frame_count * layout.frame_samples

    x = audio.samples
    blocks = x[:used].reshape(-1, block)
    approx = block_approx(blocks, cfg.levels)
    stream = build_bit_stream(payload, cfg, layout.frame_count)
    base = np.abs(approx).sum(axis=1) / 3.0
    signal_energy = float(np.sum(x ** 2))
    if np.all(3 * base < DEGENERATE_EPS):
        raise DegenerateFrameError("every block is silent; nothing can be embedded")

    d = cfg.strength
    for iteration in range(1, cfg.max_iterations + 1):
        marked, _, modified, skipped_rows = embed_rows(approx, stream, d * base, cfg.group_size)
        boosted = np.zeros(len(stream), dtype=bool)
        if cfg.margin_floor > 0:
            targets = np.where(skipped_rows, 0.0, np.minimum(d * base, 3 * cfg.margin_floor * base))
            marked, boosted = boost_rows(marked, stream, targets, cfg.group_size)
        score = quality(signal_energy, approx, marked)
        logger.debug(f"strength d={d:.5f}: quality {score:.2f} dB")
        if score >= cfg.snr_target_db:
            break
        if iteration == cfg.max_iterations:
            logger.warning(f"quality {score:.2f} dB still below target {cfg.snr_target_db} dB "
                           f"after {iteration} iterations (d={d:.5f})")
            break
        d *= cfg.decay

    delta = block_synthesize_approx(marked - approx, cfg.levels).reshape(-1)
    out = x.copy()
    out[:used] += delta

    per_frame = cfg.blocks_per_frame
    frame_signal = np.sum(blocks.reshape(layout.frame_count, -1) ** 2, axis=1)
    frame_noise = np.sum(((marked - approx) ** 2).reshape(layout.frame_count, -1), axis=1)
    frame_snr = []
    for s_e, n_e in zip(frame_signal, frame_noise):
        if n_e == 0 or s_e == 0:
            frame_snr.append(None)
        else:
            frame_snr.append(float(10 * np.log10(s_e / n_e)))

    skipped_rows = skipped_rows.reshape(layout.frame_count, per_frame)
    skipped = np.argwhere(skipped_rows[:, cfg.sync.length:])
    skipped_bits = [int(f * cfg.payload_bits + j) for f, j in skipped]
    skipped_sync = int(np.count_nonzero(skipped_rows[:, :cfg.sync.length]))
    if skipped_bits or skipped_sync:
        logger.warning(f"{len(skipped_bits)} payload and {skipped_sync} sync bits fall on blocks "
                       f"that cannot carry them and were skipped")

    report = EmbedReport(
        strength=d,
        snr_db=float(score),
        iterations=iteration,
        frame_count=layout.frame_count,
        payload_bits=layout.frame_count * cfg.payload_bits,
        modified_bits=int(np.count_nonzero(modified | boosted)),
        frame_snr_db=frame_snr,
        skipped_bits=skipped_bits,
        skipped_sync_bits=skipped_sync,
        boosted_bits=int(np.count_nonzero(boosted)),
    )
    logger.info(f"embedded {layout.frame_count} frames, d={d:.4f}, SNR {score:.2f} dB")
    return audio.with_samples(out), report


def main():
    parser = argparse.ArgumentParser(description="Embed a watermark payload into a 16-bit PCM WAV file.")
    parser.add_argument("input", type=Path, help="Path to the input WAV file")
    parser.add_argument("output", type=Path, help="Path for the watermarked WAV file")
    parser.add_argument("--payload", type=str, required=True, help="Payload as a hex string (big-endian bits)")
    parser.add_argument("--strength", type=float, default=DEFAULT_STRENGTH, help="Initial strength factor d")
    parser.add_argument("--snr-target", type=float, default=DEFAULT_SNR_TARGET_DB, help="Minimum SNR in dB")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    if not args.input.exists():
        raise SystemExit(f"Input file not found: {args.input}")

    payload = np.unpackbits(np.frombuffer(bytes.fromhex(args.payload), dtype=np.uint8))
    cfg = EmbedConfig(strength=args.strength, snr_target_db=args.snr_target)
    try:
        marked, report = embed(load_wav(args.input), payload, cfg)
    except (AudioTooShortError, DegenerateFrameError) as e:
        raise SystemExit(f"Error: {e}")

    save_wav(args.output, marked)
    print(json.dumps(report.to_dict(), indent=2))


if __name__ == "__main__":
    main()
