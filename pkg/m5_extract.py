#!/usr/bin/env python3
"""
Blind watermark extraction: sync search, scaling measurement, resynchronization
and bit decoding.

Sync codes are searched at every 2^K-sample offset (one low-band coefficient
per step), accepted within Hamming distance T and refined locally. The search
runs on the audio as received and on copies resampled by every α of a small
grid around 1, so a stretched sync region still lines up with its blocks.
The spacing of consecutive sync starts against the nominal frame length gives
the temporal scaling factor α; each payload region is then linearly resampled
back to its nominal length before the energy relationship of every block is read.

Usage:
    python m5_extract.py watermarked.wav [--threshold 5] [--no-resync] [--report report.json]
"""

import argparse
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from rich.logging import RichHandler

from m1_wav_io import AudioBuffer, load_wav
from m2_dwt import block_approx, forward_dwt
from m4_embed import EmbedConfig

logger = logging.getLogger(__name__)

MAX_ALPHA_DEVIATION = 0.01
ALPHA_SEARCH_STEP = 0.001
GRID_PARTNER_FRAMES = 4
GRID_ALPHA_TOLERANCE = 1e-4  # relative error of the lattice α
ALPHA_GRID = tuple(
    round(1.0 + k * ALPHA_SEARCH_STEP, 6)
    for k in range(-int(round(MAX_ALPHA_DEVIATION / ALPHA_SEARCH_STEP)),
                   int(round(MAX_ALPHA_DEVIATION / ALPHA_SEARCH_STEP)) + 1)
    if k != 0
)


class NoSyncFoundError(RuntimeError):
    """Raised when no synchronization code is present in the audio."""
    pass


@dataclass
class SyncHit:
    start_sample: int
    distance: int
    alpha: float = 1.0
    score: float = 0.0  # soft agreement of block margins with the code


@dataclass
class FrameDecode:
    index: int
    start_sample: int
    alpha: float
    distance: int
    bits: np.ndarray
    valid: np.ndarray  # False where the block was silent


@dataclass
class ExtractReport:
    hits: List[SyncHit] = field(default_factory=list)
    frames: List[FrameDecode] = field(default_factory=list)
    bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    skipped_bits: List[int] = field(default_factory=list)

    @property
    def frames_decoded(self) -> int:
        return len(self.frames)

    def to_dict(self) -> dict:
        return {
            "frames_decoded": self.frames_decoded,
            "bits": "".join(str(int(b)) for b in self.bits),
            "skipped_bits": self.skipped_bits,
            "hits": [
                {"start_sample": h.start_sample, "distance": h.distance,
                 "alpha": round(h.alpha, 8), "score": round(h.score, 6)}
                for h in self.hits
            ],
            "frames": [
                {"index": f.index, "start_sample": f.start_sample, "alpha": round(f.alpha, 8),
                 "distance": f.distance, "bits": "".join(str(int(b)) for b in f.bits)}
                for f in self.frames
            ],
        }


# ----------------------------
# Resynchronization
# ----------------------------
def scaling_factor(n2_observed: int, n2_expected: int) -> float:
    """α = N2' / N2."""
    if n2_expected <= 0:
        raise ValueError(f"expected length must be positive, got {n2_expected}")
    if n2_observed <= 0:
        raise ValueError(f"observed length must be positive, got {n2_observed}")
    return n2_observed / n2_expected


def resynchronize(observed, n2: int) -> np.ndarray:
    """
    Linearly resample `observed` (N2' samples) to exactly `n2` samples.

    Output sample i reads position α·i with α = N2'/n2; the first and last
    outputs are pinned to the first and last observed samples.
    """
    x = np.asarray(observed, dtype=np.float64)
    n_obs = len(x)
    if n_obs < 2 or n2 < 2:
        raise ValueError(f"resynchronization needs at least 2 samples on both sides, got {n_obs} -> {n2}")

    alpha = scaling_factor(n_obs, n2)
    pos = alpha * np.arange(n2)
    base = np.floor(pos).astype(np.int64)
    beta = pos - base
    base = np.minimum(base, n_obs - 1)
    nxt = np.minimum(base + 1, n_obs - 1)

    out = (1.0 - beta) * x[base] + beta * x[nxt]
    out[0] = x[0]
    out[-1] = x[-1]
    return out


# ----------------------------
# Bit decoding
# ----------------------------
def decode_rows(rows: np.ndarray, group_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Decode one bit per row of 3L coefficients.

    :return: (bits, normalized margins (A - B)/Σ|c|, silent mask)
    """
    energies = np.abs(rows).reshape(len(rows), 3, group_size).sum(axis=2)
    ordered = -np.sort(-energies, axis=1)
    diff = (ordered[:, 0] - ordered[:, 1]) - (ordered[:, 1] - ordered[:, 2])
    total = energies.sum(axis=1)
    silent = total < 1e-12
    margins = np.divide(diff, total, out=np.zeros_like(diff), where=~silent)
    return (diff >= 0).astype(np.uint8), margins, silent


def extract_bit(coeffs) -> int:
    """1 if A'' - B'' >= 0 else 0."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim != 1 or len(c) == 0 or len(c) % 3:
        raise ValueError(f"expected 3L coefficients, got {c.size}")
    bits, _, _ = decode_rows(c[None, :], len(c) // 3)
    return int(bits[0])


def _decode_region(region: np.ndarray, n_blocks: int, cfg: EmbedConfig):
    rows = region[:n_blocks * cfg.block_samples].reshape(n_blocks, cfg.block_samples)
    return decode_rows(block_approx(rows, cfg.levels), cfg.group_size)


def _region(x: np.ndarray, start: int, n_nominal: int, alpha: float) -> Optional[np.ndarray]:
    """Observed samples for a nominal region, resampled to n_nominal when α != 1."""
    if start < 0:
        return None
    if alpha == 1.0:
        if start + n_nominal > len(x):
            return None
        return x[start:start + n_nominal]
    n_obs = int(round(alpha * n_nominal))
    if start + n_obs > len(x):
        return None
    return resynchronize(x[start:start + n_obs], n_nominal)


def _sync_match(x: np.ndarray, start: int, cfg: EmbedConfig, alpha: float = 1.0) -> Optional[Tuple[int, float]]:
    region = _region(x, start, cfg.n1_samples, alpha)
    if region is None:
        return None
    bits, margins, _ = _decode_region(region, cfg.sync.length, cfg)
    code = cfg.sync.bits
    distance = int(np.count_nonzero(bits != code))
    score = float(margins @ (2.0 * code - 1.0))
    return distance, score


def _best_offset(x, offsets, cfg: EmbedConfig, alpha: float) -> Optional[SyncHit]:
    best = None
    for offset in offsets:
        match = _sync_match(x, offset, cfg, alpha)
        if match is None:
            continue
        distance, score = match
        if best is None or (distance, -score) < (best.distance, -best.score):
            best = SyncHit(int(offset), distance, alpha, score)
    return best


# ----------------------------
# Sync search
# ----------------------------
def _suppress(hits: List[SyncHit], radius: int) -> List[SyncHit]:
    """Keep the best hit among any that start closer than `radius` samples; unscaled hits win ties."""
    kept: List[SyncHit] = []
    for hit in sorted(hits, key=lambda h: (h.distance, h.alpha != 1.0, -h.score, h.start_sample)):
        if all(abs(hit.start_sample - k.start_sample) >= radius for k in kept):
            kept.append(hit)
    return sorted(kept, key=lambda h: h.start_sample)


def _refine(x: np.ndarray, hit: SyncHit, cfg: EmbedConfig) -> Optional[SyncHit]:
    if hit.distance == 0 and hit.alpha == 1.0:
        return hit
    coarse = 1 << cfg.levels
    step = max(1, 1 << (cfg.levels - 2))
    offsets = range(hit.start_sample - coarse, hit.start_sample + coarse + 1, step)
    return _best_offset(x, offsets, cfg, hit.alpha)


def _window_candidates(bits: np.ndarray, margins: np.ndarray, cfg: EmbedConfig):
    """(window index, distance, score) for every Ns-block window within T of the code."""
    ns = cfg.sync.length
    if len(bits) < ns:
        return
    code = cfg.sync.bits
    signs = 2.0 * code - 1.0
    distances = np.count_nonzero(sliding_window_view(bits, ns) != code, axis=1)
    for j in np.flatnonzero(distances <= cfg.threshold):
        yield int(j), int(distances[j]), float(margins[j:j + ns] @ signs)


def scan_phase(audio: AudioBuffer, phase: int, cfg: EmbedConfig = None) -> List[SyncHit]:
    """Raw candidates among sync regions starting at phase + j·block, before suppression."""
    cfg = cfg or EmbedConfig()
    x = audio.samples
    block = cfg.block_samples
    n_blocks = max(0, (len(x) - phase) // block)
    if n_blocks < cfg.sync.length:
        return []
    bits, margins, _ = _decode_region(x[phase:], n_blocks, cfg)
    return [SyncHit(phase + j * block, distance, 1.0, score)
            for j, distance, score in _window_candidates(bits, margins, cfg)]


def _scan_scaled(x: np.ndarray, alpha: float, cfg: EmbedConfig) -> List[SyncHit]:
    """
    Candidates on the timeline resampled by 1/α, every 2^K offset at once.

    One transform of the whole resampled signal stands in for the per-block
    ones; only the few coefficients next to a block edge differ, so the
    distances are approximate until _refine recomputes them.
    """
    step = 1 << cfg.levels
    n_out = int((len(x) - 1) / alpha) + 1
    n_out -= n_out % step
    if n_out < cfg.n1_samples:
        return []
    y = np.interp(np.arange(n_out) * alpha, np.arange(len(x)), x)
    approx = forward_dwt(y, cfg.levels).approx

    per_block = 3 * cfg.group_size
    if len(approx) < per_block * cfg.sync.length:
        return []
    bits, margins, _ = decode_rows(sliding_window_view(approx, per_block), cfg.group_size)
    hits = []
    for phase in range(per_block):
        for j, distance, score in _window_candidates(bits[phase::per_block], margins[phase::per_block], cfg):
            start = (phase + j * per_block) * step
            hits.append(SyncHit(int(round(start * alpha)), distance, alpha, score))
    return hits


def find_syncs(audio: AudioBuffer, cfg: EmbedConfig = None) -> List[SyncHit]:
    """
    All sync regions within Hamming distance T of the code, one hit per region.

    Each hit carries the α of the scan that found it. Returns an empty list
    when the audio is shorter than one sync region.
    """
    cfg = cfg or EmbedConfig()
    x = audio.samples
    n1 = cfg.n1_samples
    if len(x) < n1:
        return []

    candidates: List[SyncHit] = []
    for phase in range(0, cfg.block_samples, 1 << cfg.levels):
        candidates.extend(scan_phase(audio, phase, cfg))
    for alpha in ALPHA_GRID:
        candidates.extend(_scan_scaled(x, alpha, cfg))

    coarse_hits = _suppress(candidates, n1)
    logger.debug(f"{len(candidates)} coarse candidates, {len(coarse_hits)} after suppression")
    refined = [_refine(x, hit, cfg) for hit in coarse_hits]
    accepted = [h for h in refined if h is not None and h.distance <= cfg.threshold]
    return _on_grid(_suppress(accepted, n1), cfg)


def _frame_gap_alpha(gap: int, frame: int, alpha_hint: float = 1.0) -> Optional[float]:
    periods = int(round(gap / (alpha_hint * frame)))
    if periods < 1:
        return None
    alpha = gap / (periods * frame)
    return alpha if abs(alpha - 1.0) <= MAX_ALPHA_DEVIATION else None


def _grid_alpha(hits: List[SyncHit], frame: int) -> Optional[float]:
    """Median α over hit pairs a few frames apart, or over any pair when none are that close."""
    near, far = [], []
    for i, a in enumerate(hits):
        for b in hits[i + 1:]:
            gap = b.start_sample - a.start_sample
            alpha = _frame_gap_alpha(gap, frame, a.alpha)
            if alpha is None:
                continue
            (near if round(gap / (alpha * frame)) <= GRID_PARTNER_FRAMES else far).append(alpha)
    measured = sorted(near or far)
    # lower median, so at least one measured pair lies exactly on the lattice
    return measured[(len(measured) - 1) // 2] if measured else None


def _on_grid(hits: List[SyncHit], cfg: EmbedConfig) -> List[SyncHit]:
    """
    Drop hits that sit off the frame lattice formed by the others.

    A hit is on the lattice when another hit lies a whole number of frames
    away, frames being stretched by the median α of the hit pairs. Nothing is
    dropped unless at least one such pair exists.
    """
    frame = cfg.frame_samples
    alpha = _grid_alpha(hits, frame)
    if alpha is None:
        return hits
    slack = 2 << cfg.levels

    def paired(a: SyncHit, b: SyncHit) -> bool:
        gap = abs(b.start_sample - a.start_sample)
        periods = int(round(gap / (alpha * frame)))
        return periods >= 1 and abs(gap - periods * alpha * frame) <= slack + periods * frame * GRID_ALPHA_TOLERANCE

    on_grid = [any(paired(hit, other) for other in hits if other is not hit) for hit in hits]
    if not any(on_grid):
        return hits
    dropped = [h.start_sample for h, ok in zip(hits, on_grid) if not ok]
    if dropped:
        logger.debug(f"dropping off-grid sync hits at {dropped}")
    return [h for h, ok in zip(hits, on_grid) if ok]


def _measure_alphas(hits: List[SyncHit], frame: int) -> List[float]:
    """α per hit from the next hit whose spacing is a whole number of frames."""
    measured: List[Optional[float]] = [None] * len(hits)
    for i, hit in enumerate(hits):
        for later in hits[i + 1:]:
            alpha = _frame_gap_alpha(later.start_sample - hit.start_sample, frame, hit.alpha)
            if alpha is not None:
                measured[i] = alpha
                break

    # hits without a successor reuse the last measurement, a lone hit keeps its scan α
    alphas, last = [], None
    for hit, alpha in zip(hits, measured):
        if alpha is None:
            alphas.append(last if last is not None else hit.alpha)
        else:
            alphas.append(alpha)
            last = alpha
    return alphas


def _anchor(x: np.ndarray, hit: SyncHit, alpha: float, cfg: EmbedConfig) -> SyncHit:
    """Re-align a sync start with the sync region resampled by α."""
    if alpha == 1.0 and hit.distance == 0:
        return SyncHit(hit.start_sample, hit.distance, alpha, hit.score)

    coarse = max(1, 1 << (cfg.levels - 2))
    fine = max(1, 1 << (cfg.levels - 4))
    radius = int(np.ceil(abs(alpha - 1.0) * cfg.n1_samples)) + (1 << cfg.levels)
    start = hit.start_sample

    best = _best_offset(x, range(start - radius, start + radius + 1, coarse), cfg, alpha)
    if best is None:
        return SyncHit(start, hit.distance, alpha, hit.score)
    around = best.start_sample
    best = _best_offset(x, range(around - coarse + fine, around + coarse, fine), cfg, alpha) or best
    return best


# ----------------------------
# Extraction
# ----------------------------
def extract(audio: AudioBuffer, cfg: EmbedConfig = None, sync: bool = True, resync: bool = True) -> ExtractReport:
    """
    Recover the payload bit stream from watermarked audio; no original needed.

    `sync=False` skips the search and decodes frames at nominal offsets k·(n1+n2);
    `resync=False` finds sync codes but decodes payloads with α fixed at 1.

    :raises NoSyncFoundError: sync search enabled and no code found.
    """
    cfg = cfg or EmbedConfig()
    x = audio.samples
    frame = cfg.frame_samples

    if sync:
        hits = find_syncs(audio, cfg)
        if not hits:
            raise NoSyncFoundError("no sync found")
        if resync:
            alphas = _measure_alphas(hits, frame)
            hits = [_anchor(x, hit, alpha, cfg) for hit, alpha in zip(hits, alphas)]
            # anchored starts are sample-accurate, so measure α again from them
            for hit, alpha in zip(hits, _measure_alphas(hits, frame)):
                hit.alpha = alpha
        else:
            for hit in hits:
                hit.alpha = 1.0
    else:
        hits = []
        for start in range(0, len(x) - frame + 1, frame):
            match = _sync_match(x, start, cfg)
            distance, score = match if match is not None else (cfg.sync.length, 0.0)
            hits.append(SyncHit(start, distance, 1.0, score))

    by_index: Dict[int, FrameDecode] = {}
    for hit in hits:
        alpha = hit.alpha
        payload_start = hit.start_sample + int(round(alpha * cfg.n1_samples))
        region = _region(x, payload_start, cfg.n2_samples, alpha)
        if region is None:
            logger.debug(f"sync at {hit.start_sample} has no complete payload region")
            continue
        bits, _, silent = _decode_region(region, cfg.payload_bits, cfg)
        index = int(round(hit.start_sample / (alpha * frame)))
        decoded = FrameDecode(index, hit.start_sample, alpha, hit.distance, bits, ~silent)
        previous = by_index.get(index)
        if previous is not None:
            logger.warning(f"two syncs map to frame {index}; keeping the closer match")
            if previous.distance <= decoded.distance:
                continue
        by_index[index] = decoded

    frames = [by_index[i] for i in sorted(by_index)]
    bits = [f.bits[f.valid] for f in frames]
    skipped = [f.index * cfg.payload_bits + int(j) for f in frames for j in np.flatnonzero(~f.valid)]
    report = ExtractReport(
        hits=hits,
        frames=frames,
        bits=np.concatenate(bits).astype(np.uint8) if bits else np.zeros(0, dtype=np.uint8),
        skipped_bits=skipped,
    )
    logger.info(f"{len(hits)} sync hits, {report.frames_decoded} frames decoded")
    return report


def main():
    parser = argparse.ArgumentParser(description="Extract a watermark payload from a WAV file.")
    parser.add_argument("input", type=Path, help="Path to the watermarked WAV file")
    parser.add_argument("--threshold", type=int, default=5, help="Sync detection threshold T")
    parser.add_argument("--no-resync", action="store_true", help="Decode payloads without resynchronization")
    parser.add_argument("--report", type=Path, default=None, help="Write the JSON report here")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    if not args.input.exists():
        raise SystemExit(f"Input file not found: {args.input}")

    try:
        report = extract(load_wav(args.input), EmbedConfig(threshold=args.threshold), resync=not args.no_resync)
    except NoSyncFoundError as e:
        raise SystemExit(f"Error: {e}")

    print(f"{report.frames_decoded} frames, {len(report.bits)} bits")
    if args.report:
        args.report.write_text(json.dumps(report.to_dict(), indent=2))


if __name__ == "__main__":
    main()
