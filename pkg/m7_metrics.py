#!/usr/bin/env python3
"""
Quality and robustness measures: SNR, amplitude normalization, BER and capacity.

Usage:
    python m7_metrics.py <original.wav> <watermarked.wav>
"""

import argparse
import math
from pathlib import Path

import numpy as np


def _pair(reference, test):
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError(f"length mismatch: {ref.size} vs {tst.size}")
    return ref, tst


def snr(reference, test) -> float:
    """
    10·log10(Σf² / Σ(f - f')²) in dB; identical signals give math.inf.

    :raises ValueError: length mismatch or all-zero reference.
    """
    ref, tst = _pair(reference, test)
    signal = float(np.sum(ref ** 2))
    if signal == 0:
        raise ValueError("reference signal is all zero")
    noise = float(np.sum((ref - tst) ** 2))
    if noise == 0:
        return math.inf
    return 10 * math.log10(signal / noise)


def normalize_amplitude(reference, test) -> np.ndarray:
    """Rescale `test` so its absolute sum equals the reference's."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    test_abs = float(np.sum(np.abs(tst)))
    if test_abs == 0:
        raise ValueError("test signal is all zero")
    return tst * (float(np.sum(np.abs(ref))) / test_abs)


def ber(sent, received) -> float:
    """Percentage of mismatching bits."""
    a, b = _pair(sent, received)
    if a.size == 0:
        raise ValueError("cannot compute BER of empty bit sequences")
    return 100.0 * np.count_nonzero(a != b) / a.size


def capacity(sample_rate: float, levels: int, group_size: int) -> float:
    """Bits per second: R / (3·L·2^K)."""
    if sample_rate <= 0 or levels <= 0 or group_size <= 0:
        raise ValueError(f"sample rate, levels and group size must be positive, got "
                         f"{sample_rate}, {levels}, {group_size}")
    return sample_rate / (3 * group_size * 2 ** levels)


def coefficient_snr(signal_energy: float, approx, marked_approx) -> float:
    """
    Watermarked SNR from low-band coefficient changes only.

    With an orthonormal DWT, Σ(f - f')² equals Σ(c - c')² when only the
    approximation band changed.
    """
    if signal_energy <= 0:
        raise ValueError("signal energy must be positive")
    a, m = _pair(approx, marked_approx)
    noise = float(np.sum((a - m) ** 2))
    if noise == 0:
        return math.inf
    return 10 * math.log10(signal_energy / noise)


def resynchronized_snr(reference, observed) -> float:
    """
    SNR of a channel output after gain normalization and length resynchronization.

    `observed` may differ in length from `reference` (time-scaled); it is
    gain-normalized, linearly resampled back to the reference length and compared.
    """
    from m5_extract import resynchronize

    ref = np.asarray(reference, dtype=np.float64)
    normalized = normalize_amplitude(ref, observed)
    if len(normalized) != len(ref):
        normalized = resynchronize(normalized, len(ref))
    return snr(ref, normalized)


def main():
    parser = argparse.ArgumentParser(description="Compare an original and a processed WAV file.")
    parser.add_argument("original", type=Path, help="Reference WAV file")
    parser.add_argument("processed", type=Path, help="Watermarked or attacked WAV file")
    args = parser.parse_args()

    from m1_wav_io import load_wav

    ref = load_wav(args.original)
    obs = load_wav(args.processed)
    if len(ref) == len(obs):
        print(f"SNR:                 {snr(ref.samples, obs.samples):.2f} dB")
    print(f"Resynchronized SNR:  {resynchronized_snr(ref.samples, obs.samples):.2f} dB")
    print(f"Capacity (K=6, L=8): {capacity(ref.sample_rate, 6, 8):.2f} bps")


if __name__ == "__main__":
    main()
