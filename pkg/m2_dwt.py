#!/usr/bin/env python3
"""
K-level db2 discrete wavelet transform with periodic extension.

The transform is orthonormal: energy is preserved and edits confined to the
approximation band never leak into the detail bands. Inputs must already be
a multiple of 2^K samples long; nothing is padded here.

Usage:
    python m2_dwt.py <wav_file> [--levels 6]
"""

import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
import pywt

logger = logging.getLogger(__name__)

WAVELET = "db2"
MODE = "periodization"


class DwtLengthError(ValueError):
    """Raised when a signal or pyramid has lengths incompatible with the level count."""
    pass


@dataclass
class DwtPyramid:
    approx: np.ndarray
    details: List[np.ndarray] = field(default_factory=list)  # coarsest first, finest last
    levels: int = 1
    original_length: int = 0

    def coeffs(self) -> List[np.ndarray]:
        """Coefficient list in pywt order [cA_K, cD_K, ..., cD_1]."""
        return [self.approx, *self.details]


def _check_levels(levels: int):
    if levels < 1:
        raise DwtLengthError(f"level count must be >= 1, got {levels}")


def forward_dwt(samples, levels: int) -> DwtPyramid:
    """
    Decompose `samples` into one approximation band and `levels` detail bands.

    :raises DwtLengthError: length not divisible by 2^levels.
    """
    _check_levels(levels)
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if n == 0 or n % (1 << levels):
        raise DwtLengthError(f"length {n} is not a positive multiple of 2^{levels}")

    coeffs = pywt.wavedec(x, WAVELET, mode=MODE, level=levels)
    return DwtPyramid(approx=coeffs[0], details=list(coeffs[1:]), levels=levels, original_length=n)


def inverse_dwt(pyr: DwtPyramid) -> np.ndarray:
    """
    Exact synthesis inverse of forward_dwt.

    :raises DwtLengthError: band lengths inconsistent with levels and original_length.
    """
    _check_levels(pyr.levels)
    n = pyr.original_length
    if n <= 0 or n % (1 << pyr.levels):
        raise DwtLengthError(f"original_length {n} is not a positive multiple of 2^{pyr.levels}")
    if len(pyr.details) != pyr.levels:
        raise DwtLengthError(f"expected {pyr.levels} detail bands, got {len(pyr.details)}")
    if len(pyr.approx) != n >> pyr.levels:
        raise DwtLengthError(f"approx band has {len(pyr.approx)} coefficients, expected {n >> pyr.levels}")
    for j, band in enumerate(pyr.details):
        expected = n >> (pyr.levels - j)
        if len(band) != expected:
            raise DwtLengthError(f"detail band {j} has {len(band)} coefficients, expected {expected}")

    return pywt.waverec(pyr.coeffs(), WAVELET, mode=MODE)


def block_approx(blocks: np.ndarray, levels: int) -> np.ndarray:
    """Approximation band of every row of a (n_blocks, block_len) array."""
    if blocks.shape[-1] % (1 << levels):
        raise DwtLengthError(f"block length {blocks.shape[-1]} is not a multiple of 2^{levels}")
    return pywt.wavedec(blocks, WAVELET, mode=MODE, level=levels, axis=-1)[0]


def block_synthesize_approx(approx: np.ndarray, levels: int) -> np.ndarray:
    """Time-domain rows produced by approximation coefficients alone (details zero)."""
    block_len = approx.shape[-1] << levels
    coeffs = [approx]
    for j in range(levels):
        width = block_len >> (levels - j)
        coeffs.append(np.zeros(approx.shape[:-1] + (width,)))
    return pywt.waverec(coeffs, WAVELET, mode=MODE, axis=-1)


def main():
    parser = argparse.ArgumentParser(description="Print per-band energies of a WAV file's db2 decomposition.")
    parser.add_argument("wav_file", type=Path, help="Path to a 16-bit PCM WAV file")
    parser.add_argument("--levels", type=int, default=6, help="Decomposition levels (default: 6)")
    args = parser.parse_args()

    from m1_wav_io import load_wav

    buf = load_wav(args.wav_file)
    usable = len(buf) - len(buf) % (1 << args.levels)
    pyr = forward_dwt(buf.samples[:usable], args.levels)

    total = float(np.sum(buf.samples[:usable] ** 2)) or 1.0
    print(f"{'Band':<10} {'Coeffs':>8} {'Energy %':>10}")
    print("-" * 30)
    print(f"{'approx':<10} {len(pyr.approx):>8} {100 * np.sum(pyr.approx ** 2) / total:>10.3f}")
    for j, band in enumerate(pyr.details):
        print(f"{'detail ' + str(args.levels - j):<10} {len(band):>8} {100 * np.sum(band ** 2) / total:>10.3f}")


if __name__ == "__main__":
    main()
