#!/usr/bin/env python3
"""
Synchronization codes: m-sequence generation, thresholded matching and the
error-probability analytics used to choose the detection threshold T.

Usage:
    python m3_sync_codes.py [--degree 5] [--thresholds 5,6,7,8] [--pd 0.004375,0.000625]
"""

import argparse
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.stats import binom

# feedback taps (exponents k of x^k, excluding x^degree and 1) of one primitive
# polynomial per degree; degree 5 is x^5 + x^2 + 1
PRIMITIVE_TAPS: Dict[int, Tuple[int, ...]] = {
    2: (1,),
    3: (1,),
    4: (1,),
    5: (2,),
    6: (1,),
    7: (1,),
    8: (4, 3, 2),
    9: (4,),
    10: (3,),
}

DEFAULT_DEGREE = 5
DEFAULT_THRESHOLD = 5
MAX_CODE_LENGTH = 64


@dataclass(frozen=True)
class SyncCode:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or len(bits) == 0:
            raise ValueError("sync code must be a non-empty bit sequence")
        if np.any(bits > 1):
            raise ValueError("sync code bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    @property
    def length(self) -> int:
        return len(self.bits)


def generate_msequence(degree: int = DEFAULT_DEGREE, taps: Sequence[int] = None, seed: int = None) -> SyncCode:
    """
    One period (2^degree - 1 bits) of a maximal-length LFSR sequence.

    The register starts all-ones unless `seed` is given; each step outputs the
    register LSB, then shifts right and feeds bit0 XOR the tap bits into the MSB.

    :raises ValueError: degree < 2, or no known primitive taps for the degree.
    """
    if degree < 2:
        raise ValueError(f"m-sequence degree must be >= 2, got {degree}")
    if taps is None:
        if degree not in PRIMITIVE_TAPS:
            raise ValueError(f"no default primitive polynomial for degree {degree}; pass taps explicitly")
        taps = PRIMITIVE_TAPS[degree]
    if any(not 0 < t < degree for t in taps):
        raise ValueError(f"taps must lie strictly between 0 and {degree}, got {tuple(taps)}")

    mask = (1 << degree) - 1
    state = mask if seed is None else seed & mask
    if state == 0:
        raise ValueError("LFSR seed must be non-zero")

    length = (1 << degree) - 1
    bits = np.zeros(length, dtype=np.uint8)
    for i in range(length):
        bits[i] = state & 1
        feedback = state & 1
        for t in taps:
            feedback ^= (state >> t) & 1
        state = (state >> 1) | (feedback << (degree - 1))
    return SyncCode(bits)


def _as_bits(seq) -> np.ndarray:
    return np.asarray(seq, dtype=np.uint8)


def hamming_distance(a, b) -> int:
    a, b = _as_bits(a), _as_bits(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return int(np.count_nonzero(a != b))


def is_sync(candidate, code: SyncCode, threshold: int = DEFAULT_THRESHOLD) -> bool:
    """True when the candidate differs from the code in at most `threshold` bits."""
    if not 0 <= threshold < code.length:
        raise ValueError(f"threshold must satisfy 0 <= T < {code.length}, got {threshold}")
    return hamming_distance(candidate, code.bits) <= threshold


def false_positive_prob(code_length: int, threshold: int) -> float:
    """Probability that a random candidate matches within `threshold` bits (exact binomial sum)."""
    if not 0 <= threshold < code_length <= MAX_CODE_LENGTH:
        raise ValueError(f"need 0 <= T < Ns <= {MAX_CODE_LENGTH}, got T={threshold}, Ns={code_length}")
    hits = sum(math.comb(code_length, k) for k in range(threshold + 1))
    return float(Fraction(hits, 1 << code_length))


def false_negative_prob(code_length: int, threshold: int, pd: float) -> float:
    """Probability that more than `threshold` of the code bits are corrupted at bit error rate pd."""
    if not 0.0 <= pd <= 1.0:
        raise ValueError(f"detector bit error probability must lie in [0, 1], got {pd}")
    if not 0 <= threshold < code_length:
        raise ValueError(f"need 0 <= T < Ns, got T={threshold}, Ns={code_length}")
    return float(binom.sf(threshold, code_length, pd))


def channel_bit_error_prob(p1: float, pd: float) -> float:
    """Watermark bit error probability including false synchronizations: (1 - P1)·Pd + P1·0.5."""
    for name, p in (("P1", p1), ("Pd", pd)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return (1.0 - p1) * pd + p1 * 0.5


def count_based_false_positive_prob(embedded: int, false_hits: int, missed: int) -> float:
    """False-positive share of detected syncs, y / (x - z + y), from bench counts."""
    detected = embedded - missed + false_hits
    if detected <= 0:
        return 0.0
    return false_hits / detected


def empirical_false_positive_rate(code: SyncCode, threshold: int, trials: int, seed: int = 0,
                                  chunk: int = 1_000_000) -> float:
    """Monte-Carlo match rate of uniformly random candidates against `code`."""
    code_length = code.length
    rng = np.random.default_rng(seed)
    matches = 0
    remaining = trials
    while remaining > 0:
        n = min(chunk, remaining)
        candidates = rng.integers(0, 2, size=(n, code_length), dtype=np.uint8)
        distances = np.count_nonzero(candidates != code.bits, axis=1)
        matches += int(np.count_nonzero(distances <= threshold))
        remaining -= n
    return matches / trials


def main():
    parser = argparse.ArgumentParser(description="Print an m-sequence and its sync error probabilities.")
    parser.add_argument("--degree", type=int, default=DEFAULT_DEGREE, help="LFSR degree (default: 5)")
    parser.add_argument("--thresholds", type=str, default="5,6,7,8", help="Comma-separated thresholds T")
    parser.add_argument("--pd", type=str, default="0.004375,0.000625", help="Comma-separated detector bit error probabilities")
    args = parser.parse_args()

    code = generate_msequence(args.degree)
    print(f"m-sequence ({code.length} bits): {''.join(map(str, code.bits))}")
    print(f"ones: {int(code.bits.sum())}, zeros: {code.length - int(code.bits.sum())}")

    thresholds = [int(t) for t in args.thresholds.split(",")]
    pds = [float(p) for p in args.pd.split(",")]
    print(f"\n{'T':<4} {'P1':>12}" + "".join(f" {'P2(Pd=' + format(p, 'g') + ')':>20}" for p in pds))
    for t in thresholds:
        row = f"{t:<4} {false_positive_prob(code.length, t):>12.3e}"
        row += "".join(f" {false_negative_prob(code.length, t, p):>20.3e}" for p in pds)
        print(row)


if __name__ == "__main__":
    main()
