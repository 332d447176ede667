#!/usr/bin/env python3
"""
Synthetic test corpus for watermark benchmarking.

Kinds:
    tones   sequence of decaying low-pitched notes, several voices at once
    noise   low-passed Gaussian noise with a slow loudness envelope
    speech  harmonic carrier with vibrato, syllabic 4 Hz AM and pauses
    mixed   sum of the three, peak-normalized

All kinds have strongly non-stationary low-frequency content, which is what
the energy-relationship embedding writes into.

Usage:
    python m0_corpus.py <output_dir> [--seconds 56] [--sample-rate 44100] [--seed 0]
"""

import argparse
import logging
from pathlib import Path
from typing import List

import numpy as np
from rich.logging import RichHandler
from scipy.signal import butter, sosfilt

from m1_wav_io import AudioBuffer, save_wav

logger = logging.getLogger(__name__)

CORPUS_KINDS = ("tones", "noise", "speech", "mixed")
PEAK = 0.8


def _normalize(x: np.ndarray, peak: float = PEAK) -> np.ndarray:
    top = float(np.max(np.abs(x))) if len(x) else 0.0
    return x if top == 0 else x * (peak / top)


def _tones(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    out = np.zeros(n)
    for voice in range(3):
        pos = 0 if voice == 0 else int(rng.uniform(0, 0.3) * sr)
        while pos < n:
            length = int(rng.uniform(0.25, 0.8) * sr)
            freq = 55.0 * 2 ** (rng.integers(0, 36) / 12)
            seg = slice(pos, min(n, pos + 4 * length))
            local = t[seg] - t[pos]
            envelope = np.exp(-local / (length / sr)) * rng.uniform(0.3, 1.0)
            out[seg] += envelope * np.sin(2 * np.pi * freq * local + rng.uniform(0, 2 * np.pi))
            pos += length
    return out


def _noise(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    sos = butter(4, 2000, btype="low", fs=sr, output="sos")
    colored = sosfilt(sos, rng.standard_normal(n))
    t = np.arange(n) / sr
    drift = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(0.2, 0.7) * t + rng.uniform(0, 2 * np.pi))
    return colored * drift


def _speech(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = 120.0 * (1 + 0.08 * np.sin(2 * np.pi * 0.9 * t) + 0.03 * np.sin(2 * np.pi * 5.5 * t))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    carrier = sum(np.sin(k * phase) / k for k in range(1, 11))
    syllables = (0.5 * (1 + np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi)))) ** 2

    # pauses between phrases
    gate = np.ones(n)
    pos = int(rng.uniform(1.0, 3.0) * sr)
    while pos < n:
        pause = int(rng.uniform(0.15, 0.5) * sr)
        gate[pos:pos + pause] = 0.05
        pos += pause + int(rng.uniform(1.0, 3.0) * sr)
    gate = np.convolve(gate, np.ones(441) / 441, mode="same")

    sos = butter(2, [300, 3400], btype="band", fs=sr, output="sos")
    breath = sosfilt(sos, rng.standard_normal(n)) * 0.05
    return (carrier * syllables + breath) * gate


def synthesize(kind: str = "mixed", seconds: float = 56.0, sample_rate: int = 44100, seed: int = 0) -> AudioBuffer:
    """Deterministic synthetic signal of the given kind."""
    if kind not in CORPUS_KINDS:
        raise ValueError(f"unknown corpus kind '{kind}', expected one of {', '.join(CORPUS_KINDS)}")
    if seconds <= 0 or sample_rate <= 0:
        raise ValueError(f"seconds and sample_rate must be positive, got {seconds}, {sample_rate}")

    n = int(round(seconds * sample_rate))
    rng = np.random.default_rng(seed)
    if kind == "tones":
        x = _tones(n, sample_rate, rng)
    elif kind == "noise":
        x = _noise(n, sample_rate, rng)
    elif kind == "speech":
        x = _speech(n, sample_rate, rng)
    else:
        parts = [_normalize(_tones(n, sample_rate, rng)),
                 _normalize(_noise(n, sample_rate, rng)),
                 _normalize(_speech(n, sample_rate, rng))]
        x = 0.5 * parts[0] + 0.3 * parts[1] + 0.6 * parts[2]
    return AudioBuffer(_normalize(x), sample_rate)


def write_corpus(output_dir, seconds: float = 56.0, sample_rate: int = 44100, seed: int = 0) -> List[Path]:
    """Write one WAV per corpus kind; returns the paths in kind order."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, kind in enumerate(CORPUS_KINDS):
        path = output_dir / f"{kind}.wav"
        save_wav(path, synthesize(kind, seconds, sample_rate, seed + i))
        logger.info(f"wrote {path}")
        paths.append(path)
    return paths


def main():
    parser = argparse.ArgumentParser(description="Write the synthetic benchmark corpus.")
    parser.add_argument("output_dir", type=Path, help="Directory for the WAV files")
    parser.add_argument("--seconds", type=float, default=56.0, help="Length of each file in seconds (default: 56)")
    parser.add_argument("--sample-rate", type=int, default=44100, help="Sample rate in Hz (default: 44100)")
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    for path in write_corpus(args.output_dir, args.seconds, args.sample_rate, args.seed):
        print(path)


if __name__ == "__main__":
    main()
