#!/usr/bin/env python3
"""
Read and write 16-bit PCM RIFF/WAVE audio as AudioBuffer values.

Integer sample v maps to v / 32768, so every 16-bit code survives a
write/read cycle exactly. Multi-channel files are reduced to channel 0.

Usage:
    python m1_wav_io.py <wav_file>        # print format summary
"""

import argparse
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from rich.logging import RichHandler
import soundfile as sf

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0
ACCEPTED_FORMATS = {"WAV", "WAVEX"}
NON_PCM_SUBTYPES = {"FLOAT", "DOUBLE", "ULAW", "ALAW", "IMA_ADPCM", "MS_ADPCM", "GSM610", "G721_32"}


class WavFormatError(ValueError):
    """Raised when bytes are not a 16-bit PCM RIFF/WAVE stream."""
    pass


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioBuffer expects mono samples, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


def read_wav(data: bytes) -> AudioBuffer:
    """
    Parse a 16-bit PCM WAVE byte stream.

    Extra chunks (LIST, fact, ...) are skipped by the parser.

    :raises WavFormatError: malformed RIFF header, non-PCM data or bit depth other than 16.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("malformed RIFF header")

    try:
        with sf.SoundFile(io.BytesIO(data)) as f:
            if f.format not in ACCEPTED_FORMATS:
                raise WavFormatError(f"unsupported container {f.format}")
            if f.subtype in NON_PCM_SUBTYPES:
                raise WavFormatError(f"non-PCM format ({f.subtype})")
            if f.subtype != "PCM_16":
                raise WavFormatError(f"bit depth must be 16, got {f.subtype}")
            frames = f.read(dtype="int16", always_2d=True)
            sample_rate = f.samplerate
    except RuntimeError as e:
        # libsndfile errors surface as RuntimeError subclasses
        raise WavFormatError(f"malformed RIFF/WAVE stream: {e}") from e

    if frames.shape[1] > 1:
        logger.warning(f"{frames.shape[1]}-channel input, keeping channel 0 only")

    return AudioBuffer(frames[:, 0].astype(np.float64) / PCM_SCALE, sample_rate)


def quantize(samples) -> np.ndarray:
    """round(s * 32768) clamped to the int16 range."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(scaled, -32768, 32767).astype(np.int16)


def write_wav(buf: AudioBuffer) -> bytes:
    """Serialize to a canonical 44-byte-header mono PCM_16 WAVE stream."""
    out = io.BytesIO()
    sf.write(out, quantize(buf.samples), buf.sample_rate, format="WAV", subtype="PCM_16")
    return out.getvalue()


def load_wav(path) -> AudioBuffer:
    return read_wav(Path(path).read_bytes())


def save_wav(path, buf: AudioBuffer):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_wav(buf))


def main():
    parser = argparse.ArgumentParser(description="Show the format of a 16-bit PCM WAV file.")
    parser.add_argument("wav_file", type=Path, help="Path to the WAV file")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    if not args.wav_file.exists():
        raise SystemExit(f"Input file not found: {args.wav_file}")

    try:
        buf = load_wav(args.wav_file)
    except WavFormatError as e:
        raise SystemExit(f"Error: {e}")

    peak = float(np.max(np.abs(buf.samples))) if len(buf) else 0.0
    print(f"{args.wav_file.name}: {len(buf)} samples, {buf.sample_rate} Hz, {buf.duration:.3f} s, peak {peak:.4f}")


if __name__ == "__main__":
    main()
