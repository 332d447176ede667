#!/usr/bin/env python3
"""
DA/AD channel simulation and a small catalog of signal-processing attacks.

The channel model is f'(i) = λ·f(i/s) + η: the timeline is stretched by the
temporal scale s via linear interpolation, the amplitude is multiplied by λ
and white Gaussian noise η is added at a given SNR. Every random draw comes
from a numpy Generator seeded with the seed stored in the ChannelSpec or AttackSpec.

Specs can be stored as JSON:

    {"kind": "daad", "parameters": {"temporal_scale": 1.003, "amplitude_scale": 0.7,
                                    "noise_snr_db": 30}, "seed": 7}
    {"kind": "lowpass", "parameters": {"cutoff": 9000}, "seed": 0}

Usage:
    python m6_channel.py input.wav output.wav --spec channel.json
"""

import argparse
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from rich.logging import RichHandler
from scipy.signal import firwin

from m1_wav_io import AudioBuffer, load_wav, save_wav

logger = logging.getLogger(__name__)

ATTACK_KINDS = ("amplitude_scale", "awgn", "requantize", "resample", "lowpass")
FIR_ORDER = 127
ANTI_ALIAS_RATIO = 0.45
TEMPORAL_SCALE_RANGE = (0.995, 1.005)
AMPLITUDE_SCALE_RANGE = (0.5, 2.0)


class AttackSpecError(ValueError):
    """Raised for channel or attack parameters that are invalid for their kind."""
    pass


@dataclass
class ChannelSpec:
    temporal_scale: float = 1.0
    amplitude_scale: float = 1.0
    noise_snr_db: Optional[float] = 30.0  # None disables the noise
    rng_seed: int = 0

    def __post_init__(self):
        if not self.temporal_scale > 0:
            raise AttackSpecError(f"temporal_scale must be > 0, got {self.temporal_scale}")
        if not self.amplitude_scale > 0:
            raise AttackSpecError(f"amplitude_scale must be > 0, got {self.amplitude_scale}")
        if self.noise_snr_db is not None and math.isnan(self.noise_snr_db):
            raise AttackSpecError("noise_snr_db must be a number or None")


@dataclass
class AttackSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackSpecError(f"unknown attack kind '{self.kind}', expected one of {', '.join(ATTACK_KINDS)}")
        p = self.parameters
        try:
            if self.kind == "amplitude_scale":
                if not float(p["gain"]) > 0:
                    raise AttackSpecError(f"gain must be > 0, got {p['gain']}")
            elif self.kind == "awgn":
                if not math.isfinite(float(p["snr_db"])):
                    raise AttackSpecError(f"snr_db must be finite, got {p['snr_db']}")
            elif self.kind == "requantize":
                if not 2 <= int(p["bits"]) <= 32:
                    raise AttackSpecError(f"bits must lie in [2, 32], got {p['bits']}")
            elif self.kind == "resample":
                if not float(p["rate"]) > 0:
                    raise AttackSpecError(f"rate must be > 0, got {p['rate']}")
            elif self.kind == "lowpass":
                if not float(p["cutoff"]) > 0:
                    raise AttackSpecError(f"cutoff must be > 0, got {p['cutoff']}")
        except KeyError as e:
            raise AttackSpecError(f"attack '{self.kind}' is missing parameter {e}") from e
        except (TypeError, ValueError) as e:
            if isinstance(e, AttackSpecError):
                raise
            raise AttackSpecError(f"attack '{self.kind}' has a non-numeric parameter: {e}") from e

    @property
    def label(self) -> str:
        values = ",".join(f"{k}={v}" for k, v in sorted(self.parameters.items()))
        return f"{self.kind}({values})"


# ----------------------------
# Building blocks
# ----------------------------
def _add_noise(x: np.ndarray, snr_db: Optional[float], rng: np.random.Generator) -> np.ndarray:
    if snr_db is None or math.isinf(snr_db):
        return x
    power = float(np.mean(x ** 2)) if len(x) else 0.0
    if power == 0:
        return x
    sigma = math.sqrt(power / 10 ** (snr_db / 10))
    return x + rng.normal(0.0, sigma, len(x))


def _interpolate(x: np.ndarray, out_len: int, step: float) -> np.ndarray:
    """Linear interpolation of x at positions 0, step, 2·step, ...; clamps past the end."""
    positions = np.arange(out_len) * step
    return np.interp(positions, np.arange(len(x)), x)


def _fir_lowpass(x: np.ndarray, cutoff: float, sample_rate: int) -> np.ndarray:
    taps = firwin(FIR_ORDER + 1, cutoff, window="hamming", fs=sample_rate)
    return np.convolve(x, taps, mode="same")


# ----------------------------
# Channel
# ----------------------------
def simulate_daad(audio: AudioBuffer, spec: ChannelSpec) -> AudioBuffer:
    """Play-and-record model: temporal scaling, gain and additive white noise."""
    x = audio.samples
    if len(x) == 0:
        raise ValueError("cannot pass empty audio through the channel")

    rng = np.random.default_rng(spec.rng_seed)
    if spec.temporal_scale != 1.0:
        out_len = int(round(spec.temporal_scale * len(x)))
        x = _interpolate(x, out_len, 1.0 / spec.temporal_scale)
    if spec.amplitude_scale != 1.0:
        x = x * spec.amplitude_scale
    x = _add_noise(x, spec.noise_snr_db, rng)
    return audio.with_samples(x)


def random_channel(rng: np.random.Generator, noise_snr_db: float = 30.0) -> ChannelSpec:
    """A channel with scale and gain drawn uniformly from the typical soundcard ranges."""
    return ChannelSpec(
        temporal_scale=float(rng.uniform(*TEMPORAL_SCALE_RANGE)),
        amplitude_scale=float(rng.uniform(*AMPLITUDE_SCALE_RANGE)),
        noise_snr_db=noise_snr_db,
        rng_seed=int(rng.integers(0, 2 ** 31)),
    )


# ----------------------------
# Attacks
# ----------------------------
def apply_attack(audio: AudioBuffer, spec: AttackSpec) -> AudioBuffer:
    """
    Apply one catalog attack.

    :raises AttackSpecError: parameters invalid for this audio (e.g. cutoff at or above Nyquist).
    """
    x = audio.samples
    sr = audio.sample_rate
    p = spec.parameters

    if spec.kind == "amplitude_scale":
        gain = float(p["gain"])
        return audio.with_samples(x if gain == 1.0 else x * gain)

    if spec.kind == "awgn":
        return audio.with_samples(_add_noise(x, float(p["snr_db"]), np.random.default_rng(spec.seed)))

    if spec.kind == "requantize":
        q = float(1 << (int(p["bits"]) - 1))
        return audio.with_samples(np.clip(np.round(x * q), -q, q - 1) / q)

    if spec.kind == "resample":
        rate = float(p["rate"])
        if rate < sr:
            x = _fir_lowpass(x, ANTI_ALIAS_RATIO * rate, sr)
        mid_len = max(2, int(round(len(x) * rate / sr)))
        mid = _interpolate(x, mid_len, sr / rate)
        return audio.with_samples(_interpolate(mid, len(x), rate / sr))

    # lowpass
    cutoff = float(p["cutoff"])
    if cutoff >= sr / 2:
        raise AttackSpecError(f"cutoff {cutoff} Hz must be below Nyquist ({sr / 2} Hz)")
    return audio.with_samples(_fir_lowpass(x, cutoff, sr))


# ----------------------------
# JSON specs
# ----------------------------
def spec_from_dict(data: dict) -> Union[ChannelSpec, AttackSpec]:
    if not isinstance(data, dict) or "kind" not in data:
        raise AttackSpecError("spec must be an object with a 'kind' key")
    params = dict(data.get("parameters") or {})
    seed = int(data.get("seed", 0))
    if data["kind"] == "daad":
        allowed = {"temporal_scale", "amplitude_scale", "noise_snr_db"}
        unknown = set(params) - allowed
        if unknown:
            raise AttackSpecError(f"unknown channel parameters: {', '.join(sorted(unknown))}")
        return ChannelSpec(rng_seed=seed, **params)
    return AttackSpec(data["kind"], params, seed)


def spec_to_dict(spec: Union[ChannelSpec, AttackSpec]) -> dict:
    if isinstance(spec, ChannelSpec):
        return {
            "kind": "daad",
            "parameters": {
                "temporal_scale": spec.temporal_scale,
                "amplitude_scale": spec.amplitude_scale,
                "noise_snr_db": spec.noise_snr_db,
            },
            "seed": spec.rng_seed,
        }
    return {"kind": spec.kind, "parameters": dict(spec.parameters), "seed": spec.seed}


def load_spec(path) -> Union[ChannelSpec, AttackSpec]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise AttackSpecError(f"spec file {path} is not valid JSON: {e}") from e
    return spec_from_dict(data)


def process(audio: AudioBuffer, spec: Union[ChannelSpec, AttackSpec]) -> AudioBuffer:
    if isinstance(spec, ChannelSpec):
        return simulate_daad(audio, spec)
    return apply_attack(audio, spec)


def main():
    parser = argparse.ArgumentParser(description="Pass a WAV file through the simulated channel or an attack.")
    parser.add_argument("input", type=Path, help="Input WAV file")
    parser.add_argument("output", type=Path, help="Output WAV file")
    parser.add_argument("--spec", type=Path, required=True, help="JSON channel/attack spec")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    if not args.input.exists():
        raise SystemExit(f"Input file not found: {args.input}")

    try:
        spec = load_spec(args.spec)
        save_wav(args.output, process(load_wav(args.input), spec))
    except AttackSpecError as e:
        raise SystemExit(f"Error: {e}")
    print(f"Wrote {args.output}")


if __name__ == "__main__":
    main()
