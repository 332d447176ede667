#!/usr/bin/env python3
"""
wavemark command line.

Commands:
    embed     watermark a WAV file, write a JSON embed report
    extract   recover payload bits (hex) and a JSON extract report
    channel   pass a WAV file through the simulated DA/AD channel
    attack    apply one catalog attack to a WAV file
    bench     run the robustness bench over a corpus directory
    analyze   print capacity and the sync error-probability table

Payloads are hex strings with big-endian bit order inside each byte
("A5" is 1,0,1,0,0,1,0,1), or @path to read raw bytes from a file.
Recovered bits are written the same way, zero-padded to whole bytes.

Examples:
    python run.py embed --input song.wav --output marked.wav --payload DEADBEEF --report embed.json
    python run.py channel --input marked.wav --output played.wav --temporal-scale 1.003 --gain 0.7 --seed 3
    python run.py extract --input played.wav --output bits.hex --report extract.json
    python run.py attack lowpass --input marked.wav --output lp.wav --cutoff 9000
    python run.py bench --corpus corpus --report bench.csv
    python run.py analyze

Exit status is 0 on success, 1 on any processing error and 2 on usage errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from m1_wav_io import load_wav, save_wav, WavFormatError
from m2_dwt import DwtLengthError
from m3_sync_codes import (generate_msequence, false_positive_prob, false_negative_prob,
                           empirical_false_positive_rate, DEFAULT_DEGREE)
from m4_embed import EmbedConfig, embed, AudioTooShortError, DegenerateFrameError
from m5_extract import extract, NoSyncFoundError
from m6_channel import (AttackSpec, ChannelSpec, AttackSpecError, ATTACK_KINDS,
                        simulate_daad, load_spec, process)
from m7_metrics import capacity

load_dotenv()

logger = logging.getLogger("wavemark")

# camelCase settings.json keys -> EmbedConfig fields
SETTINGS_KEYS = {
    "levels": "levels",
    "groupSize": "group_size",
    "strength": "strength",
    "snrTarget": "snr_target_db",
    "threshold": "threshold",
    "payloadBits": "payload_bits",
    "marginFloor": "margin_floor",
}
ANALYZE_THRESHOLDS = (5, 6, 7, 8)
ANALYZE_PD = (0.004375, 0.000625)

PROCESSING_ERRORS = (WavFormatError, DwtLengthError, AudioTooShortError, DegenerateFrameError,
                     NoSyncFoundError, AttackSpecError, ValueError, OSError)


# ----------------------------
# Shared helpers
# ----------------------------
def resolve_seed(flag: Optional[int]) -> int:
    """--seed, else WAVEMARK_SEED from the environment or .env, else 0."""
    if flag is not None:
        return flag
    env = os.environ.get("WAVEMARK_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"WAVEMARK_SEED must be an integer, got '{env}'")
    return 0


def parse_payload(text: str) -> np.ndarray:
    """Hex string or @file of raw bytes, to bits (big-endian within each byte)."""
    if text.startswith("@"):
        data = Path(text[1:]).read_bytes()
    else:
        cleaned = text.strip().lower()
        if cleaned.startswith("0x"):
            cleaned = cleaned[2:]
        try:
            data = bytes.fromhex(cleaned)
        except ValueError as e:
            raise ValueError(f"payload '{text}' is not a hex string: {e}") from e
    if not data:
        raise ValueError("payload must contain at least one byte")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_hex(bits) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.packbits(bits).tobytes().hex().upper() if len(bits) else ""


def build_config(args) -> EmbedConfig:
    """Defaults, overridden by --config settings, overridden by explicit flags."""
    values = {}
    degree = DEFAULT_DEGREE
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            settings = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"settings file {config_path} is not valid JSON: {e}") from e
        for key, value in settings.items():
            if key in SETTINGS_KEYS:
                values[SETTINGS_KEYS[key]] = value
            elif key == "syncDegree":
                degree = int(value)
            else:
                logger.warning(f"Ignoring unknown setting '{key}'")

    for flag, name in (("levels", "levels"), ("group_size", "group_size"), ("strength", "strength"),
                       ("snr_target", "snr_target_db"), ("threshold", "threshold")):
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    return EmbedConfig(sync=generate_msequence(degree), **values)


def _write_json(path: Optional[Path], data: dict):
    if path:
        Path(path).write_text(json.dumps(data, indent=2))
        logger.info(f"Report written to {path}")


# ----------------------------
# Commands
# ----------------------------
def cmd_embed(args) -> int:
    cfg = build_config(args)
    audio = load_wav(args.input)
    marked, report = embed(audio, parse_payload(args.payload), cfg)
    save_wav(args.output, marked)
    logger.info(f"Watermarked {report.frame_count} frames at {report.snr_db:.2f} dB SNR -> {args.output}")
    _write_json(args.report, report.to_dict())
    return 0


def cmd_extract(args) -> int:
    cfg = build_config(args)
    report = extract(load_wav(args.input), cfg, resync=not args.no_resync)
    hex_bits = bits_to_hex(report.bits)
    if args.output:
        Path(args.output).write_text(hex_bits + "\n")
    else:
        print(hex_bits)
    logger.info(f"{report.frames_decoded} frames decoded, {len(report.bits)} bits")
    _write_json(args.report, report.to_dict())
    return 0


def cmd_channel(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
        if not isinstance(spec, ChannelSpec):
            raise AttackSpecError(f"{args.spec} describes an attack, use the attack command")
    else:
        noise = None if args.noise_snr is not None and args.noise_snr <= 0 else args.noise_snr
        spec = ChannelSpec(args.temporal_scale, args.gain, noise, resolve_seed(args.seed))
    save_wav(args.output, simulate_daad(load_wav(args.input), spec))
    logger.info(f"Channel output written to {args.output}")
    return 0


def cmd_attack(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    else:
        if args.kind is None:
            raise AttackSpecError("attack kind required (or --spec)")
        flag_for = {"amplitude_scale": ("gain", args.gain), "awgn": ("snr_db", args.noise_snr),
                    "requantize": ("bits", args.bits), "resample": ("rate", args.rate),
                    "lowpass": ("cutoff", args.cutoff)}
        name, value = flag_for[args.kind]
        params = {} if value is None else {name: value}
        spec = AttackSpec(args.kind, params, resolve_seed(args.seed))
    save_wav(args.output, process(load_wav(args.input), spec))
    logger.info(f"Attacked audio written to {args.output}")
    return 0


def cmd_bench(args) -> int:
    from run_all import run_bench, write_bench_csv, print_bench_table
    from progress_manager import BenchProgress

    if not Path(args.corpus).is_dir():
        raise FileNotFoundError(f"corpus directory not found: {args.corpus}")
    cfg = build_config(args)
    payload = parse_payload(args.payload) if args.payload else None
    with BenchProgress() as pm:
        df = run_bench(args.corpus, cfg, payload, resolve_seed(args.seed), args.max_workers, pm)
    print_bench_table(df)
    if args.report:
        write_bench_csv(df, args.report)
        logger.info(f"Bench table written to {args.report}")
    return 0


def cmd_analyze(args) -> int:
    cfg = build_config(args)
    console = Console()
    bps = capacity(args.sample_rate, cfg.levels, cfg.group_size)
    frame_seconds = cfg.frame_samples / args.sample_rate
    console.print(f"Capacity: {bps:.2f} bps at {args.sample_rate} Hz (K={cfg.levels}, L={cfg.group_size})")
    console.print(f"Frame: {cfg.frame_samples} samples ({frame_seconds:.3f} s), "
                  f"sync code {cfg.sync.length} bits, {cfg.payload_bits} payload bits")

    table = Table(title=f"Sync error probabilities (Ns={cfg.sync.length})")
    table.add_column("T", justify="right")
    table.add_column("P1", justify="right")
    for pd_value in ANALYZE_PD:
        table.add_column(f"P2 (Pd={100 * pd_value:g} %)", justify="right")
    if args.trials:
        table.add_column(f"P1 Monte-Carlo ({args.trials})", justify="right")

    seed = resolve_seed(args.seed)
    for t in ANALYZE_THRESHOLDS:
        if t >= cfg.sync.length:
            continue
        row = [str(t), f"{false_positive_prob(cfg.sync.length, t):.3e}"]
        row += [f"{false_negative_prob(cfg.sync.length, t, p):.3e}" for p in ANALYZE_PD]
        if args.trials:
            row.append(f"{empirical_false_positive_rate(cfg.sync, t, args.trials, seed):.3e}")
        table.add_row(*row)
    console.print(table)
    return 0


# ----------------------------
# Parser
# ----------------------------
def _add_embed_flags(p):
    p.add_argument("--config", type=Path, default=None, help="JSON settings file (camelCase keys)")
    p.add_argument("--levels", type=int, default=None, help="DWT levels K (default: 6)")
    p.add_argument("--group-size", type=int, default=None, help="Coefficients per group L (default: 8)")
    p.add_argument("--strength", type=float, default=None, help="Initial strength factor d (default: 0.4)")
    p.add_argument("--snr-target", type=float, default=None, help="Minimum watermarked SNR in dB (default: 20)")
    p.add_argument("--threshold", type=int, default=None, help="Sync detection threshold T (default: 5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Blind DWT audio watermarking.")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="Watermark a WAV file")
    p.add_argument("--input", type=Path, required=True, help="Input WAV file")
    p.add_argument("--output", type=Path, required=True, help="Watermarked WAV file")
    p.add_argument("--payload", type=str, required=True, help="Payload hex string or @file")
    p.add_argument("--report", type=Path, default=None, help="JSON embed report")
    _add_embed_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="Recover payload bits")
    p.add_argument("--input", type=Path, required=True, help="Watermarked WAV file")
    p.add_argument("--output", type=Path, default=None, help="Write recovered bits as hex (default: stdout)")
    p.add_argument("--report", type=Path, default=None, help="JSON extract report")
    p.add_argument("--no-resync", action="store_true", help="Decode payloads without resynchronization")
    _add_embed_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("channel", help="Simulate DA/AD conversion")
    p.add_argument("--input", type=Path, required=True, help="Input WAV file")
    p.add_argument("--output", type=Path, required=True, help="Output WAV file")
    p.add_argument("--spec", type=Path, default=None, help="JSON channel spec (kind 'daad')")
    p.add_argument("--temporal-scale", type=float, default=1.0, help="Timeline stretch factor (default: 1.0)")
    p.add_argument("--gain", type=float, default=1.0, help="Amplitude scale λ (default: 1.0)")
    p.add_argument("--noise-snr", type=float, default=30.0, help="Noise SNR in dB, <= 0 disables (default: 30)")
    p.add_argument("--seed", type=int, default=None, help="Noise seed (default: WAVEMARK_SEED or 0)")
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("attack", help="Apply one catalog attack")
    p.add_argument("kind", nargs="?", choices=ATTACK_KINDS, help="Attack kind")
    p.add_argument("--input", type=Path, required=True, help="Input WAV file")
    p.add_argument("--output", type=Path, required=True, help="Output WAV file")
    p.add_argument("--spec", type=Path, default=None, help="JSON attack spec")
    p.add_argument("--gain", type=float, default=None, help="amplitude_scale gain")
    p.add_argument("--noise-snr", type=float, default=None, help="awgn SNR in dB")
    p.add_argument("--bits", type=int, default=None, help="requantize bit depth")
    p.add_argument("--rate", type=float, default=None, help="resample intermediate rate in Hz")
    p.add_argument("--cutoff", type=float, default=None, help="lowpass cutoff in Hz")
    p.add_argument("--seed", type=int, default=None, help="Noise seed (default: WAVEMARK_SEED or 0)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="Robustness bench over a corpus directory")
    p.add_argument("--corpus", type=Path, required=True, help="Directory of WAV files")
    p.add_argument("--payload", type=str, default=None, help="Payload hex string or @file")
    p.add_argument("--report", type=Path, default=None, help="Write the bench table as CSV")
    p.add_argument("--seed", type=int, default=None, help="Seed (default: WAVEMARK_SEED or 0)")
    p.add_argument("--max-workers", type=int, default=4, help="Parallel files (default: 4)")
    _add_embed_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="Capacity and sync error probabilities")
    p.add_argument("--sample-rate", type=int, default=44100, help="Sample rate in Hz (default: 44100)")
    p.add_argument("--trials", type=int, default=0, help="Also estimate P1 with this many random candidates")
    p.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed (default: WAVEMARK_SEED or 0)")
    _add_embed_flags(p)
    p.set_defaults(func=cmd_analyze)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse `argv`, run the command and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", handlers=[RichHandler(show_path=False)])
    try:
        return args.func(args)
    except PROCESSING_ERRORS as e:
        logger.error(f"Error: {e}")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
