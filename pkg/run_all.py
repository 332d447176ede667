#!/usr/bin/env python3
"""
Robustness bench over every WAV file of a corpus directory.

Each file is watermarked, passed through every attack of the catalog and
decoded again. One row per (file, attack) is reported:

    file, attack, ber_percent, snr_db, frames_expected, frames_decoded,
    false_syncs, missed_syncs, p1_count

ber_percent counts payload bits of decoded frames only (silent blocks are
excluded); missed and false syncs are reported separately. snr_db is the
watermarked SNR for the unattacked row and the resynchronized SNR of the
attacked signal against the original otherwise.

Usage:
    python run_all.py <corpus_dir> [--payload HEX] [--csv bench.csv] [--max-workers 4] [--seed 0]

Examples:
    python m0_corpus.py corpus
    python run_all.py corpus --csv bench.csv
    python run_all.py corpus --config settings.json --max-workers 8
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from m1_wav_io import load_wav, read_wav, write_wav, WavFormatError
from m3_sync_codes import count_based_false_positive_prob
from m4_embed import EmbedConfig, embed, expected_payload, AudioTooShortError, DegenerateFrameError
from m5_extract import extract, NoSyncFoundError, ExtractReport, MAX_ALPHA_DEVIATION
from m6_channel import AttackSpec, ChannelSpec, process
from m7_metrics import snr, resynchronized_snr
from progress_manager import BenchProgress

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["file", "attack", "ber_percent", "snr_db", "frames_expected", "frames_decoded",
                 "false_syncs", "missed_syncs", "p1_count"]
AMPLITUDE_GAINS = (0.1, 0.25, 0.5, 0.9, 1.1, 1.5)
ABLATION_SCALE = 1.003
DEFAULT_PAYLOAD_HEX = "A5C3F00F"


@dataclass
class BenchAttack:
    name: str
    spec: Union[AttackSpec, ChannelSpec]
    sync: bool = True
    resync: bool = True


def attack_catalog(seed: int = 0) -> List[BenchAttack]:
    """Attacks in report order; seeds are derived from `seed` so reruns are identical."""
    attacks = [BenchAttack("unattacked", AttackSpec("amplitude_scale", {"gain": 1.0}, seed))]
    attacks += [BenchAttack(f"amplitude x{g}", AttackSpec("amplitude_scale", {"gain": g}, seed)) for g in AMPLITUDE_GAINS]
    attacks += [
        BenchAttack("requantize 8 bit", AttackSpec("requantize", {"bits": 8}, seed)),
        BenchAttack("resample 8 kHz", AttackSpec("resample", {"rate": 8000}, seed)),
        BenchAttack("lowpass 9 kHz", AttackSpec("lowpass", {"cutoff": 9000}, seed)),
        BenchAttack("awgn 20 dB", AttackSpec("awgn", {"snr_db": 20.0}, seed + 1)),
        BenchAttack("awgn 8 dB", AttackSpec("awgn", {"snr_db": 8.0}, seed + 2)),
        BenchAttack("da/ad", ChannelSpec(ABLATION_SCALE, 0.7, 30.0, seed + 3)),
    ]
    ablation = ChannelSpec(ABLATION_SCALE, 1.0, 30.0, seed + 4)
    attacks += [
        BenchAttack("x1.003 no sync", ablation, sync=False, resync=False),
        BenchAttack("x1.003 no resync", ablation, sync=True, resync=False),
        BenchAttack("x1.003 full", ablation, sync=True, resync=True),
    ]
    return attacks


def score_extraction(report: ExtractReport, expected: np.ndarray, embed_skipped: set,
                     cfg: EmbedConfig) -> dict:
    """
    Compare decoded frames with the embedded payload.

    A frame counts as found when its estimated index lies inside the embedded
    range and its sync start sits near that frame's position. The tolerance
    is one block plus the largest accepted timeline drift, so frames decoded
    without resynchronization are still attributed to the right index.
    """
    frame_count, per_frame = expected.shape
    errors = total = 0
    found = set()
    false_syncs = 0
    for frame in report.frames:
        nominal = frame.alpha * frame.index * cfg.frame_samples
        tolerance = cfg.block_samples + MAX_ALPHA_DEVIATION * nominal
        if not 0 <= frame.index < frame_count or abs(frame.start_sample - nominal) > tolerance:
            false_syncs += 1
            continue
        found.add(frame.index)
        keep = frame.valid.copy()
        for j in range(per_frame):
            if frame.index * per_frame + j in embed_skipped:
                keep[j] = False
        errors += int(np.count_nonzero(frame.bits[keep] != expected[frame.index][keep]))
        total += int(np.count_nonzero(keep))

    missed = frame_count - len(found)
    return {
        "ber_percent": 100.0 * errors / total if total else math.nan,
        "frames_decoded": len(found),
        "false_syncs": false_syncs,
        "missed_syncs": missed,
        "p1_count": count_based_false_positive_prob(frame_count, false_syncs, missed),
    }


def bench_file(path: Path, cfg: EmbedConfig, payload: np.ndarray, seed: int,
               progress_manager: Optional[BenchProgress] = None) -> List[dict]:
    """Every catalog row for one corpus file."""
    def log_print(message):
        if progress_manager:
            progress_manager.print_log(message)
        else:
            logger.info(message)

    original = load_wav(path)
    marked, embed_report = embed(original, payload, cfg)
    # the watermarked file is stored as 16-bit PCM before any attack
    marked = read_wav(write_wav(marked))
    log_print(f"{path.name}: {embed_report.frame_count} frames, d={embed_report.strength:.4f}, "
              f"SNR {embed_report.snr_db:.2f} dB")

    expected = expected_payload(payload, cfg, embed_report.frame_count)
    skipped = set(embed_report.skipped_bits)
    rows = []
    for attack in attack_catalog(seed):
        attacked = process(marked, attack.spec)
        try:
            report = extract(attacked, cfg, sync=attack.sync, resync=attack.resync)
            scores = score_extraction(report, expected, skipped, cfg)
        except NoSyncFoundError:
            scores = {"ber_percent": math.nan, "frames_decoded": 0, "false_syncs": 0,
                      "missed_syncs": embed_report.frame_count, "p1_count": 0.0}

        if attack.name == "unattacked":
            quality = snr(original.samples, attacked.samples)
        else:
            quality = resynchronized_snr(original.samples, attacked.samples)

        rows.append({"file": path.name, "attack": attack.name, "snr_db": quality,
                     "frames_expected": embed_report.frame_count, **scores})
        if progress_manager:
            progress_manager.record_attack(path.name, attack.name, scores["ber_percent"])
        else:
            logger.info(f"  {attack.name:<18} BER {scores['ber_percent']:.4f} %")
    return rows


def run_bench(corpus_dir, cfg: EmbedConfig = None, payload=None, seed: int = 0, max_workers: int = 4,
              progress_manager: Optional[BenchProgress] = None) -> pd.DataFrame:
    """
    Bench every *.wav in `corpus_dir`; rows ordered by file name, then catalog order.

    Files that cannot be read or are shorter than one frame are logged and left out.
    """
    cfg = cfg or EmbedConfig()
    if payload is None:
        payload = np.unpackbits(np.frombuffer(bytes.fromhex(DEFAULT_PAYLOAD_HEX), dtype=np.uint8))
    payload = np.asarray(payload, dtype=np.uint8)

    files = sorted(Path(corpus_dir).glob("*.wav"))
    if not files:
        raise FileNotFoundError(f"no WAV files found in {corpus_dir}")

    order = {a.name: i for i, a in enumerate(attack_catalog(seed))}
    if progress_manager:
        progress_manager.init_files(len(files), len(files) * len(order))

    rows = []
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_path = {
            executor.submit(bench_file, path, cfg, payload, seed, progress_manager): path
            for path in files
        }
        for future in as_completed(future_to_path):
            path = future_to_path[future]
            try:
                rows.extend(future.result())
            except (WavFormatError, AudioTooShortError, DegenerateFrameError) as e:
                msg = f"Skipping {path.name}: {e}"
                if progress_manager:
                    progress_manager.print_log(msg)
                else:
                    logger.warning(msg)
            if progress_manager:
                progress_manager.file_done()

    df = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    if df.empty:
        return df
    df["_order"] = df["attack"].map(order)
    return df.sort_values(["file", "_order"]).drop(columns="_order").reset_index(drop=True)


def write_bench_csv(df: pd.DataFrame, path):
    """Fixed float format so identical runs give identical bytes."""
    df.to_csv(path, index=False, float_format="%.6f")


def print_bench_table(df: pd.DataFrame, console: Optional[Console] = None):
    console = console or Console()
    table = Table(title="Watermark robustness")
    for col in BENCH_COLUMNS:
        table.add_column(col, justify="left" if col in ("file", "attack") else "right")
    for row in df.itertuples(index=False):
        cells = []
        for col, value in zip(BENCH_COLUMNS, row):
            if isinstance(value, float):
                cells.append("-" if math.isnan(value) else ("inf" if math.isinf(value) else f"{value:.4g}"))
            else:
                cells.append(str(value))
        table.add_row(*cells)
    console.print(table)


def main():
    """Bench every WAV file in a corpus directory."""
    from rich.logging import RichHandler
    from run import build_config, parse_payload, resolve_seed

    load_dotenv()
    parser = argparse.ArgumentParser(description="Run the robustness bench over a corpus directory.")
    parser.add_argument("corpus", type=Path, help="Directory with 16-bit PCM WAV files")
    parser.add_argument("--payload", type=str, default=DEFAULT_PAYLOAD_HEX, help="Payload hex string or @file")
    parser.add_argument("--config", type=Path, default=None, help="JSON settings file")
    parser.add_argument("--csv", type=Path, default=None, help="Write the bench table as CSV")
    parser.add_argument("--seed", type=int, default=None, help="Seed (default: WAVEMARK_SEED or 0)")
    parser.add_argument("--max-workers", type=int, default=4, help="Parallel files (default: 4)")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    args = parser.parse_args()

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", handlers=[RichHandler()])

    if not args.corpus.is_dir():
        print(f"Error: corpus directory not found: {args.corpus}")
        sys.exit(1)

    cfg = build_config(args)
    with BenchProgress() as pm:
        df = run_bench(args.corpus, cfg, parse_payload(args.payload), resolve_seed(args.seed),
                       args.max_workers, pm)

    print_bench_table(df)
    if args.csv:
        write_bench_csv(df, args.csv)
        print(f"Bench table written to {args.csv}")


if __name__ == "__main__":
    main()
