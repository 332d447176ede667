"""Shared fixtures: default config, a synthetic 56 s signal and its watermarked copy."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from m0_corpus import synthesize  # noqa: E402
from m1_wav_io import read_wav, write_wav  # noqa: E402
from m4_embed import EmbedConfig, embed  # noqa: E402

CORPUS_SECONDS = 56.0
SAMPLE_RATE = 44100


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical or corpus-wide runs")


@pytest.fixture(scope="session")
def cfg():
    return EmbedConfig()


@pytest.fixture(scope="session")
def payload():
    """800 bits: one distinct 32-bit word per frame of a 56 s signal."""
    return np.random.default_rng(1).integers(0, 2, 800).astype(np.uint8)


@pytest.fixture(scope="session")
def corpus_audio():
    # stored as 16-bit PCM like any real input
    return read_wav(write_wav(synthesize("mixed", CORPUS_SECONDS, SAMPLE_RATE, seed=0)))


@pytest.fixture(scope="session")
def watermarked(corpus_audio, payload, cfg):
    """(watermarked AudioBuffer after 16-bit storage, EmbedReport)."""
    marked, report = embed(corpus_audio, payload, cfg)
    return read_wav(write_wav(marked)), report


@pytest.fixture(scope="session")
def expected_bits(watermarked, payload, cfg):
    from m4_embed import expected_payload

    _, report = watermarked
    return expected_payload(payload, cfg, report.frame_count)
