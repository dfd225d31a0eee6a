"""
Pytest configuration and fixtures for travagen tests.

Test Strategy:
    Unit tests check every operation against hand-computed oracles on tiny logs
    and networks. Training runs (autoencoder/GAN, noise predictor, end-to-end
    anonymization) are marked slow and use shrunken architectures.

Logging:
    Uses crash-resilient logging (fsync after every write) so the log survives
    a killed process during CPU-bound training tests.
"""

import io
import os
from datetime import datetime

import numpy as np
import pytest

from config.logging import setup_logging
from eventlog.simple_log import SimpleEventLog, write_csv
from eventlog.synthetic import synth_log
from generative.ddpm import DdpmConfig
from generative.travag import TravagConfig
from privacy.dp_sgd import DpSgdConfig

# Ensure logs directory exists
LOG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "logs")
os.makedirs(LOG_DIR, exist_ok=True)


@pytest.fixture(scope="session", autouse=True)
def setup_test_logging():
    """
    Configure crash-resilient logging for the entire test session.

    Logs are written to logs/test_YYYYMMDD_HHMMSS.log with immediate
    flush to disk after every message.
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = os.path.join(LOG_DIR, f"test_{timestamp}.log")

    setup_logging(
        log_file=log_file,
        level="DEBUG",
        console=True,
        console_level="WARNING",
        crash_resilient=True,
    )

    yield log_file


@pytest.fixture
def rng():
    """Fresh seeded generator per test."""
    return np.random.default_rng(1234)


@pytest.fixture
def two_variant_log():
    """[<a,b>^3, <a>^1]"""
    return SimpleEventLog({("a", "b"): 3, ("a",): 1})


@pytest.fixture
def single_variant_log():
    return SimpleEventLog({("register", "check", "close"): 40})


@pytest.fixture(scope="session")
def smoke_log():
    """500 cases over 5 Zipf-distributed variants."""
    return synth_log(cases=500, variants=5, zipf_skew=1.2, seed=7)


@pytest.fixture
def csv_bytes():
    """Build a UTF-8 CSV byte stream from (case, activity, timestamp) rows."""

    def build(rows, header=("case_id", "activity", "timestamp")):
        lines = [",".join(header)] + [",".join(row) for row in rows]
        return io.BytesIO(("\n".join(lines) + "\n").encode("utf-8"))

    return build


@pytest.fixture
def log_file(tmp_path, smoke_log):
    """smoke_log written to a CSV file."""
    path = tmp_path / "log.csv"
    with open(path, "wb") as f:
        write_csv(smoke_log, f)
    return str(path)


@pytest.fixture
def fast_dp_config():
    """Short DP-SGD schedule for tests that only need training to run."""
    return DpSgdConfig(clip_norm=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=40)


@pytest.fixture
def fast_travag_config():
    return TravagConfig(noise_dim=8, hidden_dim=16, log_every=10)


@pytest.fixture
def fast_ddpm_config():
    return DdpmConfig(steps=20, beta_start=1e-3, beta_end=0.3, embed_dim=8, hidden_dim=16, log_every=10)
