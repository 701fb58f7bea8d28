"""Shared fixtures: the tiny seq2seq checkpoint, generated datasets, and
session-wide feature caches.

The checkpoint under ``fixtures/tiny_t5`` is a small pretrained model
(128-dim, word-level vocabulary) committed to the repo so the suite runs
fully offline. Dataset CSVs are produced once per session exactly as
``python -m promptcc.synthdata`` would write them.
"""

from __future__ import annotations

from pathlib import Path

import pytest

import promptcc.backend as be
import promptcc.pipeline as pl
import promptcc.synthdata as sd
from promptcc.config import build_config

TESTS_DIR = Path(__file__).parent
MODEL_DIR = TESTS_DIR / "fixtures" / "tiny_t5"

ACCEPTANCE_VERDICTS: list[str] = []


def pytest_configure(config):
    try:
        import transformers.utils.logging as hf_logging

        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
    except Exception:
        pass


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_verdicts():
    return ACCEPTANCE_VERDICTS


@pytest.fixture(scope="session")
def model_dir() -> str:
    return str(MODEL_DIR)


@pytest.fixture(scope="session")
def handle(model_dir):
    """A session-wide backend handle. Never mutated: tests that tune the
    backbone in full mode must load their own copy."""
    return be.load_backend(model_dir, max_len=64)


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("datasets")
    sd.write_dataset(sd.make_dataset1(), root / "dataset1.csv")
    sd.write_dataset(sd.make_dataset2(), root / "dataset2.csv")
    return root


@pytest.fixture(scope="session")
def payload_for(data_dir, model_dir):
    """Config payload factory for one of the two generated datasets.

    lr 0.05 is the smoke-scale setting: the prototype matrix here is tiny
    (N x 128) and converges in seconds, whereas the 1e-5 default targets
    full-size checkpoints.
    """

    def _make(which: str, **extra) -> dict:
        name, schema = {
            "d1": ("dataset1.csv", "dataset1_binary"),
            "d2": ("dataset2.csv", "dataset2_ternary"),
        }[which]
        payload = {
            "dataset": {"path": str(data_dir / name), "schema": schema},
            "backend": {"model_id": model_dir, "max_len": 64},
            "train": {"lr": 0.05},
        }
        for key, value in extra.items():
            if isinstance(value, dict) and isinstance(payload.get(key), dict):
                payload[key].update(value)
            else:
                payload[key] = value
        return payload

    return _make


@pytest.fixture(scope="session")
def d1_prep(handle, payload_for):
    return pl.prepare(build_config(payload_for("d1")), handle=handle)


@pytest.fixture(scope="session")
def d2_prep(handle, payload_for):
    return pl.prepare(build_config(payload_for("d2")), handle=handle)


@pytest.fixture(scope="session")
def d1_cache():
    return pl.FeatureCache()


@pytest.fixture(scope="session")
def d2_cache():
    return pl.FeatureCache()


@pytest.fixture(scope="session")
def d2_checkpoint(tmp_path_factory, d2_prep, payload_for, handle):
    """A 3-way 5-shot prompt-tuned checkpoint, reused by CLI round trips."""
    out = tmp_path_factory.mktemp("ckpt") / "d2-5shot"
    config = build_config(payload_for("d2", k_shot=5))
    prep = pl.prepare(config, handle=handle)
    path, state = pl.train_checkpoint(prep, out)
    assert state.epoch >= 1
    return path
