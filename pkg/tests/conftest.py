import logging
import sys
import os
from importlib import resources

import numpy as np
import pytest

from coronet import kgraph
from coronet.synth import synth_dataset
from coronet.training import load_dataset

FIXTURE_DUMP = str(resources.files("coronet") / "data" / "conceptnet_fixture.csv")
FIXTURE_SEEDS = ["cup", "table", "book", "shelf", "door", "laptop", "chair", "desk", "bed",
                 "pillow"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_dump():
    return FIXTURE_DUMP


@pytest.fixture(scope="session")
def fixture_assertions():
    logging.disable(logging.WARNING)
    try:
        return kgraph.load_dump(FIXTURE_DUMP)
    finally:
        logging.disable(logging.NOTSET)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """10 synthetic videos, T=32, d_in=16."""
    out = tmp_path_factory.mktemp("synth10")
    path = synth_dataset(str(out), n_videos=10, n_frames=32, d_in=16, seed=3)
    return path


@pytest.fixture(scope="session")
def small_entries(small_dataset):
    return load_dataset(small_dataset)


def pytest_report_header(config):
    return f"CORONET_DISABLE_JIT={os.environ.get('CORONET_DISABLE_JIT', '')}"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
