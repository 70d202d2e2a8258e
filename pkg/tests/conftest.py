# HeraldComb: runs in a standard CPython 3.9+ environment.
import os
import sys

import hypothesis
import numpy as np
import pytest

LIB_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "HeraldComb", "lib")
if LIB_DIR not in sys.path:
    sys.path.insert(0, LIB_DIR)

from HeraldComb_Correlator.tag_io import TagStream  # noqa: E402

_SUPPRESSED = [hypothesis.HealthCheck.function_scoped_fixture, hypothesis.HealthCheck.too_slow]
hypothesis.settings.register_profile("dev", max_examples=25, deadline=None, suppress_health_check=_SUPPRESSED)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=_SUPPRESSED)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance simulations (run with -m slow)")


def pytest_collection_modifyitems(config, items):
    if "slow" in (config.option.markexpr or ""):
        return
    skip_slow = pytest.mark.skip(reason="long simulation; run with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HERALDCOMB_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("HERALDCOMB_OUTPUT_DIR", str(tmp_path / "output"))
    monkeypatch.delenv("HERALDCOMB_DEBUG", raising=False)


def make_stream(records, channel_count=2, resolution_ps=1):
    """TagStream from (timestamp_ps, channel) pairs, sorted by time then channel."""
    records = sorted(records)
    timestamps = np.array([r[0] for r in records], dtype=np.uint64)
    channels = np.array([r[1] for r in records], dtype=np.uint8)
    return TagStream(timestamps, channels, channel_count, resolution_ps)


@pytest.fixture
def stream_factory():
    return make_stream
