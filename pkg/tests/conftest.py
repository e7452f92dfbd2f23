import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zoosel.characterize import sample_characterization_set
from zoosel.embedder import Extractor, ExtractorConfig
from zoosel.harness.zoos import default_zoo

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def zoo():
    return default_zoo()


@pytest.fixture(scope="session")
def small_config():
    return ExtractorConfig(hidden_dim=8, embed_dim=6, seed=3)


@pytest.fixture(scope="session")
def ext():
    return Extractor.initialize(ExtractorConfig(seed=0))


@pytest.fixture(scope="session")
def dset(zoo):
    return sample_characterization_set(zoo, 120, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting: one PASS/FAIL line per numbered criterion ------------------

_CRITERIA = pytest.StashKey[dict]()


def _criteria(config) -> dict:
    if _CRITERIA not in config.stash:
        config.stash[_CRITERIA] = {}
    return config.stash[_CRITERIA]


@pytest.fixture
def measured(request):
    """Attach a measured value to the current test's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    entry = _criteria(request.config).setdefault(marker.args[0], {"title": marker.args[1], "ok": True, "notes": []})
    return entry["notes"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    entry = _criteria(item.config).setdefault(marker.args[0], {"title": marker.args[1], "ok": True, "notes": []})
    entry["ok"] = entry["ok"] and not report.failed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = _criteria(config)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        notes = "; ".join(entry["notes"])
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}" + (f"  [{notes}]" if notes else ""))
