import sys

import pytest

from hybridplan.benchmarks import BENCHMARKS, load_benchmark
from hybridplan.orchestrator import HybridPlanner, PlannerConfig


@pytest.fixture(scope="session")
def benches():
    return {name: load_benchmark(name) for name in BENCHMARKS}


@pytest.fixture
def beer(benches):
    return benches["beer"]


@pytest.fixture
def flawed(benches):
    return benches["microwave-flawed"]


@pytest.fixture
def planner_factory(tmp_path):
    """Planner over a fresh on-disk cache; closes everything it opened."""
    opened = []

    def make(advisor=None, cache_dir=None, **kw):
        cfg = PlannerConfig(advisor=advisor, cache_dir=str(cache_dir or tmp_path / "cache"), **kw)
        p = HybridPlanner(cfg)
        opened.append(p)
        return p

    yield make
    for p in opened:
        p.close()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
