import numpy as np
import pytest

from gtgmix.generator import GtgConfig, from_edges, generate_gtg
from gtgmix.weights import WeightDistribution, admissible_alpha, auto_c

EXP = WeightDistribution.exponential()


def make_gtg(n, seed, d=2, dist=EXP, c=None, alpha=None):
    c = auto_c(dist, d) if c is None else c
    alpha = admissible_alpha(dist) if alpha is None else alpha
    return generate_gtg(GtgConfig(n=n, d=d, c=c, dist=dist, alpha=alpha, seed=seed))


def graph_from_edges(n, edges, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return from_edges(rng.random((n, d)), np.ones(n), edges, theta=1.0)


def cycle(n):
    return graph_from_edges(n, [(i, (i + 1) % n) if i < (i + 1) % n else ((i + 1) % n, i) for i in range(n)])


def complete(n):
    return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


@pytest.fixture(scope="session")
def gtg500():
    return make_gtg(500, seed=11)


@pytest.fixture(scope="session")
def gtg300():
    return make_gtg(300, seed=5)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def report(criterion, ok, detail):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
