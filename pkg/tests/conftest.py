from pathlib import Path

import numpy as np
import pytest

from mic_hawkes.inference import project_simplex
from mic_hawkes.model import KernelSpec, MixingSpec, ModelParams, UserGraph
from mic_hawkes.simulation import simulate

DATA = Path(__file__).parent / "data"


def random_params(rng, n_u=4, n_c=3, mixing="boltzmann", beta=2.0, tau=1.0, edge_prob=0.5,
                  w_max=0.4, mu_max=0.3, identity_sigma=False):
    """Small random instance; returns ``(graph, params)`` with W supported on the graph."""
    adj = rng.random((n_u, n_u)) < edge_prob
    np.fill_diagonal(adj, False)
    W = np.where(adj, rng.uniform(0.05, w_max, (n_u, n_u)), 0.0)
    M = rng.uniform(0.02, mu_max, (n_u, n_c))
    Sigma = np.eye(n_c) if identity_sigma else project_simplex(rng.uniform(0, 1, (n_c, n_c)) + np.eye(n_c))
    params = ModelParams(M, Sigma, W, KernelSpec(tau), MixingSpec(mixing, beta))
    return UserGraph(adj, W), params


def random_instance(seed, T=30.0, **kw):
    rng = np.random.default_rng(seed)
    graph, params = random_params(rng, **kw)
    log = simulate(params, T, seed=rng)
    return graph, params, log


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n}. {title}: {detail}")
