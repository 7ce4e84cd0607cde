"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict that is printed in the
``acceptance criteria`` section of the pytest terminal summary.  The whole
module takes several minutes; skip it with ``-m "not acceptance"``.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from mic_hawkes.experiments import grid_study, sigma_recovery
from mic_hawkes.likelihood import compensator, cumulative_compensator, log_likelihood
from mic_hawkes.model import (
    IntensityState, KernelSpec, MixingSpec, ModelParams, UserGraph, independent_intensity, intensity_path,
    marked_intensity, mixing_density,
)
from mic_hawkes.inference import project_simplex
from mic_hawkes.moments import expected_counts, expected_intensity, stationary_cascade_intensity
from mic_hawkes.simulation import (
    ScenarioConfig, generate_scenario, reference_sigma, replication_seeds, simulate,
)

from conftest import random_instance, random_params, record
from test_cli import ARTIFACTS, pipeline
from test_likelihood import gradient_relative_error, quad_compensator

pytestmark = pytest.mark.acceptance

REFERENCE = ScenarioConfig(n_users=50, n_cascades=3, T=500.0, tau=3.0, beta=33.37, sigma=reference_sigma(0.71),
                           w_max=1.0, mu_max=0.2)


def test_c1_sigma_recovery():
    errors, fitted = [], []
    for seed in range(10):
        est_sigma, true_sigma, _ = sigma_recovery(seed, REFERENCE)
        errors.append(np.abs(est_sigma - true_sigma).mean())
        fitted.append(est_sigma)
    err = float(np.mean(errors))
    mean_sigma = np.round(np.mean(fitted, axis=0), 2).tolist()
    passed = err <= 0.05
    record(1, "Sigma recovery", passed,
           f"mean |Sigma_fit - Sigma*| = {err:.4f} over 10 seeds (tol 0.05); mean fit {mean_sigma}")
    assert passed


def test_c2_model_comparison_grid():
    # reduced scale: 30 users on [0, 300]; 10 replications per cell
    base = ScenarioConfig(n_users=30, T=300.0, tau=3.0)
    cells = grid_study([0.01, 1.0, 33.0], [0.0, 0.5, 1.0], replications=10, base=base, seed=2024)
    problems, table = [], []
    for c in cells:
        ic, cc = c.mean_ratio("IC"), c.mean_ratio("CC")
        table.append(f"({c.beta:g},{c.sigma_21:g}): IC {ic:.3f} linMIC {c.mean_ratio('linMIC'):.3f} CC {cc:.3f}")
        if c.replications != 10:
            problems.append(f"cell ({c.beta}, {c.sigma_21}) has {c.failures} failed replications")
        if c.beta == 0.01 and min(ic, cc) < 0.98:
            problems.append(f"beta->0 cell sigma_21={c.sigma_21}: IC {ic:.4f}, CC {cc:.4f} < 0.98")
        if c.beta == 33.0 and c.sigma_21 >= 0.5 and min(ic, cc) < 1.0:
            problems.append(f"beta=33 cell sigma_21={c.sigma_21}: IC {ic:.4f}, CC {cc:.4f} < 1")
    print("\n".join(table))
    passed = not problems
    record(2, "beta x sigma_21 model comparison", passed,
           "; ".join(problems) if problems else "all 9 cells satisfy the ratio bounds; " + " | ".join(table))
    assert passed, problems


def test_c3_moments_against_monte_carlo():
    _, params = generate_scenario(replace(REFERENCE, seed=0))
    grid = np.geomspace(1.0, REFERENCE.T, 20)
    lam, counts, per_cascade = [], [], []
    for ss in replication_seeds(2024, 200):
        log = simulate(params, REFERENCE.T, seed=np.random.default_rng(ss))
        lam.append(intensity_path(params, log, grid).sum(axis=0))
        counts.append(np.searchsorted(log.times, grid, side="right"))
        per_cascade.append(np.bincount(log.cascades, minlength=3) / REFERENCE.T)
    lam, counts = np.array(lam), np.array(counts, dtype=float)
    se = lambda x: x.std(axis=0, ddof=1) / math.sqrt(len(x))
    z_lam = (lam.mean(axis=0) - expected_intensity(params, grid).sum(axis=0)) / se(lam)
    z_cnt = (counts.mean(axis=0) - expected_counts(params, grid).sum(axis=0)) / se(counts)
    approx = stationary_cascade_intensity(params).sum(axis=0)
    observed = np.mean(per_cascade, axis=0)
    order_ok = list(np.argsort(approx)) == list(np.argsort(observed)) and np.argmin(approx) == 1
    passed = bool(np.all(np.abs(z_lam) < 3) and np.all(np.abs(z_cnt) < 3) and order_ok)
    record(3, "moments vs Monte Carlo", passed,
           f"max |z| intensity {np.abs(z_lam).max():.2f}, counts {np.abs(z_cnt).max():.2f} (tol 3) at 20 points; "
           f"cascade rates approx {np.round(approx, 2).tolist()} vs simulated {np.round(observed, 2).tolist()}")
    assert passed


def test_c4_likelihood_oracles():
    worst_comp = 0.0
    for seed in range(50):
        graph, params, log = random_instance(1000 + seed, T=10.0, n_u=3, n_c=2,
                                             mixing="linear" if seed % 2 else "boltzmann")
        exact = compensator(params, graph, log)
        worst_comp = max(worst_comp, abs(exact - quad_compensator(params, log)) / exact)

    worst_grad = 0.0
    for seed in range(20):
        mixing, beta = ("linear", 0.0) if seed % 2 else ("boltzmann", 4.0)
        graph, params, log = random_instance(2000 + seed, T=12.0, n_u=4, n_c=3, mixing=mixing, beta=beta)
        worst_grad = max(worst_grad, gradient_relative_error(params, graph, log))
    passed = worst_comp < 1e-8 and worst_grad < 1e-5
    record(4, "likelihood oracles", passed,
           f"compensator vs quadrature worst rel err {worst_comp:.2e} (tol 1e-8, 50 instances); "
           f"gradient vs central differences worst rel err {worst_grad:.2e} (tol 1e-5, 20 instances)")
    assert passed


def _midpoint_gap(rng, mixing, beta, seed):
    graph, params, log = random_instance(seed, T=60.0, n_u=6, n_c=3, mixing=mixing, beta=beta, edge_prob=0.4,
                                         w_max=0.5)
    adjacency = UserGraph(graph.adjacency)

    def draw():
        M = rng.uniform(0.01, 0.3, params.M.shape)
        W = np.where(graph.adjacency, rng.uniform(0, 1, params.W.shape), 0.0)
        return M, project_simplex(rng.uniform(0, 1, params.Sigma.shape)), W

    def neg_ll(M, S, W):
        return -log_likelihood(params.replace(M=M, Sigma=S, W=W), adjacency, log).total

    a, b = draw(), draw()
    mid = tuple((x + y) / 2 for x, y in zip(a, b))
    return neg_ll(*mid) - (neg_ll(*a) + neg_ll(*b)) / 2


@pytest.mark.xfail(strict=True, reason="-L is not jointly convex in (M, Sigma, W) for large beta; "
                                       "see the midpoint counterexamples this test reports")
def test_c5_midpoint_convexity():
    rng = np.random.default_rng(5)
    gaps = [_midpoint_gap(rng, "boltzmann", 33.37, 3000 + k) for k in range(100)]
    violations = [g for g in gaps if g > 1e-9]
    passed = not violations
    record(5, "midpoint convexity of -L", passed,
           f"{len(violations)}/100 random pairs at beta=33.37 violate midpoint convexity "
           f"(largest gap {max(gaps):.3g}, slack 1e-9)")
    assert passed


def test_c5_blockwise_convexity_holds():
    """Supplement to criterion 5: convexity in each block the alternating fit optimises."""
    rng = np.random.default_rng(6)
    worst = -np.inf
    for k in range(100):
        graph, params, log = random_instance(4000 + k, T=60.0, n_u=6, n_c=3, beta=33.37, edge_prob=0.4, w_max=0.5)
        adjacency = UserGraph(graph.adjacency)
        f = lambda **kw: -log_likelihood(params.replace(**kw), adjacency, log).total
        S1, S2 = (project_simplex(rng.uniform(0, 1, (3, 3))) for _ in range(2))
        worst = max(worst, f(Sigma=(S1 + S2) / 2) - (f(Sigma=S1) + f(Sigma=S2)) / 2)
        M1, M2 = (rng.uniform(0.01, 0.3, params.M.shape) for _ in range(2))
        W1, W2 = (np.where(graph.adjacency, rng.uniform(0, 1, params.W.shape), 0.0) for _ in range(2))
        worst = max(worst, f(M=(M1 + M2) / 2, W=(W1 + W2) / 2) - (f(M=M1, W=W1) + f(M=M2, W=W2)) / 2)
    assert worst <= 1e-9


def test_c6_special_case_reductions():
    rng = np.random.default_rng(6)
    ic_exact, uniform_err, cc_err = True, 0.0, 0.0
    for k in range(50):
        n_c = int(rng.integers(2, 5))
        _, ic = random_params(rng, n_c=n_c, mixing="linear", beta=0.0, identity_sigma=True)
        _, zero = random_params(rng, n_c=n_c, beta=0.0)
        beta = float(rng.uniform(0.1, 40))
        _, cc = random_params(rng, n_c=n_c, beta=beta, identity_sigma=True)
        E = rng.uniform(0, 3, (ic.n_users, n_c))
        state = IntensityState(0.0, E)
        for u in range(ic.n_users):
            for c in range(n_c):
                ic_exact &= marked_intensity(ic, state, u, c) == independent_intensity(ic, state, u, c)
            uniform_err = max(uniform_err, np.abs(mixing_density(zero, state, u) - 1.0 / n_c).max())
            # independent CC oracle in plain floats
            nu = [cc.M[u, s] + E[u, s] for s in range(n_c)]
            top = max(nu)
            weights = [math.exp(beta * (x - top)) for x in nu]
            lam = math.fsum(nu)
            for c in range(n_c):
                ref = lam * weights[c] / math.fsum(weights)
                cc_err = max(cc_err, abs(marked_intensity(cc, state, u, c) - ref) / max(ref, 1e-300))
    passed = bool(ic_exact) and uniform_err <= 1e-12 and cc_err <= 1e-10
    record(6, "special-case reductions", passed,
           f"IC identity exact={bool(ic_exact)}; beta=0 max |f - 1/N_c| {uniform_err:.1e} (tol 1e-12); "
           f"CC oracle max rel err {cc_err:.1e} (tol 1e-10)")
    assert passed


def test_c7_simulator_exactness():
    _, params = generate_scenario(replace(REFERENCE, seed=7))
    log = simulate(params, 100.0, seed=77)
    increments = np.diff(np.concatenate([[0.0], cumulative_compensator(params, log)]))
    ks = stats.kstest(increments, "expon").pvalue

    rng = np.random.default_rng(8)
    M = rng.uniform(0, 0.2, (10, 3))
    poisson = ModelParams(M, np.eye(3), np.zeros((10, 10)), KernelSpec(3.0), MixingSpec("boltzmann", 33.37))
    plog = simulate(poisson, 2000.0, seed=88)
    n, _ = np.histogram(plog.times, np.linspace(0, 2000.0, 101))
    m = M.sum() * 20.0
    chi2 = stats.chi2.sf(((n - m) ** 2 / m).sum(), df=100)
    passed = len(increments) >= 500 and ks > 0.01 and chi2 > 0.01
    record(7, "simulator exactness", passed,
           f"time-rescaling KS p={ks:.3f} on {len(increments)} increments; Poisson bin-count chi-square "
           f"p={chi2:.3f} on {len(plog)} events (reject below 0.01)")
    assert passed


def test_c8_pipeline_on_bundled_fixture(tmp_path):
    start = time.perf_counter()
    pipeline(tmp_path / "a")
    elapsed = time.perf_counter() - start
    pipeline(tmp_path / "b")
    same = all((tmp_path / "a" / r).read_bytes() == (tmp_path / "b" / r).read_bytes() for r in ARTIFACTS)
    passed = elapsed < 60 and same
    record(8, "end-to-end pipeline on fixture", passed,
           f"crossval -> fit -> eval -> moments -> viz-export in {elapsed:.1f} s (limit 60 s); "
           f"outputs identical across runs={same}")
    assert passed
