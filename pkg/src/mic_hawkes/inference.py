"""Alternating maximum-likelihood inference of (M, Sigma, W) and hyperparameter search.

Each outer iteration solves

1. ``Sigma = argmax L`` over row-stochastic matrices with (M, W) fixed, by
   projected Newton steps, then
2. ``(M[u], W[:, u]) = argmax L_u`` for every user with Sigma fixed, by
   bound-constrained L-BFGS.  The user problems are independent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize

from .likelihood import (
    HistoryDesign,
    ImpossibleEventError,
    SigmaTerms,
    design_log_likelihood,
    user_objective,
    window_log_likelihood,
)
from .model import EventLog, KernelSpec, MixingSpec, ModelError, ModelParams, UserGraph

logger = logging.getLogger(__name__)


class FitError(RuntimeError):
    """Inference could not produce finite parameters."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass
class FitConfig:
    beta: float = 1.0
    tau: float = 1.0
    mixing: str = "boltzmann"
    epsilon: float = 1e-3
    max_outer_iters: int = 50
    inner_tol: float = 1e-6
    max_inner_iters: int = 200
    fit_sigma: bool = True
    sigma: np.ndarray | None = None  # initial (or fixed, when fit_sigma is False) interaction matrix
    init_scheme: str = "counts"
    min_baseline: float = 1e-10
    init_weight: float = 0.1
    sigma_solver: str = "newton_projected"
    user_solver: str = "projected_quasi_newton"
    parallel_users: bool = False
    n_jobs: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ModelError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ModelError("max_outer_iters must be >= 1")
        if self.sigma_solver != "newton_projected" or self.user_solver != "projected_quasi_newton":
            raise ModelError("unsupported solver")
        if self.init_scheme != "counts":
            raise ModelError(f"unknown init scheme {self.init_scheme!r}")


@dataclass
class FitResult:
    params: ModelParams
    trajectory: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


# ---------------------------------------------------------------------------
# simplex machinery


def project_simplex(V: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row of ``V`` onto the probability simplex."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    k = np.arange(1, n + 1)
    rho = np.count_nonzero(U - css / k > 0, axis=1)
    theta = css[np.arange(len(V)), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def _simplex_qp(x: np.ndarray, g: np.ndarray, H: np.ndarray, max_iter: int = 500, tol: float = 1e-13):
    """Minimise ``g.(y - x) + 0.5 (y - x)' H (y - x)`` over row-simplex matrices ``y``.

    Accelerated projected gradient; ``x``, ``g`` have the matrix shape,
    ``H`` is the flattened (row-major) Hessian.
    """
    shape = x.shape
    L = float(np.linalg.eigvalsh(H).max())
    if L <= 0:
        return project_simplex(x - g)
    step = 1.0 / L
    y = z = x.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = g + (H @ (z - x).ravel()).reshape(shape)
        y_new = project_simplex(z - step * grad)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = y_new + ((t - 1) / t_new) * (y_new - y)
        if np.max(np.abs(y_new - y)) < tol:
            y = y_new
            break
        y, t = y_new, t_new
    return y


def solve_sigma(terms: SigmaTerms, Sigma0: np.ndarray, tol: float = 1e-6, max_iter: int = 50) -> np.ndarray:
    """Maximise the Sigma part of the log-likelihood over row-stochastic matrices."""
    n_c = Sigma0.shape[0]
    Sigma = project_simplex(Sigma0)
    if n_c == 1 or len(terms.E) == 0:
        return Sigma
    f = -terms.value(Sigma)
    if not np.isfinite(f):
        raise FitError("non-finite likelihood at the current Sigma")
    for _ in range(max_iter):
        g = -terms.gradient(Sigma)
        H = terms.hessian(Sigma, tangent_only=True)
        H = H + (1e-10 * max(np.trace(H) / len(H), 1.0)) * np.eye(len(H))
        target = _simplex_qp(Sigma, g, H)
        d = target - Sigma
        slope = float(np.sum(g * d))
        if slope > -1e-14:
            break
        alpha = 1.0
        while alpha > 1e-10:
            cand = project_simplex(Sigma + alpha * d)
            f_new = -terms.value(cand)
            if f_new <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            break
        decrease = f - f_new
        Sigma, f = cand, f_new
        if decrease < tol:
            break
    return Sigma


# ---------------------------------------------------------------------------
# user sub-problems


def _solve_user(block, m0, w0, Sigma, mixing, length, n_c, cfg: FitConfig):
    if block.n_events == 0:
        # only the compensator remains: it is minimised at the lower bounds
        return np.full(n_c, cfg.min_baseline), np.zeros_like(w0)
    f = user_objective(block, Sigma, mixing, length, n_c)
    x0 = np.concatenate([np.maximum(m0, cfg.min_baseline), w0])
    f0 = f(x0)[0]
    bounds = [(cfg.min_baseline, None)] * n_c + [(0.0, None)] * len(w0)
    res = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": cfg.max_inner_iters, "ftol": 1e-14, "gtol": cfg.inner_tol})
    x = res.x
    if not np.isfinite(res.fun) or res.fun > f0:
        x = x0
    return x[:n_c], x[n_c:]


def _user_step(params: ModelParams, design: HistoryDesign, cfg: FitConfig) -> ModelParams:
    n_c = params.n_cascades
    jobs = [
        (u, b, params.M[u], params.W[b.sources, u]) for u, b in enumerate(design.blocks)
    ]

    def run(u, b, m0, w0):
        return _solve_user(b, m0, w0, params.Sigma, params.mixing, design.length, n_c, cfg)

    if cfg.parallel_users:
        results = Parallel(n_jobs=cfg.n_jobs or -1, prefer="threads")(delayed(run)(*j) for j in jobs)
    else:
        results = [run(*j) for j in jobs]
    M = params.M.copy()
    W = np.zeros_like(params.W)
    for (u, b, _, _), (m, w) in zip(jobs, results):
        M[u] = m
        W[b.sources, u] = w
    return params.replace(M=M, W=W)


# ---------------------------------------------------------------------------
# public API


def initialize(log: EventLog, graph: UserGraph, n_cascades: int, cfg: FitConfig | None = None) -> ModelParams:
    """Strictly feasible starting point: count-based baselines, small uniform weights, uniform Sigma."""
    cfg = cfg or FitConfig()
    counts = log.counts(graph.n_users, n_cascades) if len(log) else np.zeros((graph.n_users, n_cascades))
    M = np.maximum(counts / log.T, 1e-4)
    W = np.where(graph.adjacency, cfg.init_weight, 0.0)
    if cfg.sigma is not None:
        Sigma = np.asarray(cfg.sigma, dtype=float)
    else:
        Sigma = np.full((n_cascades, n_cascades), 1.0 / n_cascades)
    return ModelParams(M, Sigma, W, KernelSpec(cfg.tau), MixingSpec(cfg.mixing, cfg.beta))


def fit(log: EventLog, graph: UserGraph, cfg: FitConfig, n_cascades: int | None = None,
        init: ModelParams | None = None) -> FitResult:
    """Alternate Sigma and per-user steps until the log-likelihood gain drops below ``epsilon``."""
    if len(log) == 0:
        raise ModelError("cannot fit an empty event log")
    if n_cascades is None:
        n_cascades = int(log.cascades.max()) + 1
    log.check_ids(graph.n_users, n_cascades)
    params = init if init is not None else initialize(log, graph, n_cascades, cfg)
    design = HistoryDesign(log, graph.adjacency, n_cascades, cfg.tau)
    try:
        ll = design_log_likelihood(params, design).total
    except ImpossibleEventError as exc:
        raise FitError(f"initial parameters give an impossible event: {exc}") from exc
    trajectory = [ll]
    converged = False
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        if cfg.fit_sigma and n_cascades > 1:
            terms = SigmaTerms(params, design)
            params = params.replace(Sigma=solve_sigma(terms, params.Sigma, tol=cfg.inner_tol))
        params = _user_step(params, design, cfg)
        ll_new = design_log_likelihood(params, design).total
        if not np.isfinite(ll_new):
            raise FitError("log-likelihood became non-finite", trajectory)
        trajectory.append(ll_new)
        logger.debug("outer iteration %d: log-likelihood %.6f", it, ll_new)
        if abs(ll_new - ll) < cfg.epsilon:
            converged = True
            break
        ll = ll_new
    return FitResult(params, trajectory, converged, it)


def cross_validate(log: EventLog, graph: UserGraph, beta_grid, tau_grid, split: float = 0.8,
                   cfg: FitConfig | None = None, n_cascades: int | None = None):
    """Grid search over (beta, tau) scored by held-out log-likelihood.

    Returns ``(best_beta, best_tau, table)``; ``table`` rows are dicts with
    ``beta``, ``tau``, ``score`` and ``error`` (failed cells have score None
    and are excluded from the argmax).
    """
    from .evaluation import split_train_test

    beta_grid, tau_grid = list(beta_grid), list(tau_grid)
    if not beta_grid or not tau_grid:
        raise ModelError("hyperparameter grids must be nonempty")
    if not 0 < split < 1:
        raise ModelError("split must lie in (0, 1)")
    base = cfg or FitConfig()
    if n_cascades is None:
        n_cascades = int(log.cascades.max()) + 1
    train, test, boundary = split_train_test(log, split)
    table = []
    for tau in tau_grid:
        for beta in beta_grid:
            row = {"beta": float(beta), "tau": float(tau), "score": None, "error": None}
            try:
                cell = FitConfig(**{**base.__dict__, "beta": beta, "tau": tau})
                res = fit(train, graph, cell, n_cascades)
                score = window_log_likelihood(res.params, graph, train, test, boundary, log.T).total
                if not np.isfinite(score):
                    raise FitError("non-finite held-out score")
                row["score"] = float(score)
            except (FitError, ModelError, FloatingPointError) as exc:
                row["error"] = str(exc)
                logger.warning("cross-validation cell beta=%s tau=%s failed: %s", beta, tau, exc)
            table.append(row)
    scored = [r for r in table if r["score"] is not None]
    if not scored:
        raise FitError("every cross-validation cell failed")
    best = max(scored, key=lambda r: r["score"])
    return best["beta"], best["tau"], table
