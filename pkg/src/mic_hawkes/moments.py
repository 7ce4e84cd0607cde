"""First moments of the MIC process: expected intensities and event counts.

With ``B = (I - tau W^T)^-1`` and ``mu = M.sum(1)``::

    E[lam(t)] = [B + (I - B) expm(-B^-1 t / tau)] mu
    E[n(t)]   = [B t + (I - B) B tau (I - expm(-B^-1 t / tau))] mu

The per-cascade split uses the stationary closure
``E[lam_u^c] ~ E[lam_u] phi((B M Sigma)[u, c]) / sum_s phi((B M Sigma)[u, s])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .model import ModelError, ModelParams


class SingularSystemError(ModelError):
    """``I - tau W^T`` is singular, so B does not exist."""


class UnstableError(ModelError):
    """Stationary quantities requested for parameters with rho(W) >= 1/tau."""


@dataclass
class MomentCurves:
    times: np.ndarray
    expected_intensity: np.ndarray  # (n_users, n_times)
    expected_counts: np.ndarray  # (n_users, n_times)
    per_cascade_intensity: np.ndarray | None  # (n_users, n_cascades, n_times), stationary closure
    stationary_intensity: np.ndarray | None  # (n_users,) B mu, None when unstable
    stable: bool
    closure: str = "stationary-softmax"


def stability(params: ModelParams) -> tuple[float, bool]:
    """Spectral radius of ``W^T`` and whether it is below ``1 / tau``."""
    W = params.W
    rho = float(np.max(np.abs(np.linalg.eigvals(W.T)))) if np.any(W) else 0.0
    return rho, rho < 1.0 / params.tau


def _inverse_b(params: ModelParams) -> np.ndarray:
    return np.eye(params.n_users) - params.tau * params.W.T


def b_matrix(params: ModelParams) -> np.ndarray:
    Binv = _inverse_b(params)
    eig = np.linalg.eigvals(Binv)
    worst = eig[np.argmin(np.abs(eig))]
    if abs(worst) < 1e-12 * max(1.0, np.abs(eig).max()):
        raise SingularSystemError(
            f"I - tau W^T is singular (eigenvalue {worst:.3g}, i.e. tau * rho(W) = 1)"
        )
    return np.linalg.solve(Binv, np.eye(params.n_users))


def expected_intensity(params: ModelParams, times) -> np.ndarray:
    """``E[lam_u(t)]`` for every user (rows) and time (columns)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    B = b_matrix(params)
    Binv = _inverse_b(params)
    mu = params.mu
    I = np.eye(params.n_users)
    out = np.empty((params.n_users, len(times)))
    for k, t in enumerate(times):
        out[:, k] = (B + (I - B) @ expm(-Binv * t / params.tau)) @ mu
    return out


def expected_counts(params: ModelParams, times) -> np.ndarray:
    """``E[n_u(t)]`` for every user (rows) and time (columns)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    B = b_matrix(params)
    Binv = _inverse_b(params)
    mu = params.mu
    I = np.eye(params.n_users)
    tau = params.tau
    out = np.empty((params.n_users, len(times)))
    for k, t in enumerate(times):
        out[:, k] = (B * t + (I - B) @ B * tau @ (I - expm(-Binv * t / tau))) @ mu
    return out


def _stationary_split(params: ModelParams, B: np.ndarray) -> np.ndarray:
    """Rows of ``phi(B M Sigma)`` normalised into mark probabilities."""
    return params.mixing.density(B @ params.M @ params.Sigma)


def stationary_cascade_intensity(params: ModelParams) -> np.ndarray:
    """Stationary per-cascade intensity ``lam_inf[u] * split[u, c]``; rows sum to ``(B mu)[u]``."""
    rho, stable = stability(params)
    if not stable:
        raise UnstableError(
            f"stationary intensities need tau * rho(W) < 1; got rho={rho:.4g}, 1/tau={1 / params.tau:.4g}"
        )
    B = b_matrix(params)
    lam_inf = B @ params.mu
    return lam_inf[:, None] * _stationary_split(params, B)


def moment_curves(params: ModelParams, times) -> MomentCurves:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lam = expected_intensity(params, times)
    counts = expected_counts(params, times)
    _, stable = stability(params)
    per_cascade = stationary = None
    if stable:
        B = b_matrix(params)
        stationary = B @ params.mu
        per_cascade = lam[:, None, :] * _stationary_split(params, B)[:, :, None]
    return MomentCurves(times, lam, counts, per_cascade, stationary, stable)


def first_moment_ode(params: ModelParams, times, rtol: float = 1e-9, atol: float = 1e-12) -> np.ndarray:
    """Integrate the per-(user, cascade) first-moment system numerically.

    ``d E[nu_u^c]/dt = -(E[nu_u^c] - M[u, c]) / tau + sum_j W[j, u] E[lam_j] split[j, c]``
    with the mark split closed by the stationary approximation.  Returns
    an array of shape ``(n_users, n_cascades, n_times)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n_u, n_c = params.M.shape
    tau = params.tau
    W = params.W
    try:
        split = _stationary_split(params, b_matrix(params))
    except SingularSystemError:
        split = params.mixing.density(params.M @ params.Sigma)
    M = params.M

    def rhs(_t, y):
        nu = y.reshape(n_u, n_c)
        lam = nu.sum(axis=1)
        return (-(nu - M) / tau + W.T @ (lam[:, None] * split)).ravel()

    sol = solve_ivp(rhs, (0.0, float(times.max()) if len(times) else 0.0), M.ravel(),
                    t_eval=times, method="LSODA", rtol=rtol, atol=atol)
    if not sol.success:
        raise ModelError(f"moment ODE integration failed: {sol.message}")
    return sol.y.reshape(n_u, n_c, len(times))
