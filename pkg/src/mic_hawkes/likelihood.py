"""Log-likelihood, compensator and derivatives of the MIC model.

Evaluation goes through a :class:`HistoryDesign`: for every scored event of
user ``u`` and every influencer ``v`` of ``u`` it stores the decayed
per-cascade history of ``v`` just before the event.  All quantities of the
model are then linear in ``(M[u], W[:, u])`` given that design, so the
likelihood and its gradients reduce to a handful of array contractions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import EventLog, ModelError, ModelParams, UserGraph


def _log_softmax_parts(z: np.ndarray):
    """Row-wise ``logsumexp`` and softmax of ``z`` (max-shifted)."""
    zmax = z.max(axis=1, keepdims=True) if z.shape[0] else np.zeros((0, 1))
    ez = np.exp(z - zmax)
    s = ez.sum(axis=1, keepdims=True)
    return (zmax + np.log(s))[:, 0], ez / s


class ImpossibleEventError(ModelError):
    """An observed event has zero intensity under the parameters (log-likelihood is -inf)."""

    def __init__(self, event_index: int, user: int):
        self.event_index = event_index
        self.user = user
        super().__init__(f"event {event_index} (user {user}) has zero intensity: log-likelihood is -inf")


class LikelihoodBreakdown(NamedTuple):
    total: float
    per_user: np.ndarray
    event_terms: float
    compensator: float
    partition_terms: float


class Gradient(NamedTuple):
    M: np.ndarray
    W: np.ndarray
    Sigma: np.ndarray


@dataclass
class UserBlock:
    """Precomputed history for the scored events of one user."""

    index: np.ndarray  # positions of the scored events in the log
    cascades: np.ndarray  # (n,)
    sources: np.ndarray  # influencer ids
    A: np.ndarray  # (n, n_sources, n_cascades) decayed influencer history
    comp: np.ndarray  # (n_sources,) integrated kernel mass over the window

    @property
    def n_events(self) -> int:
        return len(self.index)


def _source_histories(log: EventLog, n_users: int, n_cascades: int, tau: float):
    """Per-user event times and the running decayed per-cascade counts at them."""
    out = {}
    for v in np.unique(log.users):
        sel = np.flatnonzero(log.users == v)
        tv = log.times[sel]
        cv = log.cascades[sel]
        decay = np.exp(-np.diff(tv, prepend=tv[0]) / tau)
        R = np.empty((len(sel), n_cascades))
        acc = np.zeros(n_cascades)
        for k in range(len(sel)):
            acc *= decay[k]
            acc[cv[k]] += 1.0
            R[k] = acc
        out[int(v)] = (tv, R)
    return out


def _history_at(hist, t: np.ndarray, tau: float, n_cascades: int) -> np.ndarray:
    """Decayed per-cascade counts of one source at query times (strict past)."""
    if hist is None:
        return np.zeros((len(t), n_cascades))
    tv, R = hist
    k = np.searchsorted(tv, t, side="left") - 1
    G = np.zeros((len(t), n_cascades))
    ok = k >= 0
    if np.any(ok):
        G[ok] = R[k[ok]] * np.exp(-(t[ok] - tv[k[ok]]) / tau)[:, None]
    return G


def _window_mass(times: np.ndarray, t0: float, t1: float, tau: float) -> float:
    """``sum_j int_{max(t0, t_j)}^{t1} kappa(s - t_j) ds`` over events with t_j < t1."""
    times = times[times < t1]
    start = np.maximum(t0 - times, 0.0)
    return float(np.sum(tau * (np.exp(-start / tau) - np.exp(-(t1 - times) / tau))))


class HistoryDesign:
    """Sufficient statistics of an event log for a fixed edge support and tau.

    Events with index ``>= start`` are scored; all events (including those
    before ``start``) contribute excitation.  The compensator is integrated
    over ``[t0, t1]``.
    """

    def __init__(self, log: EventLog, adjacency: np.ndarray, n_cascades: int, tau: float,
                 start: int = 0, t0: float = 0.0, t1: float | None = None):
        adjacency = np.asarray(adjacency, dtype=bool)
        n_users = adjacency.shape[0]
        log.check_ids(n_users, n_cascades)
        t1 = log.T if t1 is None else float(t1)
        if t1 < t0:
            raise ModelError(f"window end {t1} precedes start {t0}")
        self.n_users = n_users
        self.n_cascades = n_cascades
        self.tau = float(tau)
        self.t0, self.t1 = float(t0), t1
        self.length = t1 - t0
        self.adjacency = adjacency
        self.n_scored = len(log) - start
        hist = _source_histories(log, n_users, n_cascades, tau)
        mass = {v: _window_mass(tv, t0, t1, tau) for v, (tv, _) in hist.items()}
        scored_users = log.users[start:]
        self.blocks: list[UserBlock] = []
        for u in range(n_users):
            idx = start + np.flatnonzero(scored_users == u)
            sources = np.flatnonzero(adjacency[:, u])
            tq = log.times[idx]
            A = np.zeros((len(idx), len(sources), n_cascades))
            for k, v in enumerate(sources):
                A[:, k, :] = _history_at(hist.get(int(v)), tq, tau, n_cascades)
            comp = np.array([mass.get(int(v), 0.0) for v in sources])
            self.blocks.append(UserBlock(idx, log.cascades[idx], sources, A, comp))

    @classmethod
    def for_log(cls, params: ModelParams, graph: UserGraph | None, log: EventLog, **kw) -> "HistoryDesign":
        return cls(log, support(params, graph), params.n_cascades, params.tau, **kw)

    def excitation(self, u: int, W: np.ndarray) -> np.ndarray:
        """``E[i, s]`` for the scored events of user ``u``."""
        b = self.blocks[u]
        if len(b.sources) == 0:
            return np.zeros((b.n_events, self.n_cascades))
        return np.einsum("ivs,v->is", b.A, W[b.sources, u])

    def event_excitation(self, W: np.ndarray):
        """Stack the per-event excitation of all users: (E, cascades, users)."""
        Es, cs, us = [], [], []
        for u, b in enumerate(self.blocks):
            if b.n_events == 0:
                continue
            Es.append(self.excitation(u, W))
            cs.append(b.cascades)
            us.append(np.full(b.n_events, u))
        if not Es:
            return np.zeros((0, self.n_cascades)), np.zeros(0, int), np.zeros(0, int)
        return np.concatenate(Es), np.concatenate(cs), np.concatenate(us)


def support(params: ModelParams, graph: UserGraph | None) -> np.ndarray:
    adj = params.W > 0
    if graph is not None:
        params.check_graph(graph)
        adj = adj | graph.adjacency
    return adj


# ---------------------------------------------------------------------------
# per-user terms


def _user_terms(b: UserBlock, m: np.ndarray, w: np.ndarray, Sigma: np.ndarray, mixing, length: float):
    """(event_terms, partition_terms, compensator, intermediates) of one user."""
    n_c = len(m)
    if len(w):
        E = np.einsum("ivs,v->is", b.A, w)
    else:
        E = np.zeros((b.n_events, n_c))
    lam = m.sum() + E.sum(axis=1)
    nu_star = m + E @ Sigma
    rows = np.arange(b.n_events)
    comp = length * m.sum() + float(w @ b.comp)
    if mixing.kind == "boltzmann":
        z = mixing.beta * nu_star
        lse, p = _log_softmax_parts(z)
        with np.errstate(divide="ignore"):
            ev = np.log(lam) + z[rows, b.cascades]
        part = -lse
    else:
        S = nu_star.sum(axis=1)
        p = None
        with np.errstate(divide="ignore"):
            ev = np.log(nu_star[rows, b.cascades]) + np.log(lam)
            part = -np.log(S)
    return ev, part, comp, (E, lam, nu_star, p)


def _check_finite(b: UserBlock, ev: np.ndarray, u: int):
    bad = ~np.isfinite(ev)
    if np.any(bad):
        raise ImpossibleEventError(int(b.index[np.argmax(bad)]), u)


def design_log_likelihood(params: ModelParams, design: HistoryDesign) -> LikelihoodBreakdown:
    per_user = np.zeros(design.n_users)
    ev_total = part_total = comp_total = 0.0
    for u, b in enumerate(design.blocks):
        w = params.W[b.sources, u]
        ev, part, comp, _ = _user_terms(b, params.M[u], w, params.Sigma, params.mixing, design.length)
        _check_finite(b, ev, u)
        e, p = float(ev.sum()), float(part.sum())
        per_user[u] = e + p - comp
        ev_total += e
        part_total += p
        comp_total += comp
    return LikelihoodBreakdown(float(per_user.sum()), per_user, ev_total, comp_total, part_total)


def user_objective(b: UserBlock, Sigma: np.ndarray, mixing, length: float, n_cascades: int):
    """Negative partial log-likelihood of one user and its gradient in ``x = (M[u], W[sources, u])``.

    Returns ``+inf`` (with a zero gradient) at points where an event is impossible.
    """
    A_sigma = b.A @ Sigma if len(b.sources) else np.zeros((b.n_events, 0, n_cascades))
    a_sum = b.A.sum(axis=2)
    rows = np.arange(b.n_events)

    def f(x):
        m, w = x[:n_cascades], x[n_cascades:]
        ev, part, comp, (E, lam, nu_star, p) = _user_terms(b, m, w, Sigma, mixing, length)
        val = float(ev.sum() + part.sum()) - comp
        if not np.isfinite(val):
            return np.inf, np.zeros_like(x)
        inv_lam = 1.0 / lam
        gm = np.full(n_cascades, inv_lam.sum() - length)
        gw = a_sum.T @ inv_lam - b.comp
        if mixing.kind == "boltzmann":
            resid = -p
            resid[rows, b.cascades] += 1.0
            resid *= mixing.beta
            gm += resid.sum(axis=0)
            gw += np.einsum("ivc,ic->v", A_sigma, resid)
        else:
            S = nu_star.sum(axis=1)
            picked = 1.0 / nu_star[rows, b.cascades]
            gm += np.bincount(b.cascades, weights=picked, minlength=n_cascades) - (1.0 / S).sum()
            if len(w):
                gw += np.einsum("iv,i->v", A_sigma[rows, :, b.cascades], picked)
                gw -= np.einsum("iv,i->v", A_sigma.sum(axis=2), 1.0 / S)
        return -val, -np.concatenate([gm, gw])

    return f


# ---------------------------------------------------------------------------
# Sigma terms (all users pooled)


class SigmaTerms:
    """The Sigma-dependent part of the log-likelihood for fixed (M, W)."""

    def __init__(self, params: ModelParams, design: HistoryDesign):
        self.E, self.cascades, users = design.event_excitation(params.W)
        self.base = params.M[users]
        self.mixing = params.mixing
        self.n_cascades = params.n_cascades
        # lam does not depend on Sigma
        self.log_lam = np.log(params.mu[users] + self.E.sum(axis=1)) if len(users) else np.zeros(0)

    def value(self, Sigma: np.ndarray) -> float:
        """Event and partition terms of the log-likelihood (the compensator does not involve Sigma)."""
        nu_star = self.base + self.E @ Sigma
        rows = np.arange(len(nu_star))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.mixing.kind == "boltzmann":
                z = self.mixing.beta * nu_star
                val = z[rows, self.cascades].sum() - _log_softmax_parts(z)[0].sum()
            else:
                val = np.log(nu_star[rows, self.cascades]).sum() - np.log(nu_star.sum(axis=1)).sum()
        val += self.log_lam.sum()
        return float(val) if np.isfinite(val) else -np.inf

    def gradient(self, Sigma: np.ndarray) -> np.ndarray:
        nu_star = self.base + self.E @ Sigma
        rows = np.arange(len(nu_star))
        if self.mixing.kind == "boltzmann":
            resid = -self.mixing.density(nu_star)
            resid[rows, self.cascades] += 1.0
            return self.mixing.beta * (self.E.T @ resid)
        resid = np.zeros_like(nu_star)
        resid[rows, self.cascades] = 1.0 / nu_star[rows, self.cascades]
        resid -= (1.0 / nu_star.sum(axis=1))[:, None]
        return self.E.T @ resid

    def hessian(self, Sigma: np.ndarray, tangent_only: bool = False) -> np.ndarray:
        """Hessian of the negative log-likelihood in row-major flattened Sigma.

        For linear mixing, ``tangent_only`` drops the normaliser curvature,
        which vanishes along directions preserving the row sums of Sigma.
        """
        n_c = self.n_cascades
        nu_star = self.base + self.E @ Sigma
        E = self.E
        if self.mixing.kind == "boltzmann":
            p = self.mixing.density(nu_star)
            b2 = self.mixing.beta ** 2
            diag = np.einsum("is,it,ic->sct", E, E, p)
            H = -np.einsum("is,it,ic,id->sctd", E, E, p, p)
            idx = np.arange(n_c)
            H[:, idx, :, idx] += diag.transpose(1, 0, 2)
            H *= b2
        else:
            rows = np.arange(len(nu_star))
            picked = np.zeros_like(nu_star)
            picked[rows, self.cascades] = 1.0 / nu_star[rows, self.cascades]
            H = np.einsum("is,it,ic,id->sctd", E, E, picked, picked)
            if not tangent_only:
                inv_s2 = 1.0 / nu_star.sum(axis=1) ** 2
                H -= np.einsum("is,it,i->st", E, E, inv_s2)[:, None, :, None]
        return H.reshape(n_c * n_c, n_c * n_c)


# ---------------------------------------------------------------------------
# public API


def compensator(params: ModelParams, graph: UserGraph | None, log: EventLog,
                t0: float = 0.0, t1: float | None = None) -> float:
    """``int_{t0}^{t1} sum_u lam_u(s) ds`` in closed form.

    Events before ``t0`` still contribute their decayed excitation.
    """
    t1 = log.T if t1 is None else float(t1)
    if t1 < t0:
        raise ModelError(f"t1={t1} precedes t0={t0}")
    adj = support(params, graph)
    out_w = (params.W * adj).sum(axis=1)
    times = log.times
    keep = times < t1
    start = np.maximum(t0 - times[keep], 0.0)
    tau = params.tau
    mass = tau * (np.exp(-start / tau) - np.exp(-(t1 - times[keep]) / tau))
    return float((t1 - t0) * params.mu.sum() + np.dot(out_w[log.users[keep]], mass))


def cumulative_compensator(params: ModelParams, log: EventLog) -> np.ndarray:
    """``Lambda(t_i) = int_0^{t_i} sum_u lam_u`` at every event time."""
    tau = params.tau
    out_w = params.W.sum(axis=1)[log.users]
    n = len(log)
    res = np.empty(n)
    mu = params.mu.sum()
    # S = sum_{t_j < t} out_w_j exp(-(t - t_j)/tau), C = sum_{t_j < t} out_w_j
    S = C = 0.0
    t_prev = 0.0
    pending = 0.0
    for i in range(n):
        t = log.times[i]
        if t > t_prev:
            S = (S + pending) * np.exp(-(t - t_prev) / tau)
            C += pending
            pending = 0.0
            t_prev = t
        res[i] = mu * t + tau * (C - S)
        pending += out_w[i]
    return res


def log_likelihood(params: ModelParams, graph: UserGraph | None, log: EventLog) -> LikelihoodBreakdown:
    """Full log-likelihood of ``log`` on ``[0, T]`` with its additive breakdown."""
    return design_log_likelihood(params, HistoryDesign.for_log(params, graph, log))


def partial_log_likelihood(params: ModelParams, graph: UserGraph | None, log: EventLog, u: int) -> float:
    if not 0 <= u < params.n_users:
        raise ModelError(f"user id {u} out of range")
    return float(log_likelihood(params, graph, log).per_user[u])


def window_log_likelihood(params: ModelParams, graph: UserGraph | None, context: EventLog,
                          scored: EventLog, t0: float, t1: float | None = None) -> LikelihoodBreakdown:
    """Log-likelihood of ``scored`` on ``[t0, t1]`` with ``context`` as prior history."""
    t1 = scored.T if t1 is None else t1
    joined = EventLog(
        np.concatenate([context.users, scored.users]),
        np.concatenate([context.cascades, scored.cascades]),
        np.concatenate([context.times, scored.times]),
        max(t1, context.T),
    )
    if len(joined) and np.any(np.diff(joined.times) < 0):
        raise ModelError("context events must precede scored events")
    design = HistoryDesign.for_log(params, graph, joined, start=len(context), t0=t0, t1=t1)
    return design_log_likelihood(params, design)


def gradient(params: ModelParams, graph: UserGraph | None, log: EventLog,
             design: HistoryDesign | None = None) -> Gradient:
    """Analytic partial derivatives of the log-likelihood in M, W and Sigma."""
    design = design or HistoryDesign.for_log(params, graph, log)
    n_c = params.n_cascades
    gM = np.zeros_like(params.M)
    gW = np.zeros_like(params.W)
    for u, b in enumerate(design.blocks):
        x = np.concatenate([params.M[u], params.W[b.sources, u]])
        f = user_objective(b, params.Sigma, params.mixing, design.length, n_c)
        val, g = f(x)
        if not np.isfinite(val):
            raise ImpossibleEventError(int(b.index[0]) if b.n_events else -1, u)
        gM[u] = -g[:n_c]
        gW[b.sources, u] = -g[n_c:]
    gS = SigmaTerms(params, design).gradient(params.Sigma)
    return Gradient(gM, gW, gS)


def hessian_sigma(params: ModelParams, graph: UserGraph | None, log: EventLog) -> np.ndarray:
    """Hessian of the negative log-likelihood in flattened Sigma (index ``s * n_c + c``)."""
    design = HistoryDesign.for_log(params, graph, log)
    return SigmaTerms(params, design).hessian(params.Sigma)
