"""Goodness-of-fit and realized-activity metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import window_log_likelihood
from .model import EventLog, ModelError, ModelParams, UserGraph
from .simulation import empirical_intensity, replication_seeds, simulate

logger = logging.getLogger(__name__)


def split_train_test(log: EventLog, fraction: float = 0.8):
    """Split by event index: the first ``floor(fraction * n)`` events train.

    Returns ``(train, test, boundary)``.  ``boundary`` is the time of the
    last training event; it is the horizon of ``train`` and the start of
    the test window.
    """
    if not 0 < fraction < 1:
        raise ModelError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(log)
    if n < 2:
        raise ModelError("need at least 2 events to split")
    k = int(math.floor(fraction * n))
    k = min(max(k, 1), n - 1)
    boundary = float(log.times[k - 1])
    if boundary <= 0:
        boundary = float(np.nextafter(0.0, 1.0))
    return log.slice(0, k, T=boundary), log.slice(k), boundary


def _context(train: EventLog, fraction: float) -> EventLog:
    if not 0 < fraction <= 1:
        raise ModelError("context fraction must lie in (0, 1]")
    keep = int(math.ceil(fraction * len(train)))
    return train.slice(len(train) - keep)


def test_log_likelihood(params: ModelParams, graph: UserGraph | None, train: EventLog, test: EventLog,
                        context_fraction: float = 1.0, per_user: bool = False):
    """Log-likelihood of ``test`` on ``[train.T, test.T]`` given (the last part of) ``train``."""
    if len(train) and len(test) and test.times[0] < train.times[-1]:
        raise ModelError("test events must not precede training events")
    res = window_log_likelihood(params, graph, _context(train, context_fraction) if len(train) else train,
                                test, train.T, test.T)
    return res.per_user if per_user else res.total


test_log_likelihood.__test__ = False  # not a pytest test


def inverse_l1(real_series, sim_series) -> float:
    """``1 / (1 + mean_b |real_b - sim_b|)``; 1 iff the series coincide."""
    a = np.asarray(real_series, dtype=float).ravel()
    b = np.asarray(sim_series, dtype=float).ravel()
    if a.shape != b.shape:
        raise ModelError(f"series lengths differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ModelError("empty series")
    return float(1.0 / (1.0 + np.mean(np.abs(a - b))))


def pearson(real_series, sim_series) -> float | None:
    """Product-moment correlation, or ``None`` when either series is constant."""
    a = np.asarray(real_series, dtype=float).ravel()
    b = np.asarray(sim_series, dtype=float).ravel()
    if a.shape != b.shape:
        raise ModelError(f"series lengths differ: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        logger.info("pearson correlation undefined for a zero-variance series")
        return None
    return float(np.clip((a @ b) / den, -1.0, 1.0))


@dataclass
class RankedActivity:
    real: np.ndarray
    sim_mean: np.ndarray | None = None
    sim_std: np.ndarray | None = None

    def to_dict(self):
        conv = lambda x: None if x is None else np.asarray(x).tolist()
        return {"real": conv(self.real), "sim_mean": conv(self.sim_mean), "sim_std": conv(self.sim_std)}


def _ranked_counts(log: EventLog, by: str, n: int) -> np.ndarray:
    labels = log.users if by == "user" else log.cascades
    return np.sort(np.bincount(labels, minlength=n))[::-1]


def ranked_activity(real: EventLog, simulated, by: str = "user", n: int | None = None) -> RankedActivity:
    """Entity counts sorted descending, with mean/std per rank over simulated replications."""
    if by not in ("user", "cascade"):
        raise ModelError(f"by must be 'user' or 'cascade', got {by!r}")
    simulated = list(simulated)
    if n is None:
        labels = [real.users if by == "user" else real.cascades]
        labels += [s.users if by == "user" else s.cascades for s in simulated]
        n = max((int(l.max()) + 1 for l in labels if len(l)), default=1)
    out = RankedActivity(_ranked_counts(real, by, n))
    if simulated:
        sims = np.array([_ranked_counts(s, by, n) for s in simulated], dtype=float)
        out.sim_mean = sims.mean(axis=0)
        out.sim_std = sims.std(axis=0)
    return out


def quantile_log_likelihood(params: ModelParams, graph: UserGraph | None, train: EventLog, test: EventLog,
                            top_fraction: float) -> float:
    """Test log-likelihood summed over the most active users of the training period."""
    if not 0 < top_fraction <= 1:
        raise ModelError("top_fraction must lie in (0, 1]")
    per_user = test_log_likelihood(params, graph, train, test, per_user=True)
    activity = np.bincount(train.users, minlength=params.n_users)
    k = int(math.ceil(top_fraction * params.n_users))
    # stable sort: ties resolved by user id
    top = np.argsort(-activity, kind="stable")[:k]
    return float(per_user[top].sum())


@dataclass
class MetricReport:
    test_loglik: float
    loglik_vs_train_fraction: dict = field(default_factory=dict)
    inverse_l1: dict = field(default_factory=dict)
    pearson: dict = field(default_factory=dict)
    ranked_users: RankedActivity | None = None
    ranked_cascades: RankedActivity | None = None
    quantile_loglik: dict = field(default_factory=dict)
    n_bins: int = 100
    replications: int = 10

    def to_dict(self) -> dict:
        return {
            "test_loglik": self.test_loglik,
            "loglik_vs_train_fraction": {str(k): v for k, v in self.loglik_vs_train_fraction.items()},
            "inverse_l1": self.inverse_l1,
            "pearson": self.pearson,
            "ranked_users": self.ranked_users.to_dict() if self.ranked_users else None,
            "ranked_cascades": self.ranked_cascades.to_dict() if self.ranked_cascades else None,
            "quantile_loglik": {str(k): v for k, v in self.quantile_loglik.items()},
            "n_bins": self.n_bins,
            "replications": self.replications,
        }


def simulate_test_window(params: ModelParams, train: EventLog, test: EventLog, replications: int, seed):
    """Warm-started replications of the test window, one child stream each."""
    return [
        simulate(params, test.T, seed=np.random.default_rng(ss), history=train, t_start=train.T)
        for ss in replication_seeds(seed, replications)
    ]


def evaluate(params: ModelParams, graph: UserGraph | None, train: EventLog, test: EventLog,
             n_bins: int = 100, replications: int = 10, seed: int = 0,
             train_fractions=(0.2, 0.6, 1.0), top_fractions=(0.05, 0.1, 0.25)) -> MetricReport:
    """All goodness-of-fit and realized-activity metrics on the test window."""
    n_c = params.n_cascades
    report = MetricReport(test_log_likelihood(params, graph, train, test), n_bins=n_bins,
                          replications=replications)
    for frac in train_fractions:
        report.loglik_vs_train_fraction[float(frac)] = test_log_likelihood(params, graph, train, test, frac)
    for q in top_fractions:
        report.quantile_loglik[float(q)] = quantile_log_likelihood(params, graph, train, test, q)

    sims = simulate_test_window(params, train, test, replications, seed)
    width = (test.T - train.T) / n_bins
    if width <= 0:
        raise ModelError("test window has zero length")
    kw = dict(n_cascades=n_c, t0=train.T, t1=test.T)
    _, real_c = empirical_intensity(test, width, "per_cascade", **kw)
    sim_c = np.array([empirical_intensity(s, width, "per_cascade", **kw)[1] for s in sims])
    real_c, sim_c = real_c[:, :n_bins], sim_c[:, :, :n_bins]
    for c in range(n_c):
        vals = [inverse_l1(real_c[c], s[c]) for s in sim_c]
        report.inverse_l1[str(c)] = float(np.mean(vals))
        r = [pearson(real_c[c], s[c]) for s in sim_c]
        r = [x for x in r if x is not None]
        report.pearson[str(c)] = float(np.mean(r)) if r else None
    report.inverse_l1["overall"] = float(np.mean([inverse_l1(real_c.sum(0), s.sum(0)) for s in sim_c]))
    r = [pearson(real_c.sum(0), s.sum(0)) for s in sim_c]
    r = [x for x in r if x is not None]
    report.pearson["overall"] = float(np.mean(r)) if r else None
    report.ranked_users = ranked_activity(test, sims, "user", params.n_users)
    report.ranked_cascades = ranked_activity(test, sims, "cascade", n_c)
    return report
