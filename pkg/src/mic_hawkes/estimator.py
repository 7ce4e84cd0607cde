"""scikit-learn style estimator around the MIC model.

>>> est = MICHawkes(beta=33.37, tau=3.0).fit(log, graph=graph)   # doctest: +SKIP
>>> est.sigma_                                                   # doctest: +SKIP
>>> est.score(test, context=train)                               # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import test_log_likelihood
from .inference import FitConfig, fit
from .likelihood import log_likelihood
from .model import EventLog, ModelError, UserGraph
from .simulation import simulate


def check_event_log(X, T: float | None = None) -> EventLog:
    """Coerce ``X`` to an :class:`EventLog`.

    Accepts an EventLog, an ``(n, 3)`` array of (user, cascade, time) rows,
    or a DataFrame with ``user``, ``cascade`` and ``timestamp`` columns.
    """
    if isinstance(X, EventLog):
        return X if T is None else X.with_horizon(T)
    if hasattr(X, "columns"):
        cols = [c for c in ("user", "cascade", "timestamp") if c in X.columns]
        if len(cols) != 3:
            raise ModelError("DataFrame input needs user, cascade and timestamp columns")
        arr = X[cols].to_numpy()
    else:
        arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ModelError(f"expected an (n, 3) array of events, got shape {arr.shape}")
    users, cascades = arr[:, 0], arr[:, 1]
    if np.any(users != np.round(users)) or np.any(cascades != np.round(cascades)):
        raise ModelError("user and cascade ids must be integers")
    times = arr[:, 2].astype(float)
    if T is None:
        if not len(times):
            raise ModelError("an empty event array needs an explicit horizon T")
        T = float(times.max()) or 1.0
    return EventLog(users.astype(np.int64), cascades.astype(np.int64), times, T)


def check_graph(graph, n_users: int | None = None) -> UserGraph:
    if graph is None:
        if n_users is None:
            raise ModelError("a user graph (or n_users for an edgeless graph) is required")
        return UserGraph.empty(n_users)
    if isinstance(graph, UserGraph):
        return graph
    A = np.asarray(graph, dtype=float)
    return UserGraph(A != 0, np.where(A != 0, np.abs(A), 0.0) if np.any(A > 0) else None)


class MICHawkes(BaseEstimator):
    """Mixture of Interacting Cascades point-process model.

    Parameters
    ----------
    beta : float
        Inverse temperature of the Boltzmann mixing (ignored for linear mixing).
    tau : float
        Decay time of the exponential kernel.
    mixing : {'boltzmann', 'linear'}
    fit_sigma : bool
        Learn the cascade interaction matrix.  With ``False`` it stays at
        ``sigma`` (identity by default), which gives the IC and CC models.
    sigma : array-like or None
        Initial (or fixed) interaction matrix; uniform rows when learned
        from scratch.
    epsilon : float
        Stop when the log-likelihood gain of an outer iteration falls below this.
    max_iter : int
        Maximum number of outer iterations.
    inner_tol : float
        Gradient tolerance of the per-user solves.
    n_jobs : int or None
        Threads for the per-user sub-problems (None: sequential).

    Attributes
    ----------
    params_ : ModelParams
    sigma_, baseline_, influence_ : ndarray
        Fitted Sigma, M and W.
    trajectory_ : list of float
        Training log-likelihood after each outer iteration (index 0: initial point).
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, beta=1.0, tau=1.0, mixing="boltzmann", fit_sigma=True, sigma=None,
                 epsilon=1e-3, max_iter=50, inner_tol=1e-6, n_jobs=None):
        self.beta = beta
        self.tau = tau
        self.mixing = mixing
        self.fit_sigma = fit_sigma
        self.sigma = sigma
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.inner_tol = inner_tol
        self.n_jobs = n_jobs

    def _config(self, n_cascades: int) -> FitConfig:
        sigma = self.sigma
        if sigma is None and not self.fit_sigma:
            sigma = np.eye(n_cascades)
        return FitConfig(
            beta=float(self.beta), tau=float(self.tau), mixing=self.mixing, epsilon=self.epsilon,
            max_outer_iters=self.max_iter, inner_tol=self.inner_tol, fit_sigma=self.fit_sigma,
            sigma=None if sigma is None else np.asarray(sigma, dtype=float),
            parallel_users=self.n_jobs is not None, n_jobs=self.n_jobs,
        )

    def fit(self, X, y=None, graph=None, n_cascades=None, T=None):
        """Fit on an event log ``X`` observed on ``[0, T]`` over the edges of ``graph``."""
        log = check_event_log(X, T)
        if len(log) == 0:
            raise ModelError("cannot fit an empty event log")
        n_users = None if graph is not None else int(log.users.max()) + 1
        graph = check_graph(graph, n_users)
        if n_cascades is None:
            n_cascades = int(log.cascades.max()) + 1
        res = fit(log, graph, self._config(n_cascades), n_cascades)
        self.params_ = res.params
        self.graph_ = UserGraph(graph.adjacency, res.params.W)
        self.trajectory_ = res.trajectory
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_users_ = graph.n_users
        self.n_cascades_ = n_cascades
        return self

    @property
    def sigma_(self):
        check_is_fitted(self, "params_")
        return self.params_.Sigma

    @property
    def baseline_(self):
        check_is_fitted(self, "params_")
        return self.params_.M

    @property
    def influence_(self):
        check_is_fitted(self, "params_")
        return self.params_.W

    def score(self, X, y=None, context=None, context_fraction=1.0):
        """Log-likelihood of ``X``; with ``context``, of the window after it given that history."""
        check_is_fitted(self, "params_")
        log = check_event_log(X)
        if context is None:
            return log_likelihood(self.params_, self.graph_, log).total
        return test_log_likelihood(self.params_, self.graph_, check_event_log(context), log,
                                   context_fraction)

    def sample(self, T, seed=None, history=None, t_start=0.0) -> EventLog:
        """Simulate the fitted process on ``(t_start, T]``."""
        check_is_fitted(self, "params_")
        return simulate(self.params_, T, seed=seed, history=history, t_start=t_start)


def IC(tau=1.0, **kw) -> MICHawkes:
    """Independent cascades: identity interaction, linear mixing."""
    return MICHawkes(beta=0.0, tau=tau, mixing="linear", fit_sigma=False, **kw)


def CC(beta=1.0, tau=1.0, **kw) -> MICHawkes:
    """Correlated cascades: identity interaction, Boltzmann mixing."""
    return MICHawkes(beta=beta, tau=tau, mixing="boltzmann", fit_sigma=False, **kw)


def LinMIC(tau=1.0, **kw) -> MICHawkes:
    """Learned interaction with linear mixing."""
    return MICHawkes(beta=0.0, tau=tau, mixing="linear", fit_sigma=True, **kw)
