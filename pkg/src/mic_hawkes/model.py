"""Domain types and intensity equations of the Mixture of Interacting Cascades model.

The model is a marked multivariate Hawkes process over ``n_users`` users and
``n_cascades`` cascades.  For user ``u`` and cascade ``c``:

* independent intensity   ``nu[u, c]  = M[u, c] + E[u, c]``
* contextual intensity    ``nu*[u, c] = M[u, c] + sum_s Sigma[s, c] E[u, s]``
* mixing density          ``f[u, c]   = phi(nu*[u, c]) / sum_s phi(nu*[u, s])``
* global intensity        ``lam[u]    = sum_c nu[u, c]``
* marked intensity        ``lam[u, c] = lam[u] f[u, c]``

where ``E[u, c] = sum_{v -> u} W[v, u] sum_{t_j < t, (v, c)} exp(-(t - t_j) / tau)``.
``W[v, u]`` is the influence of ``v`` on ``u``; ``Sigma`` is row-stochastic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

SIGMA_ROW_TOL = 1e-9


class ModelError(ValueError):
    """Invalid model input (ids, shapes, parameter domains)."""


class TimeReversalError(ModelError):
    """An intensity state was asked to move backwards in time."""


class StaleStateError(ModelError):
    """An event was applied to a state that was not advanced to its time."""


class Event(NamedTuple):
    user: int
    cascade: int
    time: float


@dataclass(frozen=True)
class EventLog:
    """Time-ordered (user, cascade, time) marks observed on ``[0, T]``.

    Events are stored column-wise and sorted by ``(time, user, cascade)``.
    Use :meth:`from_events` or :meth:`from_arrays` rather than the raw
    constructor when the input may be unsorted.
    """

    users: np.ndarray
    cascades: np.ndarray
    times: np.ndarray
    T: float

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64).reshape(-1)
        cascades = np.asarray(self.cascades, dtype=np.int64).reshape(-1)
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if not (len(users) == len(cascades) == len(times)):
            raise ModelError("users, cascades and times must have equal length")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ModelError(f"horizon T must be positive and finite, got {self.T}")
        if len(times):
            if not np.all(np.isfinite(times)) or times.min() < 0:
                raise ModelError("event times must be finite and nonnegative")
            if times.max() > self.T:
                raise ModelError(f"event time {times.max()} exceeds horizon {self.T}")
            if users.min() < 0 or cascades.min() < 0:
                raise ModelError("user and cascade ids must be nonnegative")
            order = np.lexsort((cascades, users, times))
            if np.any(order != np.arange(len(order))):
                users, cascades, times = users[order], cascades[order], times[order]
        for name, arr in (("users", users), ("cascades", cascades), ("times", times)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "T", float(self.T))

    @classmethod
    def from_events(cls, events, T: float) -> "EventLog":
        events = list(events)
        if not events:
            return cls.empty(T)
        users, cascades, times = zip(*((e[0], e[1], e[2]) for e in events))
        return cls(np.array(users), np.array(cascades), np.array(times, dtype=float), T)

    @classmethod
    def from_arrays(cls, users, cascades, times, T: float) -> "EventLog":
        return cls(users, cascades, times, T)

    @classmethod
    def empty(cls, T: float) -> "EventLog":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), T)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Event]:
        for u, c, t in zip(self.users.tolist(), self.cascades.tolist(), self.times.tolist()):
            yield Event(u, c, t)

    def __getitem__(self, i) -> Event:
        return Event(int(self.users[i]), int(self.cascades[i]), float(self.times[i]))

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.T == other.T
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.cascades, other.cascades)
            and np.array_equal(self.times, other.times)
        )

    __hash__ = None

    def slice(self, start: int, stop: int | None = None, T: float | None = None) -> "EventLog":
        """Events ``start:stop`` (by index) with horizon ``T`` (default: unchanged)."""
        sl = slice(start, stop)
        return EventLog(self.users[sl], self.cascades[sl], self.times[sl], self.T if T is None else T)

    def concat(self, other: "EventLog") -> "EventLog":
        return EventLog(
            np.concatenate([self.users, other.users]),
            np.concatenate([self.cascades, other.cascades]),
            np.concatenate([self.times, other.times]),
            max(self.T, other.T),
        )

    def with_horizon(self, T: float) -> "EventLog":
        return EventLog(self.users, self.cascades, self.times, T)

    def counts(self, n_users: int, n_cascades: int) -> np.ndarray:
        """Event counts per (user, cascade)."""
        out = np.zeros((n_users, n_cascades), dtype=np.int64)
        np.add.at(out, (self.users, self.cascades), 1)
        return out

    def check_ids(self, n_users: int, n_cascades: int) -> None:
        if len(self) and (self.users.max() >= n_users or self.cascades.max() >= n_cascades):
            raise ModelError(
                f"event ids out of range for {n_users} users / {n_cascades} cascades"
            )


@dataclass(frozen=True)
class UserGraph:
    """Directed influence structure; ``weights[v, u]`` is the influence of v on u.

    ``adjacency`` is the edge support.  Weights are zero off the support; an
    edge may carry a zero weight (e.g. an adjacency-only graph awaiting a fit).
    """

    adjacency: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] == 0:
            raise ModelError(f"adjacency must be a nonempty square matrix, got {adj.shape}")
        if self.weights is None:
            w = np.zeros(adj.shape)
        else:
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != adj.shape:
                raise ModelError("weights and adjacency shapes differ")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ModelError("influence weights must be finite and nonnegative")
            if np.any(w[~adj] != 0):
                raise ModelError("nonzero weight outside the edge support")
        adj = adj.copy()
        adj.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, W) -> "UserGraph":
        W = np.asarray(W, dtype=float)
        return cls(W > 0, W)

    @classmethod
    def empty(cls, n_users: int) -> "UserGraph":
        return cls(np.zeros((n_users, n_users), dtype=bool))

    @property
    def n_users(self) -> int:
        return self.adjacency.shape[0]

    def influencers(self, u: int) -> np.ndarray:
        """Users v with an edge v -> u (the sources of influence on u)."""
        return np.flatnonzero(self.adjacency[:, u])

    def followers(self, v: int) -> np.ndarray:
        """Users u influenced by v."""
        return np.flatnonzero(self.adjacency[v])

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())


@dataclass(frozen=True)
class KernelSpec:
    """Exponential kernel ``kappa(t) = 1{t > 0} exp(-t / tau)``."""

    tau: float
    kind: str = "exponential"

    def __post_init__(self):
        if self.kind != "exponential":
            raise ModelError(f"unsupported kernel kind {self.kind!r}")
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ModelError(f"tau must be positive, got {self.tau}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.exp(-np.maximum(t, 0) / self.tau), 0.0)

    def integral(self, a, b):
        """``int_a^b kappa(s) ds`` for ``0 <= a <= b``."""
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        return self.tau * (np.exp(-a / self.tau) - np.exp(-b / self.tau))


@dataclass(frozen=True)
class MixingSpec:
    """Cascade mixing map: ``linear`` (phi(x) = x) or ``boltzmann`` (phi(x) = exp(beta x))."""

    kind: str = "boltzmann"
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "boltzmann"):
            raise ModelError(f"mixing kind must be 'linear' or 'boltzmann', got {self.kind!r}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ModelError(f"beta must be finite and >= 0, got {self.beta}")

    def density(self, nu_star: np.ndarray) -> np.ndarray:
        """Normalise the last axis of ``nu_star`` into probability vectors."""
        nu_star = np.asarray(nu_star, dtype=float)
        if self.kind == "boltzmann":
            z = self.beta * nu_star
            z = z - z.max(axis=-1, keepdims=True)
            p = np.exp(z)
            return p / p.sum(axis=-1, keepdims=True)
        total = nu_star.sum(axis=-1, keepdims=True)
        degenerate = total <= 0
        if np.any(degenerate):
            # lam_u is zero wherever this happens, so the mark is never drawn
            logger.warning("linear mixing with all-zero contextual intensities; using uniform density")
            n = nu_star.shape[-1]
            return np.where(degenerate, 1.0 / n, nu_star / np.where(degenerate, 1.0, total))
        return nu_star / total


@dataclass(frozen=True)
class ModelParams:
    """Theta = (M, Sigma, W) with kernel and mixing hyperparameters."""

    M: np.ndarray
    Sigma: np.ndarray
    W: np.ndarray
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec(1.0))
    mixing: MixingSpec = field(default_factory=MixingSpec)

    def __post_init__(self):
        M = np.array(self.M, dtype=np.float64, ndmin=2)
        S = np.array(self.Sigma, dtype=np.float64, ndmin=2)
        W = np.array(self.W, dtype=np.float64, ndmin=2)
        n_u, n_c = M.shape
        if S.shape != (n_c, n_c):
            raise ModelError(f"Sigma must be {n_c}x{n_c}, got {S.shape}")
        if W.shape != (n_u, n_u):
            raise ModelError(f"W must be {n_u}x{n_u}, got {W.shape}")
        for name, arr in (("M", M), ("Sigma", S), ("W", W)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ModelError(f"{name} must be finite and nonnegative")
            arr.setflags(write=False)
        if np.any(S > 1 + SIGMA_ROW_TOL) or np.any(np.abs(S.sum(axis=1) - 1) > SIGMA_ROW_TOL):
            raise ModelError("every row of Sigma must lie on the probability simplex")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "W", W)

    @property
    def n_users(self) -> int:
        return self.M.shape[0]

    @property
    def n_cascades(self) -> int:
        return self.M.shape[1]

    @property
    def tau(self) -> float:
        return self.kernel.tau

    @property
    def beta(self) -> float:
        return self.mixing.beta

    @property
    def mu(self) -> np.ndarray:
        """Total baseline per user, ``sum_c M[u, c]``."""
        return self.M.sum(axis=1)

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def graph(self) -> UserGraph:
        return UserGraph.from_weights(self.W)

    def check_graph(self, graph: UserGraph) -> None:
        if graph.n_users != self.n_users:
            raise ModelError(f"graph has {graph.n_users} users, params have {self.n_users}")
        if np.any(self.W[~graph.adjacency] != 0):
            raise ModelError("W has nonzero weights outside the graph's edge support")


@dataclass(frozen=True)
class IntensityState:
    """Excitation accumulators at time ``t_last``.

    ``E[u, c]`` is the decayed excitation of user u on cascade c from the
    events of u's influencers strictly before ``t_last`` plus any events
    already applied at ``t_last``.
    """

    t_last: float
    E: np.ndarray

    @classmethod
    def initial(cls, n_users: int, n_cascades: int, t: float = 0.0) -> "IntensityState":
        return cls(t, np.zeros((n_users, n_cascades)))


def advance(state: IntensityState, t: float, tau: float) -> IntensityState:
    """Decay every accumulator from ``state.t_last`` to ``t``."""
    if t < state.t_last:
        raise TimeReversalError(f"cannot advance from {state.t_last} back to {t}")
    if t == state.t_last:
        return state
    return IntensityState(t, state.E * np.exp(-(t - state.t_last) / tau))


def apply_event(state: IntensityState, event: Event, graph: UserGraph | np.ndarray) -> IntensityState:
    """Add the jump of ``event`` to every user it influences.

    ``graph`` may be a :class:`UserGraph` or a raw weight matrix.
    """
    if event.time != state.t_last:
        raise StaleStateError(f"state is at t={state.t_last}, event at t={event.time}")
    W = graph.weights if isinstance(graph, UserGraph) else np.asarray(graph)
    out_w = W[event.user]
    if not np.any(out_w):
        return state
    E = state.E.copy()
    E[:, event.cascade] += out_w
    return IntensityState(state.t_last, E)


def _check_ids(params: ModelParams, u=None, c=None):
    if u is not None and not 0 <= u < params.n_users:
        raise ModelError(f"user id {u} out of range [0, {params.n_users})")
    if c is not None and not 0 <= c < params.n_cascades:
        raise ModelError(f"cascade id {c} out of range [0, {params.n_cascades})")


def independent_intensity(params: ModelParams, state: IntensityState, u: int, c: int) -> float:
    _check_ids(params, u, c)
    return float(params.M[u, c] + state.E[u, c])


def contextual_intensities(params: ModelParams, state: IntensityState, u: int) -> np.ndarray:
    """``nu*[u, :]`` for all cascades."""
    _check_ids(params, u)
    return params.M[u] + state.E[u] @ params.Sigma


def contextual_intensity(params: ModelParams, state: IntensityState, u: int, c: int) -> float:
    _check_ids(params, u, c)
    return float(contextual_intensities(params, state, u)[c])


def mixing_density(params: ModelParams, state: IntensityState, u: int) -> np.ndarray:
    return params.mixing.density(contextual_intensities(params, state, u))


def global_intensity(params: ModelParams, state: IntensityState, u: int) -> float:
    _check_ids(params, u)
    return float(params.M[u].sum() + state.E[u].sum())


def marked_intensity(params: ModelParams, state: IntensityState, u: int, c: int) -> float:
    _check_ids(params, u, c)
    nu_star = contextual_intensities(params, state, u)
    if params.mixing.kind == "linear" and np.all(params.Sigma == np.eye(params.n_cascades)):
        # Sigma = I with linear mixing is exactly the IC model: lam_u^c = nu_u^c
        return independent_intensity(params, state, u, c)
    return global_intensity(params, state, u) * float(params.mixing.density(nu_star)[c])


# Vectorised forms over all users, used by the simulator and evaluation code.

def global_intensities(params: ModelParams, state: IntensityState) -> np.ndarray:
    return params.M.sum(axis=1) + state.E.sum(axis=1)


def mixing_densities(params: ModelParams, state: IntensityState) -> np.ndarray:
    return params.mixing.density(params.M + state.E @ params.Sigma)


def intensity_path(params: ModelParams, log: EventLog, times, by_cascade: bool = False) -> np.ndarray:
    """Independent/global intensities evaluated at ``times`` by direct summation.

    Returns ``lam[u, k]`` (shape ``n_users x len(times)``) or, with
    ``by_cascade``, ``nu[u, c, k]``.  Events at exactly ``times[k]`` do not
    contribute (strict past).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n_u, n_c = params.M.shape
    tau = params.tau
    out = np.zeros((n_u, n_c, len(times))) if by_cascade else np.zeros((n_u, len(times)))
    for k, t in enumerate(times):
        past = log.times < t
        if not np.any(past):
            continue
        decay = np.exp(-(t - log.times[past]) / tau)
        # excitation per (source user, cascade)
        G = np.zeros((n_u, n_c))
        np.add.at(G, (log.users[past], log.cascades[past]), decay)
        E = params.W.T @ G
        if by_cascade:
            out[:, :, k] = E
        else:
            out[:, k] = E.sum(axis=1)
    if by_cascade:
        return out + params.M[:, :, None]
    return out + params.mu[:, None]
