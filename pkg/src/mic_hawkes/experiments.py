"""Synthetic experiment drivers: interaction recovery and the beta x sigma_21 model comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import CC, IC, LinMIC, MICHawkes
from .evaluation import split_train_test
from .inference import FitError
from .simulation import ScenarioConfig, generate_scenario, reference_sigma, simulate

logger = logging.getLogger(__name__)

COMPETITORS = ("IC", "linMIC", "CC")


def _cell_seed(base: int, *key) -> int:
    return int(np.random.SeedSequence([base, *[int(k) for k in key]]).generate_state(1)[0])


def sigma_recovery(seed: int, cfg: ScenarioConfig | None = None, **fit_kw):
    """Simulate the reference scenario and refit with beta, tau known.

    Returns ``(fitted_sigma, true_sigma, estimator)``.
    """
    cfg = replace(cfg or ScenarioConfig(sigma=reference_sigma()), seed=seed)
    graph, params = generate_scenario(cfg)
    log = simulate(params, cfg.T, seed=_cell_seed(seed, 1))
    est = MICHawkes(beta=cfg.beta, tau=cfg.tau, mixing=cfg.mixing, **fit_kw)
    est.fit(log, graph=graph.__class__(graph.adjacency), n_cascades=cfg.n_cascades)
    return est.sigma_, params.Sigma, est


@dataclass
class GridCell:
    beta: float
    sigma_21: float
    ratios: dict = field(default_factory=lambda: {k: [] for k in COMPETITORS})
    test_loglik: dict = field(default_factory=lambda: {k: [] for k in ("MIC", *COMPETITORS)})
    failures: int = 0

    @property
    def replications(self) -> int:
        return len(self.test_loglik["MIC"])

    def mean_ratio(self, model: str) -> float | None:
        vals = self.ratios[model]
        return float(np.mean(vals)) if vals else None

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "sigma_21": self.sigma_21,
            "replications": self.replications,
            "failures": self.failures,
            "mean_ratio": {k: self.mean_ratio(k) for k in COMPETITORS},
            "ratios": self.ratios,
            "test_loglik": self.test_loglik,
        }


def compare_models(cfg: ScenarioConfig, train_fraction: float = 0.8, **fit_kw) -> dict:
    """Fit MIC and its special cases on MIC-generated data; return test log-likelihoods."""
    graph, params = generate_scenario(cfg)
    log = simulate(params, cfg.T, seed=_cell_seed(cfg.seed, 1))
    train, test, boundary = split_train_test(log, train_fraction)
    adjacency_only = graph.__class__(graph.adjacency)
    models = {
        "MIC": MICHawkes(beta=cfg.beta, tau=cfg.tau, **fit_kw),
        "IC": IC(tau=cfg.tau, **fit_kw),
        "linMIC": LinMIC(tau=cfg.tau, **fit_kw),
        "CC": CC(beta=cfg.beta, tau=cfg.tau, **fit_kw),
    }
    out = {}
    for name, est in models.items():
        est.fit(train, graph=adjacency_only, n_cascades=cfg.n_cascades)
        out[name] = est.score(test, context=train)
    return out


def grid_study(betas, sigma_21s, replications: int = 10, base: ScenarioConfig | None = None,
               seed: int = 0, on_cell=None, **fit_kw) -> list[GridCell]:
    """Test log-likelihood ratios ``L_model / L_MIC`` over a beta x sigma_21 grid.

    Both log-likelihoods are negative, so a ratio above 1 means MIC fits the
    held-out events better.  ``on_cell`` is called with the list of finished
    cells after each cell, so partial results can be persisted.
    """
    base = base or ScenarioConfig()
    cells = []
    try:
        for i, beta in enumerate(betas):
            for j, s21 in enumerate(sigma_21s):
                cell = GridCell(float(beta), float(s21))
                for r in range(replications):
                    cfg = replace(base, beta=float(beta), sigma=reference_sigma(float(s21)),
                                  seed=_cell_seed(seed, i, j, r))
                    try:
                        ll = compare_models(cfg, **fit_kw)
                    except FitError as exc:
                        logger.warning("cell beta=%s sigma_21=%s rep %d failed: %s", beta, s21, r, exc)
                        cell.failures += 1
                        continue
                    for k, v in ll.items():
                        cell.test_loglik[k].append(v)
                    for k in COMPETITORS:
                        cell.ratios[k].append(ll[k] / ll["MIC"])
                cells.append(cell)
                if on_cell is not None:
                    on_cell(cells)
    except KeyboardInterrupt:
        logger.warning("grid study interrupted after %d cells", len(cells))
        if on_cell is not None:
            on_cell(cells)
        raise
    return cells
