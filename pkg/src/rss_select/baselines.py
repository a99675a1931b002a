"""Reference scorers: Welch t-test, single-fit weights, randomized L1.

All baselines share the scores CSV format with the stability engine so the
evaluation harness treats every method uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, StabilityScores, derive_stream
from .solver import SolverConfig, fit_l1_logistic, fit_l2_logistic
from .stability import _resample_counts, draw_row_subsample


@dataclass(frozen=True)
class RandL1Config:
    """Randomized reweighted L1: subsample rows, jitter per-column penalties."""

    solver: SolverConfig
    K: int = 500
    row_fraction: float = 0.5
    weakness: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if not (0 < self.row_fraction <= 1):
            raise ValueError("row_fraction must lie in (0, 1]")
        if not (0 < self.weakness <= 1):
            raise ValueError("weakness must lie in (0, 1]")


def ttest_scores(dataset: Dataset) -> np.ndarray:
    """Absolute two-sample Welch t statistic per feature.

    Features constant in both classes score 0. Requires at least two samples
    per class.
    """
    pos = dataset.X[dataset.y == 1]
    neg = dataset.X[dataset.y == -1]
    if pos.shape[0] < 2 or neg.shape[0] < 2:
        raise ValueError("Welch t needs at least two samples in each class")
    se2 = pos.var(axis=0, ddof=1) / pos.shape[0] + neg.var(axis=0, ddof=1) / neg.shape[0]
    diff = pos.mean(axis=0) - neg.mean(axis=0)
    out = np.zeros(dataset.p)
    ok = se2 > 0
    out[ok] = np.abs(diff[ok]) / np.sqrt(se2[ok])
    return out


def l1_weight_scores(dataset: Dataset, solver_config: SolverConfig) -> np.ndarray:
    """Absolute weights of a single L1 logistic fit on the full data."""
    sol = fit_l1_logistic(dataset.X, dataset.y, solver_config)
    return np.abs(sol.w)


def l2_weight_scores(dataset: Dataset, lambda_ridge: float) -> np.ndarray:
    """Absolute weights of a single ridge logistic fit on the full data."""
    sol = fit_l2_logistic(dataset.X, dataset.y, lambda_ridge)
    return np.abs(sol.w)


def randomized_l1(dataset: Dataset, config: RandL1Config, threads: int = 1) -> StabilityScores:
    """Stability counts from K randomized reweighted L1 fits.

    Iteration k (stream k of the master seed) draws rows, then one penalty
    multiplier per column uniform on [weakness, 1], applied to standardized
    columns; with weakness=1 the reweighting degenerates to row subsampling
    alone. Aborts like the stability engine when too many fits fail.
    """
    if threads < 1:
        raise ValueError("threads must be positive")
    X, y = dataset.X, dataset.y
    eps = config.solver.support_epsilon

    def one_iteration(k):
        gen = derive_stream(config.master_seed, k).generator()
        rows = draw_row_subsample(dataset.n, config.row_fraction, gen)
        scale = gen.uniform(config.weakness, 1.0, size=dataset.p)
        sol = fit_l1_logistic(X[rows], y[rows], config.solver, column_scale=scale)
        return sol.support(eps), sol.converged, sol.kkt_residual

    counts = _resample_counts(dataset.p, config.K, one_iteration, threads)
    return StabilityScores(counts=counts, K=config.K)
