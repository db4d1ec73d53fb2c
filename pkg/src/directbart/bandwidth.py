"""Bandwidth selection by a local Hyvarinen score over a candidate grid.

For each candidate bandwidth a short chain is run and the score

    H(h) = sum_{i in N_s} { 2 E[l2 + l1^2] - (E[l1])^2 },
    l1 = -omega k_i (Y_i - tau(Z_i) W_i - x' B z),   l2 = -omega k_i,

is evaluated with posterior expectations replaced by averages over the
retained draws. N_s holds the s nearest units to the cutoff with
s = max(ceil(0.02 n), 5). The selected bandwidth minimizes H; ties break
toward the smaller value. Candidates that leave either side of the cutoff
with fewer than 2q+2 in-window units are scored +inf and flagged infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, kernel_weights
from .errors import ConfigurationError
from .gibbs import PosteriorDraws, SamplerConfig, run_chain


@dataclass
class ScoreReport:
    """Scores per candidate bandwidth plus the selection."""

    candidates: np.ndarray
    scores: np.ndarray
    feasible: np.ndarray
    selected: float
    eval_set: np.ndarray
    s: int


def evaluation_set(ds: Dataset, s: int | None = None) -> tuple[np.ndarray, int]:
    """The s nearest units to the cutoff by |x - c|, ties broken by index."""
    if s is None:
        s = max(math.ceil(0.02 * ds.n), 5)
    s = min(int(s), ds.n)
    order = np.lexsort((np.arange(ds.n), np.abs(ds.x - ds.cutoff)))
    return np.sort(order[:s]), s


def hyvarinen_score(draws: PosteriorDraws, ds: Dataset, h: float,
                    eval_set: np.ndarray) -> float:
    """Sample-based local Hyvarinen score at bandwidth h.

    Requires per-draw residuals for every unit in ``eval_set`` (stored by
    :func:`directbart.gibbs.run_chain`); kernel weights are recomputed at h.
    """
    eval_set = np.asarray(eval_set, dtype=int)
    if eval_set.size == 0:
        raise ValueError("evaluation set is empty")
    if draws.n_draws == 0:
        raise ValueError("no retained draws")
    pos = {int(u): i for i, u in enumerate(draws.eval_set)}
    try:
        cols = np.array([pos[int(u)] for u in eval_set])
    except KeyError as exc:
        raise ValueError(f"unit {exc} has no stored residual draws") from None
    k = kernel_weights(ds, h)[eval_set]
    resid = draws.resid_draws[:, cols]
    omega = draws.omega_draws[:, None]
    l1 = -omega * k[None, :] * resid
    l2 = -omega * k[None, :]
    per_unit = 2.0 * (l2 + l1**2).mean(axis=0) - l1.mean(axis=0) ** 2
    return float(per_unit.sum())


def candidate_grid(anchor: float, L: int = 6) -> np.ndarray:
    """L equally spaced bandwidths over (0, 2*anchor], excluding 0."""
    if anchor <= 0:
        raise ValueError(f"anchor must be positive, got {anchor}")
    if L < 2:
        raise ValueError("need at least 2 candidates")
    return np.arange(1, L + 1) * (2.0 * anchor / L)


def _feasible(ds: Dataset, h: float, q: int) -> bool:
    k = kernel_weights(ds, h) > 0
    above = k & (ds.x >= ds.cutoff)
    below = k & (ds.x < ds.cutoff)
    need = 2 * q + 2
    return int(above.sum()) >= need and int(below.sum()) >= need


def select_bandwidth(ds: Dataset, config: SamplerConfig, grid: np.ndarray,
                     n_iter: int = 1000, n_burn: int = 500) -> ScoreReport:
    """Score every candidate with a short chain and return the argmin report.

    Each candidate gets an independent random stream derived from
    (config.seed, candidate index), so the report is deterministic given the
    configuration. Raises ConfigurationError when no candidate is feasible.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("empty candidate grid")
    eval_idx, s = evaluation_set(ds)
    scores = np.full(grid.size, np.inf)
    feasible = np.zeros(grid.size, dtype=bool)
    for i, h in enumerate(grid):
        if h <= 0 or not _feasible(ds, h, config.q):
            continue
        feasible[i] = True
        cfg = replace(config, h=float(h), n_iter=n_iter, n_burn=n_burn,
                      seed=_candidate_seed(config.seed, i))
        draws = run_chain(cfg, ds, targets=np.empty((0, ds.d)), eval_set=eval_idx)
        scores[i] = hyvarinen_score(draws, ds, float(h), eval_idx)
    if not feasible.any():
        raise ConfigurationError(
            "no feasible candidate bandwidth: each must leave >= "
            f"{2 * config.q + 2} in-window units per side"
        )
    best = min(range(grid.size), key=lambda i: (scores[i], grid[i]))
    return ScoreReport(
        candidates=grid,
        scores=scores,
        feasible=feasible,
        selected=float(grid[best]),
        eval_set=eval_idx,
        s=s,
    )


def _candidate_seed(seed: int, index: int) -> int:
    # fold the candidate index into a distinct 63-bit stream id
    return int(np.random.SeedSequence([int(seed), 1_000_003 + index]).generate_state(1)[0] >> 1)
