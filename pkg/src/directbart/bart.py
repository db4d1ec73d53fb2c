"""The sum-of-trees prior on the treatment effect function and its updates.

The effect function tau(z) is a sum of m regression trees. Because treatment
enters the model mean as ``W_i * tau(Z_i)``, only units whose likelihood
actually involves tau (treated, in-window) carry weight in the tree updates;
the caller passes those effective weights. Tree structures move by
Metropolis-Hastings on the leaf-marginalized likelihood, then leaf means are
redrawn from their exact normal conditional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import trees
from .data import Dataset
from .errors import ConfigurationError
from .trees import Tree, propose_move


@dataclass(frozen=True)
class LeafHyper:
    """Leaf-mean prior and tree-shape hyperparameters.

    mu_mu, sigma_mu : prior mean / sd of a single leaf mean.
    m : number of trees.
    alpha, beta : depth-decaying split probability alpha * (1+d)^(-beta).
    """

    mu_mu: float
    sigma_mu: float
    m: int = 20
    alpha: float = 0.95
    beta: float = 2.0

    def __post_init__(self):
        if self.sigma_mu <= 0:
            raise ConfigurationError("sigma_mu must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.m < 1:
            raise ValueError("m must be a positive integer")


@dataclass
class LeafStats:
    """Weighted sufficient statistics of one leaf.

    sum_w, sum_wr, sum_wr2 accumulate weight, weighted residual, and weighted
    squared residual over units with positive weight; count is the number of
    such units routed to the leaf.
    """

    sum_w: float = 0.0
    sum_wr: float = 0.0
    sum_wr2: float = 0.0
    count: int = 0


def elicit_leaf_prior(ds: Dataset, delta: float | None = None, k: float = 2.0,
                      m: int = 20, alpha: float = 0.95, beta: float = 2.0) -> LeafHyper:
    """Set the leaf prior from empirical treatment effect bounds near the cutoff.

    tau_max is the largest treated outcome minus the smallest control outcome
    within a delta-neighborhood of the cutoff (open intervals on each side);
    tau_min is the smallest treated minus the largest control. Then
    ``mu_mu = (tau_max + tau_min) / (2m)`` and
    ``sigma_mu = (tau_max - tau_min) / (2 k sqrt(m))``, so the implied
    m-tree prior on the effect puts about 95% mass on the interval at k = 2.

    If either side of the neighborhood is empty, delta doubles (up to 10
    times) before giving up. Defaults: delta = 0.1 * sd(x), k = 2.
    """
    if delta is None:
        delta = 0.1 * float(np.std(ds.x, ddof=1))
    if delta <= 0:
        raise ValueError("delta must be positive")
    if k <= 0:
        raise ValueError("k must be positive")
    c = ds.cutoff
    for _ in range(10):
        hi = (ds.x > c) & (ds.x < c + delta)
        lo = (ds.x > c - delta) & (ds.x < c)
        if hi.any() and lo.any():
            break
        delta *= 2.0
    else:
        raise ConfigurationError(
            "no units on both sides of the cutoff within the elicitation window"
        )
    tau_max = float(ds.y[hi].max() - ds.y[lo].min())
    tau_min = float(ds.y[hi].min() - ds.y[lo].max())
    mu_mu = (tau_max + tau_min) / (2.0 * m)
    sigma_mu = (tau_max - tau_min) / (2.0 * k * np.sqrt(m))
    if sigma_mu <= 0:
        raise ConfigurationError(
            "degenerate outcomes near the cutoff give sigma_mu = 0"
        )
    return LeafHyper(mu_mu=mu_mu, sigma_mu=sigma_mu, m=m, alpha=alpha, beta=beta)


def leaf_log_marginal(stats: LeafStats, hyper: LeafHyper, omega: float) -> float:
    """Log marginal likelihood of one leaf with its mean integrated out.

    Evaluates, for weighted Gaussian residuals with precision omega and a
    N(mu_mu, sigma_mu^2) leaf mean,

        -(n_b/2) log 2pi + (n_b/2) log omega - (1/2) log sigma_mu^2
        - (1/2) log(sigma_mu^-2 + omega * sum_w)
        + (1/2) { (sigma_mu^-2 mu_mu + omega * sum_wr)^2
                  / (sigma_mu^-2 + omega * sum_w)
                  - omega * sum_wr2 - mu_mu^2 / sigma_mu^2 }.

    An empty leaf (all statistics zero) evaluates to 0.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    return float(
        _leaf_log_marginal_arrays(
            np.array([stats.sum_w]),
            np.array([stats.sum_wr]),
            np.array([stats.sum_wr2]),
            np.array([stats.count], dtype=float),
            hyper,
            omega,
        )[0]
    )


def _leaf_log_marginal_arrays(sum_w, sum_wr, sum_wr2, n_b, hyper: LeafHyper,
                              omega: float) -> np.ndarray:
    prec0 = hyper.sigma_mu**-2
    prec = prec0 + omega * sum_w
    num = prec0 * hyper.mu_mu + omega * sum_wr
    return (
        -0.5 * n_b * np.log(2.0 * np.pi)
        + 0.5 * n_b * np.log(omega)
        - 0.5 * np.log(hyper.sigma_mu**2)
        - 0.5 * np.log(prec)
        + 0.5 * (num**2 / prec - omega * sum_wr2 - hyper.mu_mu**2 * prec0)
    )


def compute_leaf_stats(tree: Tree, residuals: np.ndarray, weights: np.ndarray,
                       _products=None):
    """Per-leaf weighted sufficient statistics via bincount passes.

    Returns (leaf_ids, sum_w, sum_wr, sum_wr2, n_b) with arrays aligned to
    leaf_ids. ``_products`` optionally carries precomputed
    (w, w*r, w*r^2, 1{w>0}) vectors so two trees can share them.
    """
    if _products is None:
        _products = _stat_products(residuals, weights)
    w, wr, wr2, wpos = _products
    size = len(tree.var)
    sw = np.bincount(tree.assign, weights=w, minlength=size)
    swr = np.bincount(tree.assign, weights=wr, minlength=size)
    swr2 = np.bincount(tree.assign, weights=wr2, minlength=size)
    nb = np.bincount(tree.assign, weights=wpos, minlength=size)
    leaf_ids = np.array(tree.leaves())
    return leaf_ids, sw[leaf_ids], swr[leaf_ids], swr2[leaf_ids], nb[leaf_ids]


def _stat_products(residuals: np.ndarray, weights: np.ndarray):
    wr = weights * residuals
    return weights, wr, wr * residuals, (weights > 0).astype(float)


def tree_log_marginal(tree: Tree, residuals: np.ndarray, weights: np.ndarray,
                      hyper: LeafHyper, omega: float, _products=None) -> float:
    """Sum of leaf log marginals over the tree's partition."""
    _, sw, swr, swr2, nb = compute_leaf_stats(tree, residuals, weights, _products)
    return float(_leaf_log_marginal_arrays(sw, swr, swr2, nb, hyper, omega).sum())


class ForestState:
    """The m trees plus the cached per-unit fit sum f_i = sum_j g_j(z_i)."""

    def __init__(self, tree_list: list[Tree]):
        self.trees = tree_list
        n = tree_list[0].data.n
        self.fit = np.zeros(n)
        self.recompute_fit()

    def recompute_fit(self) -> None:
        self.fit = np.zeros(self.trees[0].data.n)
        for t in self.trees:
            self.fit += t.fit_values()


def mh_tree_update(tree_index: int, forest: ForestState,
                   partial_residuals: np.ndarray, weights: np.ndarray,
                   hyper: LeafHyper, omega: float,
                   rng: np.random.Generator) -> tuple[Tree, bool, str]:
    """One Metropolis-Hastings structure update of tree ``tree_index``.

    The log acceptance probability is the proposal-minus-current difference of
    summed leaf log marginals plus the proposal's prior and proposal log
    ratios. On acceptance the tree is replaced in the forest (leaf means are
    resampled separately by the caller). Returns (tree, accepted, move kind);
    a "stay" signal from the proposal kernel counts as a rejection.
    """
    tree = forest.trees[tree_index]
    prop = propose_move(tree, hyper.alpha, hyper.beta, rng)
    if prop is None:
        return tree, False, "stay"
    if not prop.valid:
        return tree, False, prop.kind
    products = _stat_products(partial_residuals, weights)
    log_acc = (
        tree_log_marginal(prop.tree, partial_residuals, weights, hyper, omega, products)
        - tree_log_marginal(tree, partial_residuals, weights, hyper, omega, products)
        + prop.log_prior_ratio
        + prop.log_proposal_ratio
    )
    if np.log(rng.uniform()) < log_acc:
        forest.trees[tree_index] = prop.tree
        return prop.tree, True, prop.kind
    return tree, False, prop.kind


def sample_leaf_means(tree: Tree, partial_residuals: np.ndarray,
                      weights: np.ndarray, hyper: LeafHyper, omega: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Redraw every leaf mean from its exact normal conditional.

    Each leaf mean is N(m_n, s_n^2) with
    ``m_n = (sigma_mu^-2 mu_mu + omega * sum_wr) / (sigma_mu^-2 + omega * sum_w)``
    and ``s_n^2 = 1 / (sigma_mu^-2 + omega * sum_w)``; an empty leaf reduces to
    the prior. The tree's means are updated in place and returned.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    leaf_ids, sw, swr, _, _ = compute_leaf_stats(tree, partial_residuals, weights)
    prec0 = hyper.sigma_mu**-2
    prec = prec0 + omega * sw
    mean = (prec0 * hyper.mu_mu + omega * swr) / prec
    draws = mean + rng.standard_normal(leaf_ids.size) / np.sqrt(prec)
    for nd, value in zip(leaf_ids, draws):
        tree.mu[nd] = float(value)
    return draws


def forest_cate(forest: ForestState, z: np.ndarray) -> float:
    """tau(z): the sum over trees of the routed leaf means."""
    z = np.asarray(z, dtype=float)
    return float(sum(t.mu[trees.assign_region(t, z)] for t in forest.trees))


def forest_cate_matrix(forest: ForestState, Z: np.ndarray) -> np.ndarray:
    """tau at each row of a covariate matrix."""
    Z = np.asarray(Z, dtype=float)
    out = np.zeros(Z.shape[0])
    for t in forest.trees:
        out += t.predict(Z)
    return out
