"""The full Gibbs sampler: backfitting over trees, then B, then omega.

One sweep updates each tree against its partial residuals (structure by MH,
leaf means exactly), then draws the local polynomial coefficients and the
precision from their conjugate conditionals. Everything is a deterministic
function of (config, dataset, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bart, locallinear
from .bart import ForestState, LeafHyper
from .data import Dataset, StackedDesign, build_design, kernel_weights, vec
from .errors import ConfigurationError
from .locallinear import LocalLinearPrior, LocalLinearState
from .trees import SplitData, Tree

FIT_RECOMPUTE_EVERY = 100


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings: polynomial order, tree count, lengths, bandwidth, priors.

    ``delta_multiplier`` and ``k`` feed the leaf-prior elicitation
    (delta = delta_multiplier * sd(x)); ``leaf_hyper`` overrides elicitation
    entirely when given. ``prior`` defaults to M0 = 0, V0 = 100 I, U0 = I,
    nu0 = eta0 = 1 at the data's dimensions.
    """

    q: int = 1
    m: int = 20
    n_iter: int = 5000
    n_burn: int = 500
    h: float = 1.0
    delta_multiplier: float = 0.1
    k: float = 2.0
    prior: LocalLinearPrior | None = None
    seed: int = 0
    thin: int = 1
    leaf_hyper: LeafHyper | None = None
    max_depth: int = 10

    def __post_init__(self):
        if self.q < 1:
            raise ConfigurationError("q must be >= 1")
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if not (self.n_iter > self.n_burn >= 0):
            raise ConfigurationError("need n_iter > n_burn >= 0")
        if self.h <= 0:
            raise ConfigurationError("bandwidth h must be positive")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")

    def resolved_prior(self, d: int) -> LocalLinearPrior:
        return self.prior if self.prior is not None else LocalLinearPrior.default(self.q, d)


@dataclass
class PosteriorDraws:
    """Retained samples: tau at targets, B, omega, residuals, move counters.

    ``resid_draws`` holds per-draw residuals Y - W tau - x'Bz at the units in
    ``eval_set`` (row order matches the draw index). ``accept_counts`` maps a
    proposal kind to [proposed, accepted].
    """

    tau_draws: np.ndarray  # (draws, n_targets)
    B_draws: np.ndarray  # (draws, 2q+1, d+1)
    omega_draws: np.ndarray  # (draws,)
    resid_draws: np.ndarray  # (draws, len(eval_set))
    eval_set: np.ndarray  # (len(eval_set),) indices into the dataset
    accept_counts: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.omega_draws.shape[0]


@dataclass
class CateSummary:
    """Per-target posterior mean and equal-tailed interval bounds."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


class _ChainState:
    """Mutable sweep state: forest, linear coefficients, caches."""

    def __init__(self, ds: Dataset, config: SamplerConfig, design: StackedDesign,
                 hyper: LeafHyper, prior: LocalLinearPrior):
        in_window = design.weights > 0
        w = ds.treated
        if not ((in_window & (w > 0)).any() and (in_window & (w == 0)).any()):
            raise ConfigurationError(
                f"bandwidth h={config.h} leaves no in-window units on one side of the cutoff"
            )
        self.ds = ds
        self.config = config
        self.design = design
        self.hyper = hyper
        self.prior = prior
        self.split_data = SplitData(ds.z, in_window, max_depth=config.max_depth)
        self.forest = ForestState([Tree(self.split_data) for _ in range(config.m)])
        self.linear = LocalLinearState(B=prior.M0.copy(), omega=prior.nu0 / prior.eta0)
        self.w_tree = design.weights * w  # effective weights for tau updates
        self.b_sampler = locallinear.BSampler(design, prior)
        self.lin_fit = design.kron @ vec(self.linear.B)
        self.resid = ds.y - w * self.forest.fit - self.lin_fit
        self.sweeps_done = 0
        self.accept_counts: dict[str, list[int]] = {}

    def tau_at(self, Z: np.ndarray) -> np.ndarray:
        return bart.forest_cate_matrix(self.forest, Z)


def initialize_state(config: SamplerConfig, ds: Dataset):
    """Build the initial (ForestState, LocalLinearState): stumps at 0, B = M0,
    omega = nu0/eta0. Raises ConfigurationError when the bandwidth leaves one
    side of the cutoff without in-window units."""
    state = _make_chain_state(config, ds)
    return state.forest, state.linear


def _make_chain_state(config: SamplerConfig, ds: Dataset) -> _ChainState:
    design = build_design(ds, config.q, config.h)
    prior = config.resolved_prior(ds.d)
    if config.leaf_hyper is not None:
        hyper = config.leaf_hyper
    else:
        delta = config.delta_multiplier * float(np.std(ds.x, ddof=1))
        hyper = bart.elicit_leaf_prior(ds, delta=delta, k=config.k, m=config.m)
    return _ChainState(ds, config, design, hyper, prior)


def gibbs_step(state: _ChainState, rng: np.random.Generator) -> _ChainState:
    """One full sweep: all m trees (MH + leaf means), then B, then omega."""
    ds, config = state.ds, state.config
    y = ds.y
    w = ds.treated
    forest = state.forest
    for j in range(config.m):
        g_j = forest.trees[j].fit_values()
        partial = y - w * (forest.fit - g_j) - state.lin_fit
        _, accepted, kind = bart.mh_tree_update(
            j, forest, partial, state.w_tree, state.hyper, state.linear.omega, rng
        )
        counts = state.accept_counts.setdefault(kind, [0, 0])
        counts[0] += 1
        counts[1] += int(accepted)
        tree = forest.trees[j]
        bart.sample_leaf_means(tree, partial, state.w_tree, state.hyper,
                               state.linear.omega, rng)
        forest.fit += tree.fit_values() - g_j

    r_b = y - w * forest.fit
    B = state.b_sampler.draw(r_b, state.linear.omega, rng)
    state.lin_fit = state.design.kron @ vec(B)
    full_resid = r_b - state.lin_fit
    omega = locallinear.sample_omega(full_resid, state.design.weights, state.prior, rng)
    state.linear = LocalLinearState(B=B, omega=omega)
    state.resid = full_resid
    state.sweeps_done += 1
    if state.sweeps_done % FIT_RECOMPUTE_EVERY == 0:
        forest.recompute_fit()
    return state


def rng_for(seed: int, *ids: int) -> np.random.Generator:
    """Independent stream derived from a base seed and integer identifiers."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, ids)]))


def run_chain(config: SamplerConfig, ds: Dataset, targets: np.ndarray,
              eval_set: np.ndarray | None = None) -> PosteriorDraws:
    """Run the sampler and collect retained draws.

    ``targets`` is a (T, d) matrix of covariate vectors at which tau is
    recorded per retained draw. ``eval_set`` selects the units whose per-draw
    residuals are stored (defaults to all units). Burn-in draws are discarded
    and thinning applied; the number of retained draws is
    ``ceil((n_iter - n_burn) / thin)``.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        targets = targets.reshape(0, ds.d)
    if targets.ndim != 2 or targets.shape[1] != ds.d:
        raise ValueError(f"targets must have {ds.d} columns")
    if eval_set is None:
        eval_set = np.arange(ds.n)
    eval_set = np.asarray(eval_set, dtype=int)

    state = _make_chain_state(config, ds)
    rng = rng_for(config.seed)
    taus, Bs, omegas, resids = [], [], [], []
    for sweep in range(config.n_iter):
        gibbs_step(state, rng)
        if sweep >= config.n_burn and (sweep - config.n_burn) % config.thin == 0:
            taus.append(state.tau_at(targets))
            Bs.append(state.linear.B.copy())
            omegas.append(state.linear.omega)
            resids.append(state.resid[eval_set].copy())
    return PosteriorDraws(
        tau_draws=np.array(taus),
        B_draws=np.array(Bs),
        omega_draws=np.array(omegas),
        resid_draws=np.array(resids),
        eval_set=eval_set,
        accept_counts={k: list(v) for k, v in sorted(state.accept_counts.items())},
    )


def summarize(draws: PosteriorDraws, level: float = 0.95) -> CateSummary:
    """Posterior mean and equal-tailed interval per target.

    Quantiles use linear interpolation of order statistics at probabilities
    (1 - level)/2 and 1 - (1 - level)/2.
    """
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    if draws.tau_draws.shape[0] < 2:
        raise ValueError("need at least 2 retained draws to summarize")
    lo = (1.0 - level) / 2.0
    return CateSummary(
        mean=draws.tau_draws.mean(axis=0),
        lower=np.quantile(draws.tau_draws, lo, axis=0),
        upper=np.quantile(draws.tau_draws, 1.0 - lo, axis=0),
        level=level,
    )
