"""Simulation data generators and Monte Carlo calibration of their constants.

Both scenarios share Y = mu(X, Z) + W * tau(Z) + eps with cutoff 0. Scale
constants (the baseline and effect multipliers) are calibrated by Monte Carlo
on the conditional law Z | X = 0 so that the variance targets hold exactly in
expectation; calibration is deterministic given a fixed calibration seed and
cached per configuration so every replication uses identical constants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import norm

from .data import Dataset

CALIBRATION_SEED = 202508
CALIBRATION_DRAWS = 1_000_000

# Scenario 1 constants
_S1_GAMMA0 = -1.0
_S1_GAMMA1 = 0.55
_S1_SIGMA = 1.0 / (1.0 + np.abs(np.subtract.outer(np.arange(4), np.arange(4))))
_S1_SIGMA_CHOL = np.linalg.cholesky(_S1_SIGMA)

# Scenario 2 covariance: Toeplitz with first row decaying linearly 2 -> 0
_S2_SIGMA_Z = toeplitz(np.array([2.0, 4.0 / 3.0, 2.0 / 3.0, 0.0]))
assert np.linalg.eigvalsh(_S2_SIGMA_Z).min() > 0, "covariance must be positive definite"
_S2_SIGMA_Z_CHOL = np.linalg.cholesky(_S2_SIGMA_Z)
_S2_GAMMA0 = 1.0


@dataclass(frozen=True)
class Scenario1Spec:
    """First simulation design: uniform running variable, 4 continuous + 1
    categorical covariate, two baseline-variability cases."""

    n: int = 1200
    case: str = "small"  # small: Var(mu(0,Z)|X=0)=1; large: 15
    sigma2: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.case not in ("small", "large"):
            raise ValueError("case must be 'small' or 'large'")
        if self.n % 2:
            raise ValueError("n must be even (half control, half treated)")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


@dataclass(frozen=True)
class Scenario2Spec:
    """Second simulation design: Gaussian covariates with Toeplitz covariance
    and a running variable correlated with them through rho."""

    n: int = 600
    rho: float = 0.0
    sigma2: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must lie in [0, 1)")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


@dataclass
class SimulatedData:
    """A generated dataset plus the exact effect values for scoring."""

    dataset: Dataset
    true_tau: np.ndarray
    targets: np.ndarray
    true_tau_targets: np.ndarray


# ---------------------------------------------------------------- scenario 1


def _s1_draw_z_given_x(x: np.ndarray, rng: np.random.Generator):
    """Continuous covariates then the categorical level, in generative order."""
    n = x.shape[0]
    zc = (_S1_GAMMA0 + _S1_GAMMA1 * x)[:, None] + rng.standard_normal((n, 4)) @ _S1_SIGMA_CHOL.T
    eta = np.column_stack([
        0.8 * x + 0.5 * zc[:, 0] - 0.3 * zc[:, 1],
        -0.4 * x + 0.2 * zc[:, 0] + 0.4 * zc[:, 1],
        np.zeros(n),
    ])
    p = np.exp(eta - eta.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.uniform(size=n)
    z5 = 1 + (u > p[:, 0]).astype(int) + (u > p[:, 0] + p[:, 1]).astype(int)
    return zc, z5


def _s1_g_int_base(zc: np.ndarray, z5: np.ndarray) -> np.ndarray:
    return (
        1.0
        + norm.cdf((zc[:, 0] + 1.0) / 2.0)
        + 0.1 * np.sin(np.pi * zc[:, 0])
        + np.arctan(zc[:, 1] - 1.0) / np.pi
        + 0.5 * (z5 == 1)
        + 1.0 * (z5 == 3)
    )


def _s1_g_slope(zc: np.ndarray, z5: np.ndarray) -> np.ndarray:
    return (
        2.0
        + 1.0 / (1.0 + np.exp(-zc[:, 0]))
        + np.where(zc[:, 2] < 0, np.sqrt(np.abs(zc[:, 2])), 0.0)
        + np.maximum(0.0, zc[:, 3])
        + 1.0 * (z5 == 3)
    )


def _s1_f(x: np.ndarray) -> np.ndarray:
    return x + np.sin(2.0 * np.pi * x)


def _s1_tau_base(zc: np.ndarray, z5: np.ndarray) -> np.ndarray:
    return (
        1.0
        + 0.5 * np.cos(2.0 * np.pi * zc[:, 0])
        + 0.6 * zc[:, 1] * zc[:, 2]
        + 0.4 * zc[:, 3]
        - 0.5 * (z5 == 2)
    )


def _s1_encode(zc: np.ndarray, z5: np.ndarray) -> np.ndarray:
    """One-hot encode the categorical (levels 1,2; reference 3)."""
    return np.column_stack([zc, (z5 == 1).astype(float), (z5 == 2).astype(float)])


S1_COLUMN_NAMES = ["z1", "z2", "z3", "z4", "z5=1", "z5=2"]


def calibrate_scenario1(case: str, n_mc: int = CALIBRATION_DRAWS,
                        seed: int = CALIBRATION_SEED) -> tuple[float, float]:
    """Solve the baseline and effect multipliers by Monte Carlo at X = 0.

    Returns (alpha_mu, alpha_tau) such that Var(mu(0,Z) | X=0) hits 1 (small)
    or 15 (large) and Var(tau(Z) | X=0) hits 0.5.
    """
    if n_mc < 100_000:
        raise ValueError("calibration needs at least 1e5 draws")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    zc, z5 = _s1_draw_z_given_x(np.zeros(n_mc), rng)
    target_mu = 1.0 if case == "small" else 15.0
    alpha_mu = math.sqrt(target_mu / _s1_g_int_base(zc, z5).var())
    alpha_tau = math.sqrt(0.5 / _s1_tau_base(zc, z5).var())
    return alpha_mu, alpha_tau


@lru_cache(maxsize=None)
def scenario1_constants(case: str) -> tuple[float, float]:
    return calibrate_scenario1(case)


def generate_scenario1(spec: Scenario1Spec) -> SimulatedData:
    """Generate one replication plus 200 fresh target units at X = 0."""
    alpha_mu, alpha_tau = scenario1_constants(spec.case)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 11]))
    half = spec.n // 2
    x = np.concatenate([rng.uniform(-1.0, 0.0, half), rng.uniform(0.0, 1.0, half)])
    zc, z5 = _s1_draw_z_given_x(x, rng)
    mu = alpha_mu * _s1_g_int_base(zc, z5) + _s1_g_slope(zc, z5) * _s1_f(x)
    tau = alpha_tau * _s1_tau_base(zc, z5)
    w = (x >= 0).astype(float)
    y = mu + w * tau + math.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    ds = Dataset(y, x, _s1_encode(zc, z5), cutoff=0.0, column_names=S1_COLUMN_NAMES,
                 level_map={"z5": ["1", "2", "3"]})

    zc_t, z5_t = _s1_draw_z_given_x(np.zeros(200), rng)
    return SimulatedData(
        dataset=ds,
        true_tau=tau,
        targets=_s1_encode(zc_t, z5_t),
        true_tau_targets=alpha_tau * _s1_tau_base(zc_t, z5_t),
    )


# ---------------------------------------------------------------- scenario 2


def _s2_mu_star(x: np.ndarray, zstar: np.ndarray) -> np.ndarray:
    return (x + 1.0) ** 3 + (zstar + 2.0) ** 2 * (
        np.sign(x + 1.0) * np.sqrt(np.abs(x + 1.0))
    )


def _s2_tau_star(z1: np.ndarray) -> np.ndarray:
    return 0.5 * norm.cdf(2.0 * z1 + 3.0) + norm.pdf(z1)


def _s2_gamma_nu(rho: float) -> tuple[float, float]:
    """Closed-form coefficient and noise variance from Var(X)=1, Cor=rho."""
    total = float(_S2_SIGMA_Z.sum())
    g = rho / math.sqrt(total)
    return g, 1.0 - rho**2


def _s2_conditional_z_given_x0(rho: float):
    """Exact Gaussian conditional of Z given X = 0: mean and Cholesky factor."""
    g, nu = _s2_gamma_nu(rho)
    gamma = np.full(4, g)
    cov_zx = _S2_SIGMA_Z @ gamma  # Var(X) = 1 by construction
    mean = -cov_zx * _S2_GAMMA0
    cov = _S2_SIGMA_Z - np.outer(cov_zx, cov_zx)
    return mean, np.linalg.cholesky(cov)


def calibrate_scenario2(rho: float, n_mc: int = CALIBRATION_DRAWS,
                        seed: int = CALIBRATION_SEED):
    """Solve (gamma, nu, beta_mu, alpha_tau, beta_tau) for the given rho.

    gamma and nu come from the closed-form moment constraints. beta_mu scales
    mu to Var(mu(0,Z) | X=0) = 1; beta_tau scales tau* to unit conditional sd;
    alpha_tau shifts so that the minimum of tau over 1e6 conditional draws
    is 0.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must lie in [0, 1)")
    if n_mc < 100_000:
        raise ValueError("calibration needs at least 1e5 draws")
    g, nu = _s2_gamma_nu(rho)
    mean, chol = _s2_conditional_z_given_x0(rho)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    z = mean + rng.standard_normal((n_mc, 4)) @ chol.T
    zstar = z.sum(axis=1) / 2.0
    beta_mu = math.sqrt(1.0 / _s2_mu_star(np.zeros(n_mc), zstar).var())
    taustar = _s2_tau_star(z[:, 0])
    beta_tau = 1.0 / taustar.std()
    alpha_tau = -beta_tau * float(taustar.min())
    return g, nu, beta_mu, alpha_tau, beta_tau


@lru_cache(maxsize=None)
def scenario2_constants(rho: float):
    return calibrate_scenario2(rho)


S2_COLUMN_NAMES = ["z1", "z2", "z3", "z4"]


def generate_scenario2(spec: Scenario2Spec) -> SimulatedData:
    """Generate one replication plus 200 fresh target units at X = 0."""
    g, nu, beta_mu, alpha_tau, beta_tau = scenario2_constants(spec.rho)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 12]))
    z = rng.standard_normal((spec.n, 4)) @ _S2_SIGMA_Z_CHOL.T
    x = _S2_GAMMA0 + g * z.sum(axis=1) + math.sqrt(nu) * rng.standard_normal(spec.n)
    zstar = z.sum(axis=1) / 2.0
    mu = beta_mu * _s2_mu_star(x, zstar)
    tau = alpha_tau + beta_tau * _s2_tau_star(z[:, 0])
    w = (x >= 0).astype(float)
    y = mu + w * tau + math.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    ds = Dataset(y, x, z, cutoff=0.0, column_names=S2_COLUMN_NAMES)

    mean, chol = _s2_conditional_z_given_x0(spec.rho)
    z_t = mean + rng.standard_normal((200, 4)) @ chol.T
    return SimulatedData(
        dataset=ds,
        true_tau=tau,
        targets=z_t,
        true_tau_targets=alpha_tau + beta_tau * _s2_tau_star(z_t[:, 0]),
    )


# ------------------------------------------------------------- persistence


def save_constants(path, rows) -> None:
    """Write calibration constants as CSV (scenario, parameter, value, seed)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "parameter", "value", "calibration_seed"])
        for scenario, parameter, value in rows:
            writer.writerow([scenario, parameter, repr(float(value)), CALIBRATION_SEED])


def constants_rows(scenario: int, case_or_rho) -> list[tuple[str, str, float]]:
    """Rows for :func:`save_constants` for one scenario configuration."""
    if scenario == 1:
        alpha_mu, alpha_tau = scenario1_constants(case_or_rho)
        label = f"scenario1-{case_or_rho}"
        return [(label, "alpha_mu", alpha_mu), (label, "alpha_tau", alpha_tau)]
    g, nu, beta_mu, alpha_tau, beta_tau = scenario2_constants(float(case_or_rho))
    label = f"scenario2-rho{case_or_rho}"
    return [
        (label, "gamma", g),
        (label, "nu", nu),
        (label, "beta_mu", beta_mu),
        (label, "alpha_tau", alpha_tau),
        (label, "beta_tau", beta_tau),
    ]
