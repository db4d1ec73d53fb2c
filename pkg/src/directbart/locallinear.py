"""Conjugate Gibbs updates for the local polynomial nuisance.

The coefficient matrix B carries a matrix-normal prior MN(M0, V0, U0); its
column-stacked vectorization therefore has prior covariance kron(U0, V0) and
precision Sigma0 = inv(kron(U0, V0)). Under the kernel-weighted Gaussian power
likelihood the full conditional of vec(B) is multivariate normal with
precision ``omega * sum_i k_i u_i u_i' + Sigma0`` where u_i = kron(z_tilde_i,
x_basis_i); the precision omega is Gamma with shape nu0 + sum(k)/2 and rate
eta0 + sum(k * r^2)/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .data import DesignRow, StackedDesign, unvec, vec
from .errors import NumericError


@dataclass(frozen=True)
class LocalLinearPrior:
    """Matrix-normal prior on B and Gamma prior on the precision omega.

    M0 : (2q+1, d+1) prior mean matrix.
    V0 : (2q+1, 2q+1) row covariance; U0 : (d+1, d+1) column covariance.
    nu0, eta0 : Gamma shape and rate for omega.
    """

    M0: np.ndarray
    V0: np.ndarray
    U0: np.ndarray
    nu0: float = 1.0
    eta0: float = 1.0

    def __post_init__(self):
        for name in ("M0", "V0", "U0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        r, c = self.M0.shape
        if self.V0.shape != (r, r) or self.U0.shape != (c, c):
            raise ValueError("V0/U0 dimensions must match M0")
        for name in ("V0", "U0"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
        if self.nu0 <= 0 or self.eta0 <= 0:
            raise ValueError("nu0 and eta0 must be positive")

    @classmethod
    def default(cls, q: int, d: int) -> "LocalLinearPrior":
        """M0 = 0, V0 = 100 I, U0 = I, nu0 = eta0 = 1."""
        return cls(
            M0=np.zeros((2 * q + 1, d + 1)),
            V0=100.0 * np.eye(2 * q + 1),
            U0=np.eye(d + 1),
        )

    @property
    def vec_mean(self) -> np.ndarray:
        return vec(self.M0)

    @property
    def vec_cov(self) -> np.ndarray:
        return np.kron(self.U0, self.V0)

    @property
    def vec_precision(self) -> np.ndarray:
        return np.linalg.inv(self.vec_cov)


@dataclass
class LocalLinearState:
    """Current values of the coefficient matrix and the precision."""

    B: np.ndarray
    omega: float

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        if not np.all(np.isfinite(self.B)):
            raise ValueError("B must be finite")
        if self.omega <= 0:
            raise ValueError("omega must be positive")


def _as_stacked(rows) -> StackedDesign:
    if isinstance(rows, StackedDesign):
        return rows
    rows = list(rows)
    return StackedDesign(
        x_basis=np.array([r.x_basis for r in rows]),
        z_tilde=np.array([r.z_tilde for r in rows]),
        kron=np.array([r.kron for r in rows]),
        weights=np.array([r.weight for r in rows]),
    )


def b_posterior(residuals_minus_tau: np.ndarray,
                design: StackedDesign | Sequence[DesignRow],
                omega: float, prior: LocalLinearPrior):
    """Mean and precision Cholesky factor of the vec(B) full conditional.

    Returns (mean, L) with the conditional precision P = L L'. The mean solves
    ``P mean = omega * sum k_i r_i u_i + Sigma0 vec(M0)``. If the factorization
    fails, a single jitter of 1e-10 I is attempted before raising
    :class:`NumericError`.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    design = _as_stacked(design)
    r = np.asarray(residuals_minus_tau, dtype=float)
    if r.shape[0] != design.n:
        raise ValueError("residual length must match the design")
    return BSampler(design, prior).posterior(r, omega)


def sample_B(residuals_minus_tau: np.ndarray,
             design: StackedDesign | Sequence[DesignRow],
             omega: float, prior: LocalLinearPrior,
             rng: np.random.Generator) -> np.ndarray:
    """Draw the coefficient matrix B from its full conditional.

    ``residuals_minus_tau`` are Y_i - W_i * tau(Z_i). The draw is mean +
    L^{-T} z for standard normal z, where L is the lower Cholesky factor of
    the conditional precision, and is returned in matrix form.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    design = _as_stacked(design)
    r = np.asarray(residuals_minus_tau, dtype=float)
    if r.shape[0] != design.n:
        raise ValueError("residual length must match the design")
    return BSampler(design, prior).draw(r, omega, rng)


class BSampler:
    """Per-chain sampler for B with the data Gram matrix precomputed.

    The conditional precision is ``omega * G + Sigma0`` with
    ``G = sum_i k_i u_i u_i'`` fixed for a given design, so each sweep only
    rebuilds the right-hand side and one Cholesky factor.
    """

    def __init__(self, design: StackedDesign, prior: LocalLinearPrior):
        self.design = _as_stacked(design)
        self.prior = prior
        wk = self.design.kron * self.design.weights[:, None]
        self.gram = wk.T @ self.design.kron
        self.gram = 0.5 * (self.gram + self.gram.T)
        self.wkron_t = np.ascontiguousarray(wk.T)
        self.prior_prec = prior.vec_precision
        self.prior_rhs = self.prior_prec @ prior.vec_mean
        self.n_rows = prior.M0.shape[0]

    def posterior(self, residuals_minus_tau: np.ndarray, omega: float):
        prec = omega * self.gram + self.prior_prec
        rhs = omega * (self.wkron_t @ residuals_minus_tau) + self.prior_rhs
        try:
            L = scipy.linalg.cholesky(prec, lower=True)
        except scipy.linalg.LinAlgError:
            try:
                L = scipy.linalg.cholesky(
                    prec + 1e-10 * np.eye(prec.shape[0]), lower=True
                )
            except scipy.linalg.LinAlgError as exc:
                raise NumericError(
                    "B conditional precision is not positive definite"
                ) from exc
        mean = scipy.linalg.cho_solve((L, True), rhs)
        return mean, L

    def draw(self, residuals_minus_tau: np.ndarray, omega: float,
             rng: np.random.Generator) -> np.ndarray:
        mean, L = self.posterior(residuals_minus_tau, omega)
        z = rng.standard_normal(mean.shape[0])
        v = mean + scipy.linalg.solve_triangular(L, z, lower=True, trans="T")
        return unvec(v, self.n_rows)


def sample_omega(full_residuals: np.ndarray, weights: np.ndarray,
                 prior: LocalLinearPrior, rng: np.random.Generator) -> float:
    """Draw omega ~ Gamma(nu0 + sum(k)/2, eta0 + sum(k r^2)/2).

    ``full_residuals`` are Y_i - W_i tau(Z_i) - x_basis_i' B z_tilde_i. The
    rate uses the squared residual, as the Gaussian-precision conditional
    requires.
    """
    r = np.asarray(full_residuals, dtype=float)
    w = np.asarray(weights, dtype=float)
    if r.shape != w.shape:
        raise ValueError("residuals and weights must have the same length")
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite residual in omega update")
    shape = prior.nu0 + 0.5 * w.sum()
    rate = prior.eta0 + 0.5 * float(w @ r**2)
    return float(rng.gamma(shape, 1.0 / rate))
