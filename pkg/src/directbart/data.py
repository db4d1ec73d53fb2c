"""Dataset container, kernel weighting, and local polynomial design construction.

A :class:`Dataset` is the immutable input of every fit: outcomes ``y``, running
variable ``x``, covariate matrix ``z`` (categoricals one-hot encoded), and the
cutoff. The treatment indicator ``W_i = 1{x_i >= cutoff}`` is always derived on
access, never stored.

The design machinery builds, per unit, the one-sided polynomial basis in the
running variable, the augmented covariate vector ``(1, z)``, and their Kronecker
product, which is the regressor of the local linear coefficient matrix ``B``
after column-stacked vectorization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, SchemaError


@dataclass(frozen=True)
class ColumnSpec:
    """Role declaration for one covariate column.

    ``kind`` is "continuous" or "categorical"; categorical columns declare
    their levels, the last of which is the dropped reference level.
    """

    name: str
    kind: str = "continuous"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise SchemaError(f"unknown column kind '{self.kind}' for '{self.name}'")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise SchemaError(f"categorical column '{self.name}' needs >= 2 levels")


@dataclass(frozen=True)
class Schema:
    """Column-role map for CSV ingestion."""

    outcome: str
    running: str
    cutoff: float
    covariates: tuple[ColumnSpec, ...] = ()


class Dataset:
    """Immutable study data: outcomes, running variable, covariates, cutoff.

    Parameters
    ----------
    y, x : array-like, shape (n,)
        Outcome and running variable; must be finite and of equal length >= 2.
    z : array-like, shape (n, d)
        Covariate matrix with categoricals already one-hot encoded. May have
        zero columns.
    cutoff : float
        The treatment threshold c.
    column_names : sequence of str, optional
        Names of the encoded covariate columns.
    level_map : dict, optional
        Original categorical level lists keyed by source column name.
    """

    def __init__(self, y, x, z, cutoff, column_names=None, level_map=None):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if z.size else z.reshape(0, 0)
        if y.ndim != 1 or x.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("y and x must be 1-d with identical length")
        n = y.shape[0]
        if n < 2:
            raise ValueError("need at least 2 units")
        if z.shape[0] != n:
            raise ValueError("z must have one row per unit")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValueError("all entries of y, x, z must be finite")
        if not np.isfinite(cutoff):
            raise ValueError("cutoff must be finite")
        self._y = y
        self._x = x
        self._z = z
        self._cutoff = float(cutoff)
        self.column_names = list(column_names) if column_names is not None else [
            f"z{j + 1}" for j in range(z.shape[1])
        ]
        self.level_map = dict(level_map) if level_map else {}
        for arr in (self._y, self._x, self._z):
            arr.setflags(write=False)

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def cutoff(self) -> float:
        return self._cutoff

    @property
    def n(self) -> int:
        return self._y.shape[0]

    @property
    def d(self) -> int:
        return self._z.shape[1]

    @property
    def treated(self) -> np.ndarray:
        """Treatment indicator W_i = 1{x_i >= cutoff}, derived on access."""
        return (self._x >= self._cutoff).astype(float)

    def __repr__(self):
        return f"Dataset(n={self.n}, d={self.d}, cutoff={self.cutoff})"


def load_dataset(path, schema: Schema) -> Dataset:
    """Read a header CSV into a :class:`Dataset` under a column-role schema.

    Categorical covariates are one-hot encoded with the last declared level as
    the dropped reference; encoded columns are named ``<col>=<level>``. Row
    order is preserved.

    Raises
    ------
    SchemaError
        If a declared column is absent or a categorical cell holds an
        undeclared level.
    ParseError
        If a numeric cell is missing or non-numeric (names row and column;
        rows are 1-based, excluding the header).
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file, no header row")
        header = [h.strip() for h in reader.fieldnames]
        needed = [schema.outcome, schema.running] + [c.name for c in schema.covariates]
        for col in needed:
            if col not in header:
                raise SchemaError(f"column '{col}' not found in {path}")
        rows = [{k.strip(): (v if v is not None else "") for k, v in r.items()} for r in reader]
    if not rows:
        raise ParseError(f"{path}: no data rows")

    def parse_cell(row_idx, col):
        raw = rows[row_idx].get(col, "")
        raw = raw.strip() if isinstance(raw, str) else raw
        try:
            val = float(raw)
        except (TypeError, ValueError):
            raise ParseError(
                f"row {row_idx + 1}, column '{col}': cannot parse {raw!r} as a number"
            ) from None
        if not np.isfinite(val):
            raise ParseError(f"row {row_idx + 1}, column '{col}': non-finite value {raw!r}")
        return val

    n = len(rows)
    y = np.array([parse_cell(i, schema.outcome) for i in range(n)])
    x = np.array([parse_cell(i, schema.running) for i in range(n)])

    cols = []
    names = []
    level_map = {}
    for spec in schema.covariates:
        if spec.kind == "continuous":
            cols.append(np.array([parse_cell(i, spec.name) for i in range(n)]))
            names.append(spec.name)
        else:
            level_map[spec.name] = list(spec.levels)
            raw = [str(rows[i].get(spec.name, "")).strip() for i in range(n)]
            for i, cell in enumerate(raw):
                if cell not in spec.levels:
                    raise SchemaError(
                        f"row {i + 1}, column '{spec.name}': level {cell!r} not among "
                        f"declared levels {list(spec.levels)}"
                    )
            # reference level = last declared; one indicator per remaining level
            for level in spec.levels[:-1]:
                cols.append(np.array([1.0 if cell == level else 0.0 for cell in raw]))
                names.append(f"{spec.name}={level}")
    z = np.column_stack(cols) if cols else np.empty((n, 0))
    return Dataset(y, x, z, schema.cutoff, column_names=names, level_map=level_map)


def kernel_weights(ds: Dataset, h: float) -> np.ndarray:
    """Uniform kernel weights k_i = 1{|x_i - c| <= h}; boundary is in-window."""
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return (np.abs(ds.x - ds.cutoff) <= h).astype(float)


def polynomial_basis(x, c, q: int) -> np.ndarray:
    """One-sided polynomial basis (1, u_-, u_+, ..., u_-^q, u_+^q) with u = x - c.

    The negative/positive parts are signed: u_- = u*1{u<0}, u_+ = u*1{u>=0};
    power terms are (u_-)^p and (u_+)^p. Accepts a scalar (returns shape
    (2q+1,)) or a vector of length n (returns shape (n, 2q+1)).
    """
    if q < 1:
        raise ValueError(f"polynomial order must be >= 1, got {q}")
    u = np.asarray(x, dtype=float) - c
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    neg = np.where(u < 0, u, 0.0)
    pos = np.where(u >= 0, u, 0.0)
    out = np.empty((u.shape[0], 2 * q + 1))
    out[:, 0] = 1.0
    for p in range(1, q + 1):
        out[:, 2 * p - 1] = neg**p
        out[:, 2 * p] = pos**p
    return out[0] if scalar else out


def near_cutoff_units(ds: Dataset, multiplier: float = 0.1) -> np.ndarray:
    """Indices of units with |x_i - c| <= multiplier * sd(x), sorted ascending.

    The standard deviation uses divisor n-1. An empty result is returned as an
    empty index array; the caller decides whether that is an error.
    """
    if multiplier <= 0:
        raise ValueError(f"multiplier must be positive, got {multiplier}")
    sd = float(np.std(ds.x, ddof=1))
    return np.flatnonzero(np.abs(ds.x - ds.cutoff) <= multiplier * sd)


@dataclass(frozen=True)
class DesignRow:
    """Per-unit local design: basis, augmented covariates, their Kronecker product.

    ``kron[a * (2q+1) + b] == z_tilde[a] * x_basis[b]``, matching the
    column-stacked vectorization of the coefficient matrix B, so that
    ``x_basis @ B @ z_tilde == kron @ vec(B)``.
    """

    x_basis: np.ndarray
    z_tilde: np.ndarray
    kron: np.ndarray
    weight: float


@dataclass(frozen=True)
class StackedDesign:
    """All design rows stacked into matrices for vectorized computation."""

    x_basis: np.ndarray  # (n, 2q+1)
    z_tilde: np.ndarray  # (n, d+1)
    kron: np.ndarray  # (n, (2q+1)(d+1))
    weights: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.kron.shape[0]

    @property
    def p(self) -> int:
        return self.kron.shape[1]

    def row(self, i: int) -> DesignRow:
        return DesignRow(
            x_basis=self.x_basis[i],
            z_tilde=self.z_tilde[i],
            kron=self.kron[i],
            weight=float(self.weights[i]),
        )


def build_design(ds: Dataset, q: int, h: float) -> StackedDesign:
    """Construct the stacked local design at polynomial order q and bandwidth h."""
    xb = polynomial_basis(ds.x, ds.cutoff, q)
    zt = np.column_stack([np.ones(ds.n), ds.z]) if ds.d else np.ones((ds.n, 1))
    # row-wise kron(z_tilde_i, x_basis_i) via broadcasting
    kron = (zt[:, :, None] * xb[:, None, :]).reshape(ds.n, -1)
    return StackedDesign(x_basis=xb, z_tilde=zt, kron=kron, weights=kernel_weights(ds, h))


def vec(B: np.ndarray) -> np.ndarray:
    """Column-stacked vectorization, the convention used throughout."""
    return np.asarray(B).flatten(order="F")


def unvec(v: np.ndarray, n_rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for a matrix with ``n_rows`` rows."""
    v = np.asarray(v)
    return v.reshape((n_rows, v.size // n_rows), order="F")
