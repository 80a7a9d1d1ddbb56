"""Functional data: spline basis, basis Gram matrix, curve projections.

A curve x on [0, 1] is summarised by gamma_j(x) = int x(t) b_j(t) dt. With
B the Gram matrix of the basis, the kernel gamma(x)' B^-1 gamma(y) is the
L2 inner product of the basis reconstructions of x and y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .errors import InputError, ModelError
from .numerics import quad_trapezoid

DEFAULT_DENSITY = 4001
MIN_DENSITY = 101


class DegenerateBasisError(ModelError):
    code = "degenerate-basis"


@dataclass(frozen=True)
class CurveSample:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape:
            raise InputError("curve grid and values must be 1-D of equal length")
        if np.any(np.diff(g) <= 0):
            raise InputError("curve grid must be strictly increasing")
        if g[0] < 0 or g[-1] > 1:
            raise InputError("curve grid must lie in [0, 1]")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)


def rescale_grid(t):
    """Affinely map an increasing grid onto [0, 1] (e.g. days 1..365)."""
    t = np.asarray(t, dtype=float)
    if t[0] >= 0 and t[-1] <= 1:
        return t
    return (t - t[0]) / (t[-1] - t[0])


class NaturalCubicSplineBasis:
    """Cardinal natural cubic splines on ``size`` uniformly spaced knots.

    b_j interpolates the j-th unit vector at the knots and has zero second
    derivative at 0 and 1; together they span all natural cubic splines
    with these knots.
    """

    def __init__(self, size):
        if size < 1:
            raise InputError("basis size must be >= 1")
        self.size = int(size)
        self.knots = np.linspace(0.0, 1.0, self.size) if size > 1 else np.array([0.0])
        self._spline = (
            CubicSpline(self.knots, np.eye(self.size), bc_type="natural") if size > 1 else None
        )

    def __len__(self):
        return self.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self._spline is None:
            return np.ones((1, t.shape[0]))
        return self._spline(t).T

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self._spline is None:
            return np.zeros((1, t.shape[0]))
        return self._spline(t, 2).T


class FunctionBasis:
    """Basis given as a list of vectorised callables on [0, 1]."""

    def __init__(self, funcs):
        self.funcs = list(funcs)

    def __len__(self):
        return len(self.funcs)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.vstack([np.broadcast_to(f(t), t.shape) for f in self.funcs])


@dataclass(frozen=True)
class BasisGram:
    """B_jl = int b_j b_l, with its Cholesky factor and the quadrature cache."""

    B: np.ndarray
    factor: tuple = field(repr=False)
    grid: np.ndarray = field(repr=False)
    basis_values: np.ndarray = field(repr=False)  # L x len(grid)

    @property
    def order(self):
        return self.B.shape[0]

    def solve(self, v):
        return scipy.linalg.cho_solve(self.factor, v)


def basis_gram(basis, density=DEFAULT_DENSITY) -> BasisGram:
    if density < MIN_DENSITY:
        raise InputError(f"quadrature density must be >= {MIN_DENSITY}")
    grid = np.linspace(0.0, 1.0, int(density))
    vals = basis(grid)
    B = quad_trapezoid(grid, vals[:, None, :] * vals[None, :, :])
    B = 0.5 * (B + B.T)
    try:
        factor = scipy.linalg.cho_factor(B, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(f"basis Gram matrix is not positive definite: {exc}") from None
    # a pivot lost to round-off means linearly dependent basis functions
    if np.min(np.diag(factor[0])) ** 2 <= 1e-12 * np.max(np.diag(B)):
        raise DegenerateBasisError("basis functions are linearly dependent (singular Gram matrix)")
    return BasisGram(B, factor, grid, vals)


def project_curves(grid, values, gram: BasisGram) -> np.ndarray:
    """gamma coefficients for curves sharing one grid.

    ``values`` has one curve per column (len(grid) x n); returns n x L.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if grid.shape[0] < 4:
        raise InputError("curves need at least 4 observation points")
    if grid[0] > 0.05 or grid[-1] < 0.95:
        raise InputError("curves must cover [0, 1] (first point <= 0.05, last >= 0.95)")
    if np.any(np.diff(grid) <= 0):
        raise InputError("curve grid must be strictly increasing")
    if not np.all(np.isfinite(values)):
        raise InputError("curve values must be finite")
    q = gram.grid
    # linear interpolation of every curve onto the quadrature grid
    pos = np.clip(np.searchsorted(grid, q, side="right") - 1, 0, grid.shape[0] - 2)
    frac = np.clip((q - grid[pos]) / (grid[pos + 1] - grid[pos]), 0.0, 1.0)
    on_q = values[pos] * (1 - frac)[:, None] + values[pos + 1] * frac[:, None]
    return quad_trapezoid(q, gram.basis_values[None, :, :] * on_q.T[:, None, :])


def project_curve(curve: CurveSample, gram: BasisGram) -> np.ndarray:
    return project_curves(curve.grid, curve.values, gram)[0]


def functional_kernel(gamma_a, gamma_b, gram: BasisGram) -> float:
    a = np.asarray(gamma_a, dtype=float)
    b = np.asarray(gamma_b, dtype=float)
    if a.shape != (gram.order,) or b.shape != (gram.order,):
        raise InputError(f"coefficient vectors must have length {gram.order}")
    return float(a @ gram.solve(b))


def functional_gram_matrix(gammas, gram: BasisGram) -> np.ndarray:
    G = np.asarray(gammas, dtype=float)
    K = G @ gram.solve(G.T)
    return 0.5 * (K + K.T)


def reconstruct(coefs, basis, t):
    """Evaluate sum_l coefs_l b_l(t); ``coefs`` may be stacked row-wise."""
    return np.asarray(coefs) @ basis(t)


def principal_band(model, gammas, gram: BasisGram, basis, cls, axis, n_points=365):
    """Mean curve of a class and the band mean +/- 2 sqrt(var_j) q_j(t).

    ``gammas`` are the training coefficient vectors the model was fitted on;
    ``axis`` counts from 1. Returns (t, mean, plus, minus).
    """
    c = model.classes[cls]
    if axis < 1 or axis > max(c.d, 1):
        raise InputError(f"axis {axis} out of range for class {cls} with d={c.d}")
    t = np.linspace(0.0, 1.0, n_points)
    phi = gram.solve(np.asarray(gammas, dtype=float).T).T  # feature coordinates, n x L
    centers = model.center_weights / model.center_weights.sum(0)  # n x k
    means = centers.T @ phi  # k x L
    mean = reconstruct(means[cls], basis, t)
    if axis > c.d:
        return t, mean, mean.copy(), mean.copy()
    coef = c.axes[:, :, axis - 1]  # n x k atom coefficients
    q = coef.sum(1) @ phi - coef.sum(0) @ means
    q_t = reconstruct(q, basis, t)
    half = 2.0 * np.sqrt(max(c.variances[axis - 1], 0.0)) * q_t
    return t, mean, mean + half, mean - half
