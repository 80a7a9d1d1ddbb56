"""Dense numeric core shared by the other modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid

from .errors import InputError

# Posterior weight of a class is exp(-SCORE_SCALE * D_i).  The classification
# function is -2 log(pi_i f_i) + const, hence 1/2.
SCORE_SCALE = 0.5

# Negative eigenvalues this small relative to the leading one are round-off.
CLAMP_RTOL = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray  # descending
    vectors: np.ndarray  # columns, orthonormal

    def __len__(self):
        return self.values.shape[0]

    def top(self, d):
        return EigenSystem(self.values[:d], self.vectors[:, :d])


def as_symmetric(S, name="matrix") -> np.ndarray:
    """Validate a square finite matrix and mirror it to exact symmetry."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InputError(f"{name} has non-finite entries")
    return 0.5 * (S + S.T)


def _fix_signs(vectors):
    # first clearly nonzero coordinate of every eigenvector made positive
    mags = np.abs(vectors)
    thresh = 1e-12 * mags.max(axis=0, keepdims=True)
    first = np.argmax(mags > thresh, axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(S) -> EigenSystem:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Output is deterministic: each eigenvector has its first nonzero
    coordinate positive. Negative eigenvalues within ``CLAMP_RTOL`` of the
    leading eigenvalue are set to zero.
    """
    S = as_symmetric(S)
    values, vectors = scipy.linalg.eigh(S, check_finite=False)
    values = values[::-1].copy()
    vectors = _fix_signs(vectors[:, ::-1])
    scale = max(values[0], 0.0)
    tiny = (values < 0) & (np.abs(values) <= CLAMP_RTOL * scale)
    values[tiny] = 0.0
    return EigenSystem(values, np.ascontiguousarray(vectors))


def softmin_neg_half(scores) -> np.ndarray:
    """Posterior probabilities ``exp(-s_i/2) / sum_l exp(-s_l/2)``.

    Works on a vector or row-wise on a 2-D array of scores.
    """
    s = np.asarray(scores, dtype=float)
    shifted = s - s.min(axis=-1, keepdims=True)
    w = np.exp(-SCORE_SCALE * shifted)
    return w / w.sum(axis=-1, keepdims=True)


def log_sum_exp_neg_half(scores) -> np.ndarray:
    """Row-wise ``log sum_i exp(-s_i/2)``."""
    s = np.asarray(scores, dtype=float)
    m = s.min(axis=-1)
    return -SCORE_SCALE * m + np.log(np.exp(-SCORE_SCALE * (s - m[..., None])).sum(axis=-1))


def quad_trapezoid(grid, values) -> float:
    """Composite trapezoid rule over a strictly increasing grid.

    ``values`` may carry extra leading axes; integration runs over the last.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 2:
        raise InputError("quadrature grid needs at least 2 points")
    if values.shape[-1] != grid.shape[0]:
        raise InputError(
            f"values length {values.shape[-1]} does not match grid length {grid.shape[0]}"
        )
    if np.any(np.diff(grid) <= 0):
        raise InputError("quadrature grid must be strictly increasing")
    return trapezoid(values, grid, axis=-1)
