"""Kernel specifications, Gram matrices and class-centred kernel evaluations."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from functools import lru_cache
from math import comb
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DegenerateClusterError, InputError, ModelError
from .numerics import as_symmetric

FAMILIES = (
    "linear",
    "gaussian",
    "polynomial",
    "hamming",
    "laplacian",
    "functional",
    "combined",
    "precomputed",
)
NUMERIC_FAMILIES = ("linear", "gaussian", "polynomial", "functional")
# families whose kernel can be evaluated on fresh samples
ANALYTIC_FAMILIES = ("linear", "gaussian", "polynomial", "hamming", "functional", "combined")


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel description; reproduces a Gram matrix from config.

    ``columns`` restricts the kernel to a subset of data columns, which is how
    the two operands of a combined kernel read the numeric and categorical
    parts of a mixed dataset.
    """

    family: str
    sigma: Optional[float] = None
    degree: Optional[int] = None
    gamma_h: Optional[float] = None
    nu: Optional[float] = None
    alpha: Optional[float] = None
    basis_size: Optional[int] = None
    quad_density: Optional[int] = None
    left: Optional["KernelSpec"] = None
    right: Optional["KernelSpec"] = None
    columns: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        f = self.family
        if f == "gaussian" and not (self.sigma is not None and self.sigma > 0):
            raise ConfigurationError("gaussian kernel needs sigma > 0")
        if f == "polynomial" and not (self.degree is not None and int(self.degree) >= 1):
            raise ConfigurationError("polynomial kernel needs degree >= 1")
        if f == "hamming" and not (self.gamma_h is not None and self.gamma_h > 0):
            raise ConfigurationError("hamming kernel needs gamma_h > 0")
        if f == "laplacian" and not (self.nu is not None and self.nu > 0):
            raise ConfigurationError("laplacian kernel needs nu > 0")
        if f == "functional" and not (self.basis_size is not None and self.basis_size >= 1):
            raise ConfigurationError("functional kernel needs basis_size >= 1")
        if f == "combined":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ConfigurationError("combined kernel needs alpha in [0, 1]")
            if self.left is None or self.right is None:
                raise ConfigurationError("combined kernel needs two operands")
            for op in (self.left, self.right):
                if op.family in ("laplacian", "precomputed"):
                    raise ConfigurationError(
                        f"combined kernel operands must be evaluable on samples, got {op.family}"
                    )

    # convenience constructors
    @classmethod
    def linear(cls, **kw):
        return cls("linear", **kw)

    @classmethod
    def gaussian(cls, sigma, **kw):
        return cls("gaussian", sigma=float(sigma), **kw)

    @classmethod
    def polynomial(cls, degree, **kw):
        return cls("polynomial", degree=int(degree), **kw)

    @classmethod
    def hamming(cls, gamma_h, **kw):
        return cls("hamming", gamma_h=float(gamma_h), **kw)

    @classmethod
    def laplacian(cls, nu):
        return cls("laplacian", nu=float(nu))

    @classmethod
    def functional(cls, basis_size, quad_density=None, **kw):
        return cls("functional", basis_size=int(basis_size), quad_density=quad_density, **kw)

    @classmethod
    def combined(cls, alpha, left, right):
        return cls("combined", alpha=float(alpha), left=left, right=right)

    @classmethod
    def precomputed(cls):
        return cls("precomputed")

    @property
    def analytic(self):
        return self.family in ANALYTIC_FAMILIES

    def with_params(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return KernelSpec(**d)

    def to_dict(self):
        out = {}
        for k, v in asdict(self).items():
            if v is None:
                continue
            out[k] = list(v) if k == "columns" else v
        if self.left is not None:
            out["left"] = self.left.to_dict()
            out["right"] = self.right.to_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("left", "right"):
            if d.get(k) is not None:
                d[k] = cls.from_dict(d[k])
        return cls(**d)


def _select(spec, data):
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[:, None]
    if spec.columns is not None:
        data = data[:, list(spec.columns)]
    return data


def _numeric(spec, data):
    if data.dtype.kind not in "biuf":
        raise ConfigurationError(f"{spec.family} kernel needs numeric columns, got dtype {data.dtype}")
    data = data.astype(float)
    if not np.all(np.isfinite(data)):
        raise InputError(f"{spec.family} kernel input has non-finite values")
    return data


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def hamming_distances(A, B, chunk=256):
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"categorical tuples differ in length: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], chunk):
        out[s:s + chunk] = (A[s:s + chunk, None, :] != B[None, :, :]).sum(-1)
    return out


def hamming_eval(a, b, gamma_h) -> float:
    """``exp(-gamma_h * d_H(a, b))`` for two categorical tuples."""
    a = np.asarray(a, dtype=object).ravel()
    b = np.asarray(b, dtype=object).ravel()
    if a.shape != b.shape:
        raise InputError(f"categorical tuples differ in length: {a.shape[0]} vs {b.shape[0]}")
    return float(np.exp(-gamma_h * np.count_nonzero(a != b)))


@lru_cache(maxsize=16)
def _functional_gram(basis_size, quad_density):
    from .functional import NaturalCubicSplineBasis, basis_gram

    return basis_gram(NaturalCubicSplineBasis(basis_size), quad_density)


def functional_gram_for(spec):
    from .functional import DEFAULT_DENSITY

    return _functional_gram(spec.basis_size, spec.quad_density or DEFAULT_DENSITY)


def cross(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix ``K(a_i, b_j)`` between two sample sets."""
    f = spec.family
    if f == "combined":
        return spec.alpha * cross(spec.left, A, B) + (1.0 - spec.alpha) * cross(spec.right, A, B)
    if f in ("laplacian", "precomputed"):
        raise ConfigurationError(f"{f} kernel cannot be evaluated on fresh samples; supply kernel rows")
    A = _select(spec, A)
    B = _select(spec, B)
    if f == "hamming":
        return np.exp(-spec.gamma_h * hamming_distances(A, B))
    A = _numeric(spec, A)
    B = _numeric(spec, B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"feature count mismatch: {A.shape[1]} vs {B.shape[1]}")
    if f == "linear":
        return A @ B.T
    if f == "gaussian":
        return np.exp(-_sq_dists(A, B) / (2.0 * spec.sigma ** 2))
    if f == "polynomial":
        return (A @ B.T + 1.0) ** int(spec.degree)
    if f == "functional":
        bg = functional_gram_for(spec)
        if A.shape[1] != bg.order:
            raise InputError(f"functional kernel expects {bg.order} basis coefficients, got {A.shape[1]}")
        return A @ bg.solve(B.T)
    raise ConfigurationError(f"unsupported family {f}")  # pragma: no cover


def diag(spec: KernelSpec, A) -> np.ndarray:
    """Self-evaluations ``K(a, a)``."""
    f = spec.family
    if f == "combined":
        return spec.alpha * diag(spec.left, A) + (1.0 - spec.alpha) * diag(spec.right, A)
    if f in ("gaussian", "hamming"):
        return np.ones(np.asarray(A).shape[0])
    if f in ("laplacian", "precomputed"):
        raise ConfigurationError(f"{f} kernel cannot be evaluated on fresh samples; supply kernel rows")
    A = _numeric(spec, _select(spec, A))
    if f == "linear":
        return (A * A).sum(1)
    if f == "polynomial":
        return ((A * A).sum(1) + 1.0) ** int(spec.degree)
    if f == "functional":
        bg = functional_gram_for(spec)
        return (A * bg.solve(A.T).T).sum(1)
    raise ConfigurationError(f"unsupported family {f}")  # pragma: no cover


def feature_dim(spec: KernelSpec, n_features=None) -> Optional[int]:
    """Dimension of the feature space, ``None`` when unknown or infinite."""
    f = spec.family
    if f == "linear":
        return n_features
    if f == "polynomial":
        return None if n_features is None else comb(n_features + int(spec.degree), n_features)
    if f == "functional":
        return spec.basis_size
    if f == "combined":
        a = feature_dim(spec.left, _ncols(spec.left, n_features))
        b = feature_dim(spec.right, _ncols(spec.right, n_features))
        return None if a is None or b is None else a + b
    return None


def _ncols(spec, n_features):
    return len(spec.columns) if spec.columns is not None else n_features


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric n x n kernel evaluations plus the feature-rank rule."""

    spec: KernelSpec
    entries: np.ndarray
    feature_dim: Optional[int] = None

    @property
    def n(self):
        return self.entries.shape[0]

    def rank_bound(self, n_i):
        """r_i = min(n_i, dim of feature space)."""
        n_i = int(n_i)
        return n_i if self.feature_dim is None else min(n_i, int(self.feature_dim))

    def subset(self, idx):
        idx = np.asarray(idx)
        return GramMatrix(self.spec, self.entries[np.ix_(idx, idx)], self.feature_dim)


def gram(spec: KernelSpec, data) -> GramMatrix:
    """Build the Gram matrix of ``data`` under ``spec``.

    For the laplacian family ``data`` is the adjacency matrix; for the
    precomputed family it is the kernel matrix itself.
    """
    if spec.family == "laplacian":
        return laplacian_gram(data, spec.nu)
    if spec.family == "precomputed":
        return precomputed_gram(data)
    arr = np.asarray(data)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        raise InputError("cannot build a Gram matrix of an empty dataset")
    K = as_symmetric(cross(spec, arr, arr))
    if spec.family in ("gaussian", "hamming"):
        np.fill_diagonal(K, 1.0)
    return GramMatrix(spec, K, feature_dim(spec, _ncols(spec, arr.shape[1])))


def precomputed_gram(K, tol=1e-9) -> GramMatrix:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"precomputed kernel must be square, got shape {K.shape}")
    asym = np.abs(K - K.T).max() if K.size else 0.0
    if asym > tol * max(1.0, np.abs(K).max()):
        raise InputError(f"precomputed kernel is not symmetric (max asymmetry {asym:.3g})")
    return GramMatrix(KernelSpec.precomputed(), as_symmetric(K, "precomputed kernel"))


def laplacian_gram(adjacency, nu) -> GramMatrix:
    """Regularised Laplacian kernel ``(I - D^-1/2 X D^-1/2 + nu I)^-1``."""
    if not nu > 0:
        raise ConfigurationError("laplacian kernel needs nu > 0")
    X = np.asarray(adjacency, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] == 0:
        raise InputError(f"adjacency must be a non-empty square matrix, got shape {X.shape}")
    if not np.array_equal(X, X.T):
        raise InputError("adjacency matrix must be symmetric")
    if np.any(np.diag(X) != 0):
        raise InputError("adjacency matrix must have a zero diagonal")
    if not np.all((X == 0) | (X == 1)):
        raise InputError("adjacency matrix must be binary")
    deg = X.sum(1)
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise InputError(f"node {int(isolated[0])} has no edges; remove isolated nodes first")
    s = 1.0 / np.sqrt(deg)
    n = X.shape[0]
    A = (1.0 + nu) * np.eye(n) - s[:, None] * X * s[None, :]
    K = scipy.linalg.solve(A, np.eye(n), assume_a="pos")
    spec = KernelSpec.laplacian(nu)
    return GramMatrix(spec, as_symmetric(K))


def combine(left: GramMatrix, right: GramMatrix, alpha) -> GramMatrix:
    """Entrywise convex combination ``alpha K1 + (1 - alpha) K2``."""
    if left.n != right.n:
        raise InputError(f"cannot combine Gram matrices of sizes {left.n} and {right.n}")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError("alpha must lie in [0, 1]")
    K = alpha * left.entries + (1.0 - alpha) * right.entries
    try:
        spec = KernelSpec.combined(alpha, left.spec, right.spec)
    except ConfigurationError:
        spec = KernelSpec.precomputed()
    fd = None
    if left.feature_dim is not None and right.feature_dim is not None:
        fd = left.feature_dim + right.feature_dim
    return GramMatrix(spec, 0.5 * (K + K.T), fd)


# ---------------------------------------------------------------------------
# class centring


@dataclass(frozen=True)
class Sample:
    """A sample outside the training set, known through its kernel values."""

    row: np.ndarray  # K(x, x_l) for every training sample l
    self_value: float  # K(x, x)


@dataclass(frozen=True)
class Centering:
    """Cached sums for centring the feature map on a (weighted) class mean.

    Indicator weights give the supervised class mean; responsibilities give
    the soft mean used during EM.
    """

    weights: np.ndarray
    total: float
    row_means: np.ndarray = field(repr=False)  # sum_l w_l K(x_l, .) / W
    block_mean: float = 0.0  # w' K w / W^2

    @property
    def members(self):
        return np.flatnonzero(self.weights > 0)


def weighted_centering(gram, weights) -> Centering:
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram)
    w = np.asarray(weights, dtype=float)
    if w.shape != (K.shape[0],):
        raise InputError(f"weights must have length {K.shape[0]}")
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    W = w.sum()
    if not W > 0:
        raise DegenerateClusterError("all weights are zero: empty cluster")
    rm = K @ w / W
    return Centering(w, float(W), rm, float(w @ rm / W))


def class_centering(gram, members) -> Centering:
    n = gram.n if isinstance(gram, GramMatrix) else np.asarray(gram).shape[0]
    members = np.asarray(members, dtype=int)
    if members.size == 0:
        raise ModelError("cannot centre on an empty class")
    w = np.zeros(n)
    w[members] = 1.0
    return weighted_centering(gram, w)


Point = Union[int, np.integer, Sample]


def _kval(K, a, b):
    if isinstance(a, Sample) and isinstance(b, Sample):
        if a is not b:
            raise InputError("kernel value between two distinct fresh samples is unknown")
        return a.self_value
    if isinstance(a, Sample):
        return a.row[b]
    if isinstance(b, Sample):
        return b.row[a]
    return K[a, b]


def _mean_term(K, c, a):
    return (a.row @ c.weights) / c.total if isinstance(a, Sample) else c.row_means[a]


def rho(gram, centering: Centering, a: Point, b: Point) -> float:
    """Centred feature inner product ``<phi(a) - mu, phi(b) - mu>``."""
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram)
    return float(
        _kval(K, a, b) - _mean_term(K, centering, a) - _mean_term(K, centering, b) + centering.block_mean
    )


def rho_weighted(gram, weights, a: Point, b: Point) -> float:
    return rho(gram, weighted_centering(gram, weights), a, b)


def centered_block(gram, centering: Centering, idx=None) -> np.ndarray:
    """Matrix of rho over training samples ``idx`` (all when None)."""
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram)
    if idx is None:
        idx = np.arange(K.shape[0])
    rm = centering.row_means[idx]
    R = K[np.ix_(idx, idx)] - rm[:, None] - rm[None, :] + centering.block_mean
    return 0.5 * (R + R.T)


def centered_rows(rows, self_values, centering: Centering):
    """rho(x, x_l) for fresh samples (rows) and rho(x, x) for each of them."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    m = rows @ centering.weights / centering.total
    R = rows - m[:, None] - centering.row_means[None, :] + centering.block_mean
    self_rho = np.asarray(self_values, dtype=float) - 2.0 * m + centering.block_mean
    return R, self_rho


# ---------------------------------------------------------------------------


@dataclass
class RangeScaler:
    """Per-column affine map of the training range onto [-1, 1]."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X.min(0), X.max(0))

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        span = np.where(self.high > self.low, self.high - self.low, 1.0)
        return 2.0 * (X - self.low) / span - 1.0

    def to_dict(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["low"], float), np.asarray(d["high"], float))
