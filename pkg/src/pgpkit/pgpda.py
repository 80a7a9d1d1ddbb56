"""Parsimonious Gaussian process discriminant analysis through a kernel.

Each class is modelled in feature space by a Gaussian with d_i free
variances on its leading axes and one noise variance, shared by all
classes, everywhere else. The leading axes come from the eigenvectors of the
class-centred kernel matrix M_i, so no explicit feature map is needed.

The estimation routine works on an n x k weight matrix: one-hot class
indicators for supervised fitting, EM responsibilities for clustering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateNoiseError, DimensionError, InputError, ModelError
from .kernels import (
    GramMatrix,
    KernelSpec,
    RangeScaler,
    centered_block,
    class_centering,
    cross,
    diag,
    gram as build_gram,
    precomputed_gram,
)
from .numerics import softmin_neg_half, sym_eig


class PGPWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Submodel:
    name: str
    variances: str  # free | within | between | within_between
    dims: str  # free | common
    orientation: str  # free | common


SUBMODELS = {
    "M0": Submodel("M0", "free", "free", "free"),
    "M1": Submodel("M1", "free", "common", "free"),
    "M2": Submodel("M2", "within", "free", "free"),
    "M3": Submodel("M3", "within", "common", "free"),
    "M4": Submodel("M4", "between", "common", "free"),
    "M5": Submodel("M5", "within_between", "free", "free"),
    "M6": Submodel("M6", "within_between", "common", "free"),
    "M7": Submodel("M7", "between", "common", "common"),
    "M8": Submodel("M8", "within_between", "common", "common"),
}


def get_submodel(name) -> Submodel:
    if isinstance(name, Submodel):
        return name
    try:
        return SUBMODELS[str(name).upper()]
    except KeyError:
        raise InputError(f"unknown submodel {name!r}; expected one of M0..M8") from None


@dataclass(frozen=True)
class ScreeParams:
    """Either a fixed dimension ``dim`` or a scree threshold ``tau``."""

    tau: Optional[float] = None
    dim: Optional[int] = None
    d_min: int = 1
    cap: Optional[int] = None

    def __post_init__(self):
        if (self.tau is None) == (self.dim is None):
            raise InputError("give exactly one of tau (scree threshold) or dim (fixed dimension)")
        if self.tau is not None and not 0.0 < self.tau <= 1.0:
            raise InputError("scree threshold tau must lie in (0, 1]")
        if self.dim is not None and self.dim < 1:
            raise InputError("fixed dimension must be >= 1")


# spread below this, relative to the largest class spread, counts as none
ZERO_SPREAD_RTOL = 1e-12
# eigenvalues below this fraction of the class's leading one are not retained
EIG_FLOOR_RTOL = 1e-12
NOISE_FLOOR = 1e-14


def cattell_dim(eigenvalues, params: ScreeParams, rank_bound=None) -> int:
    """Cattell scree test on a descending spectrum.

    Keeps the last axis whose eigenvalue drop is at least ``tau`` times the
    largest drop, then clips to ``[d_min, min(cap, rank_bound - 1)]``.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    upper = vals.shape[0] - 1
    if rank_bound is not None:
        upper = min(upper, int(rank_bound) - 1)
    if params.cap is not None:
        upper = min(upper, params.cap)
    if upper < 1:
        return max(upper, 0)
    if params.dim is not None:
        return min(params.dim, upper)
    diffs = vals[:-1] - vals[1:]
    top = diffs.max()
    if not top > 0:
        warnings.warn("flat eigenvalue scree; using the minimum dimension", PGPWarning, stacklevel=2)
        return min(params.d_min, upper)
    d = int(np.flatnonzero(diffs >= params.tau * top)[-1]) + 1
    return min(max(d, params.d_min), upper)


def _pad(spectra):
    width = max(len(s) for s in spectra)
    return np.array([np.pad(np.asarray(s, float), (0, width - len(s))) for s in spectra])


def common_dimension(spectra, priors, params: ScreeParams, caps=None) -> int:
    """Shared intrinsic dimension from the prior-weighted mean spectrum.

    ``caps`` are per-class upper bounds on the dimension (r_i - 1 or fewer).
    """
    priors = np.asarray(priors, dtype=float)
    mean = priors @ _pad(spectra) / priors.sum()
    bound = None if caps is None else min(caps) + 1
    return cattell_dim(mean, params, rank_bound=bound)


def fuse_spectra(spectra, dims, submodel, priors, d_common=None, rank_bounds=None):
    """Apply the eigenvalue constraints of a submodel.

    Returns ``(variances, dims)`` where ``variances[i]`` holds the d_i model
    variances of class i. Classes with d_i = 0 take no part in pooling.
    """
    sm = get_submodel(submodel)
    priors = np.asarray(priors, dtype=float)
    dims = [int(d) for d in dims]
    if sm.dims == "common" and d_common is not None:
        if rank_bounds is not None and d_common >= min(rank_bounds):
            raise DimensionError(
                f"common dimension {d_common} must be below every rank bound (min {min(rank_bounds)})"
            )
        dims = [int(d_common)] * len(dims)
    spectra = [np.asarray(s, dtype=float) for s in spectra]
    for s, d in zip(spectra, dims):
        if len(s) < d:
            raise DimensionError(f"spectrum of length {len(s)} cannot supply {d} eigenvalues")
    live = [i for i, d in enumerate(dims) if d > 0]
    out = [s[:d].copy() for s, d in zip(spectra, dims)]
    if sm.variances == "free" or not live:
        return out, dims
    if sm.variances == "within":
        return [np.full(d, s[:d].mean()) if d else s[:0] for s, d in zip(spectra, dims)], dims
    if sm.variances == "between":
        width = max(dims)
        pooled = np.empty(width)
        for j in range(width):
            who = [i for i in live if dims[i] > j]
            w = priors[who] / priors[who].sum()
            pooled[j] = sum(wi * spectra[i][j] for wi, i in zip(w, who))
        return [pooled[:d].copy() for d in dims], dims
    # within and between: one value for every retained axis of every class
    w = priors[live] / priors[live].sum()
    level = sum(wi * spectra[i][: dims[i]].mean() for wi, i in zip(w, live))
    return [np.full(d, level) for d in dims], dims


def estimate_noise(traces, spectra, dims, rank_bounds, priors) -> float:
    """Noise variance from the trace left over after the retained axes."""
    priors = np.asarray(priors, dtype=float)
    num = 0.0
    den = 0.0
    for tr, s, d, r, p in zip(traces, spectra, dims, rank_bounds, priors):
        if r <= d:
            raise DimensionError(f"rank bound {r} must exceed the dimension {d}")
        num += p * (tr - np.sum(np.asarray(s)[:d]))
        den += p * (r - d)
    lam = num / den
    if not lam > NOISE_FLOOR:
        raise DegenerateNoiseError(
            f"noise variance estimate {lam:.3g} is not positive; lower the dimension or the scree threshold"
        )
    return float(lam)


def usable_dims(spectra, ranks, labels=None):
    """Per-class ceiling on d_i: below r_i and within the positive spectrum."""
    top = max(s[0] for s in spectra)
    caps = []
    for i, (s, r) in enumerate(zip(spectra, ranks)):
        lead = s[0]
        if lead <= ZERO_SPREAD_RTOL * max(top, np.finfo(float).tiny):
            n_pos = 0
        else:
            n_pos = int(np.count_nonzero(s > EIG_FLOOR_RTOL * lead))
        caps.append(min(r - 1, n_pos))
        if caps[-1] == 0:
            name = labels[i] if labels is not None else i
            warnings.warn(f"class {name!r} has no usable spread; it keeps no axes", PGPWarning, stacklevel=3)
    return caps


def constrain_spectra(
    spectra, ranks, traces, priors, submodel, scree, auto_shrink=True, labels=None, pooled=None, fixed_dims=None
):
    """Dimensions, model variances and noise variance from class spectra.

    ``spectra[i]`` are the leading r_i eigenvalues of class i, ``traces[i]``
    the full trace of its covariance operator. ``pooled`` replaces the class
    spectra for the shared-orientation submodels. ``fixed_dims`` bypasses
    the scree test.
    """
    sm = get_submodel(submodel)
    caps = usable_dims(spectra, ranks, labels)
    live_caps = [c for c in caps if c > 0]
    if fixed_dims is not None:
        dims = [min(int(d), c) for d, c in zip(fixed_dims, caps)]
    elif sm.dims == "common":
        d_common = common_dimension(spectra, priors, scree, live_caps) if live_caps else 0
        if pooled is not None and pooled[0] > 0:
            d_common = min(d_common, int(np.count_nonzero(pooled > EIG_FLOOR_RTOL * pooled[0])))
        dims = [min(d_common, c) for c in caps]
    else:
        dims = [min(cattell_dim(s, scree, r), c) for s, r, c in zip(spectra, ranks, caps)]

    fit_spectra = [pooled] * len(spectra) if pooled is not None else spectra
    while True:
        variances, dims = fuse_spectra(fit_spectra, dims, sm, priors)
        try:
            noise = estimate_noise(traces, fit_spectra, dims, ranks, priors)
        except DegenerateNoiseError:
            # every class spends its whole positive spectrum on signal axes
            full = [i for i, (d, c) in enumerate(zip(dims, caps)) if d > 0 and d >= c]
            if not auto_shrink or not full:
                raise
            if sm.dims == "common":
                new_dims = [max(d - 1, 0) for d in dims]
            else:
                new_dims = [d - 1 if i in full else d for i, d in enumerate(dims)]
            warnings.warn(
                f"shrinking dimensions {dims} -> {new_dims} to leave a noise residual", PGPWarning, stacklevel=2
            )
            dims = new_dims
            continue
        if not auto_shrink:
            break
        keep = [int(np.count_nonzero(np.cumprod(v > noise))) for v in variances]
        bad = [i for i, (kp, d) in enumerate(zip(keep, dims)) if kp < d]
        if not bad:
            break
        if sm.dims == "common":
            target = max(min(keep[i] for i in bad), 1)
            new_dims = [min(d, target) for d in dims]
        else:
            new_dims = [max(kp, 1) if d else 0 for kp, d in zip(keep, dims)]
        if new_dims == dims:
            warnings.warn(
                "a retained variance does not exceed the noise variance even at the minimum dimension",
                PGPWarning,
                stacklevel=2,
            )
            break
        warnings.warn(
            f"shrinking dimensions {dims} -> {new_dims} so retained variances exceed the noise",
            PGPWarning,
            stacklevel=2,
        )
        dims = new_dims
    return dims, variances, noise



def build_M(gram, members) -> np.ndarray:
    """n_i x n_i matrix of rho_i(x_l, x_l') / n_i over one class."""
    members = np.asarray(members, dtype=int)
    c = class_centering(gram, members)
    return centered_block(gram, c, members) / members.shape[0]


# ---------------------------------------------------------------------------


@dataclass
class ClassModel:
    label: object
    size: float  # n_i (soft count during EM)
    prior: float
    d: int
    rank: int  # r_i
    variances: np.ndarray  # model variances on the d retained axes
    eigenvalues: np.ndarray  # raw eigenvalues of M_i behind those axes
    spectrum: np.ndarray = field(repr=False)  # leading r_i eigenvalues of M_i
    trace: float = 0.0
    axes: np.ndarray = field(default=None, repr=False)  # n x k x d atom coefficients
    beta: np.ndarray = field(default=None, repr=False)  # eigenvectors over the support
    support: np.ndarray = field(default=None, repr=False)


@dataclass
class FittedModel:
    """A fitted parsimonious model; the unit of prediction and persistence.

    ``center_weights`` (n x k) define the class means in feature space:
    one-hot labels after supervised fitting, responsibilities after EM.
    """

    submodel: str
    kernel: KernelSpec
    classes: list
    noise: float
    center_weights: np.ndarray = field(repr=False)
    col_means: np.ndarray = field(repr=False)  # <phi(x_l), mu_c>, n x k
    block_means: np.ndarray = field(repr=False)  # <mu_c, mu_c'>, k x k
    train_data: Optional[np.ndarray] = field(default=None, repr=False)
    scaler: Optional[RangeScaler] = None
    feature_dim: Optional[int] = None
    shared_orientation: bool = False

    @property
    def k(self):
        return len(self.classes)

    @property
    def n_train(self):
        return self.center_weights.shape[0]

    @property
    def d_max(self):
        return max(c.d for c in self.classes)

    @property
    def labels(self):
        return [c.label for c in self.classes]

    @property
    def priors(self):
        return np.array([c.prior for c in self.classes])

    # -- kernel rows for fresh samples ------------------------------------
    def kernel_rows(self, X):
        if not self.kernel.analytic or self.train_data is None:
            raise InputError(
                f"{self.kernel.family} kernel: supply kernel rows against the training samples"
            )
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return cross(self.kernel, X, self.train_data), diag(self.kernel, X)

    def projections(self, rows, self_values):
        """Per class: (m x d_i projections, m-vector of rho_i(x, x))."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        self_values = np.atleast_1d(np.asarray(self_values, dtype=float))
        if rows.shape[1] != self.n_train or rows.shape[0] != self_values.shape[0]:
            raise InputError(
                f"kernel rows must be (m x {self.n_train}) with m self-values; got {rows.shape} and {self_values.shape}"
            )
        norm_w = self.center_weights / self.center_weights.sum(0)
        kmean = rows @ norm_w  # <phi(x), mu_c>
        out = []
        for i, c in enumerate(self.classes):
            rho_xx = self_values - 2.0 * kmean[:, i] + self.block_means[i, i]
            P = np.zeros((rows.shape[0], c.d))
            if c.d:
                for cc in range(self.k):
                    A = c.axes[:, cc, :]
                    if not np.any(A):
                        continue
                    P += (rows - kmean[:, [cc]]) @ A
                    P -= self.col_means[:, i] @ A
                    P += self.block_means[i, cc] * A.sum(0)
            out.append((P, rho_xx))
        return out

    def score_rows(self, rows, self_values) -> np.ndarray:
        """Classification function values D_i, one column per class."""
        lam = self.noise
        d_max = self.d_max
        cols = []
        for c, (P, rho_xx) in zip(self.classes, self.projections(rows, self_values)):
            a = c.variances
            D = (P ** 2) @ (1.0 / a - 1.0 / lam) + rho_xx / lam
            D += np.sum(np.log(a)) + (d_max - c.d) * np.log(lam) - 2.0 * np.log(c.prior)
            cols.append(D)
        return np.column_stack(cols)

    def score(self, X):
        return self.score_rows(*self.kernel_rows(X))

    def posterior_rows(self, rows, self_values):
        return softmin_neg_half(self.score_rows(rows, self_values))

    def posterior(self, X):
        return softmin_neg_half(self.score(X))

    def predict_rows(self, rows, self_values):
        idx = np.argmin(self.score_rows(rows, self_values), axis=1)
        return np.asarray(self.labels, dtype=object)[idx]

    def predict(self, X):
        return self.predict_rows(*self.kernel_rows(X))

    def project_rows(self, rows, self_values, cls, axis=None):
        """Coordinates on the feature subspace of class ``cls`` (axes from 1)."""
        c = self.classes[cls]
        P, _ = self.projections(rows, self_values)[cls]
        if axis is None:
            return P
        if not 1 <= axis <= c.d:
            raise InputError(f"axis {axis} out of range for class {cls} with d={c.d}")
        return P[:, axis - 1]

    def project(self, X, cls, axis=None):
        return self.project_rows(*self.kernel_rows(X), cls, axis)

    def train_scores(self, K):
        return self.score_rows(K, np.diag(K))


# ---------------------------------------------------------------------------


def _class_block(K, w, col_means, block_mean, i):
    support = np.flatnonzero(w > 0)
    W = w.sum()
    rm = col_means[support, i]
    R = K[np.ix_(support, support)] - rm[:, None] - rm[None, :] + block_mean
    s = np.sqrt(w[support])
    M = s[:, None] * R * s[None, :] / W
    return support, 0.5 * (M + M.T)


def _pooled_block(K, T, col_means, block_means, n):
    atoms = np.argwhere(T > 0)  # (sample, centre class)
    ell, cc = atoms[:, 0], atoms[:, 1]
    R = (
        K[np.ix_(ell, ell)]
        - col_means[ell][:, cc].T
        - col_means[ell][:, cc]
        + block_means[np.ix_(cc, cc)]
    )
    s = np.sqrt(T[ell, cc] / n)
    G = s[:, None] * R * s[None, :]
    return atoms, s, 0.5 * (G + G.T)


def estimate(
    gram, weights, submodel="M0", scree=None, labels=None, auto_shrink=True, rank_fn=None, fixed_dims=None
):
    """Estimate every parameter from a Gram matrix and an n x k weight matrix.

    The returned model scores fresh samples only through kernel rows; attach
    ``train_data`` for analytic kernels.
    """
    sm = get_submodel(submodel)
    scree = scree if scree is not None else ScreeParams(tau=0.2)
    if isinstance(gram, GramMatrix):
        K = gram.entries
        spec = gram.spec
        fdim = gram.feature_dim
        rank_fn = rank_fn or gram.rank_bound
    else:
        K = np.asarray(gram, dtype=float)
        spec = KernelSpec.precomputed()
        fdim = None
        rank_fn = rank_fn or (lambda m: int(m))
    T = np.asarray(weights, dtype=float)
    n, k = T.shape
    if K.shape != (n, n):
        raise InputError(f"Gram matrix {K.shape} does not match {n} weighted samples")
    sizes = T.sum(0)
    if np.any(sizes <= 0):
        raise ModelError("every class needs positive weight")
    priors = sizes / n
    labels = list(range(k)) if labels is None else list(labels)

    norm_w = T / sizes
    col_means = K @ norm_w
    block_means = norm_w.T @ col_means
    block_means = 0.5 * (block_means + block_means.T)

    per_class = []
    for i in range(k):
        support, M = _class_block(K, T[:, i], col_means, block_means[i, i], i)
        eig = sym_eig(M)
        r = rank_fn(int(round(sizes[i])))
        r = max(min(r, len(eig)), 1)
        spectrum = np.maximum(eig.values[:r], 0.0)
        per_class.append(dict(support=support, eig=eig, rank=r, spectrum=spectrum, trace=float(np.trace(M))))

    spectra = [pc["spectrum"] for pc in per_class]
    ranks = [pc["rank"] for pc in per_class]
    traces = [pc["trace"] for pc in per_class]

    pooled = pooled_spec = None
    if sm.orientation == "common":
        atoms, atom_scale, G = _pooled_block(K, T, col_means, block_means, n)
        pooled = sym_eig(G)
        pooled_spec = np.maximum(pooled.values[: max(ranks)], 0.0)

    dims, variances, noise = constrain_spectra(
        spectra, ranks, traces, priors, sm, scree, auto_shrink, labels, pooled_spec, fixed_dims
    )

    classes = []
    for i, pc in enumerate(per_class):
        d = dims[i]
        axes = np.zeros((n, k, d))
        if pooled is not None:
            raw = pooled.values[:d]
            beta = pooled.vectors[:, :d]
            if d:
                axes[atoms[:, 0], atoms[:, 1], :] = beta * atom_scale[:, None] / np.sqrt(raw)
            support = atoms
        else:
            raw = pc["eig"].values[:d]
            beta = pc["eig"].vectors[:, :d]
            support = pc["support"]
            if d:
                scale = np.sqrt(T[support, i] / sizes[i])
                axes[support, i, :] = beta * scale[:, None] / np.sqrt(raw)
        classes.append(
            ClassModel(
                label=labels[i],
                size=float(sizes[i]),
                prior=float(priors[i]),
                d=d,
                rank=pc["rank"],
                variances=np.asarray(variances[i], dtype=float),
                eigenvalues=np.asarray(raw, dtype=float),
                spectrum=pc["spectrum"],
                trace=pc["trace"],
                axes=axes,
                beta=beta,
                support=support,
            )
        )
    return FittedModel(
        submodel=sm.name,
        kernel=spec,
        classes=classes,
        noise=noise,
        center_weights=T.copy(),
        col_means=col_means,
        block_means=block_means,
        feature_dim=fdim,
        shared_orientation=pooled is not None,
    )


def one_hot(labels):
    labels = np.asarray(labels)
    classes, codes = np.unique(labels, return_inverse=True)
    T = np.zeros((labels.shape[0], classes.shape[0]))
    T[np.arange(labels.shape[0]), codes] = 1.0
    return T, list(classes)


def fit(gram, labels, submodel="M0", scree=None, auto_shrink=True) -> FittedModel:
    """Supervised fit from a Gram matrix over the training samples."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    g = gram if isinstance(gram, GramMatrix) else precomputed_gram(gram)
    if g.n != n:
        raise InputError(f"Gram matrix has {g.n} rows but {n} labels were given")
    T, classes = one_hot(labels)
    if len(classes) < 2:
        raise InputError("supervised fitting needs at least two classes")
    counts = T.sum(0)
    for lab, cnt in zip(classes, counts):
        if cnt == 1:
            warnings.warn(f"class {lab!r} has a single sample; it keeps no axes", PGPWarning, stacklevel=2)
    return estimate(g, T, submodel, scree, labels=classes, auto_shrink=auto_shrink)


class PGPDA:
    """Estimator front-end: kernel construction, optional scaling, fit/predict.

    Parameters
    ----------
    kernel : KernelSpec
    model : str
        Submodel name, ``"M0"`` .. ``"M8"``.
    tau, dim : float, int
        Scree threshold or fixed intrinsic dimension (exactly one).
    scale : bool
        Map each numeric column of the training data onto [-1, 1].
    """

    def __init__(self, kernel=None, model="M0", tau=0.2, dim=None, scale=False, auto_shrink=True):
        self.kernel = kernel if kernel is not None else KernelSpec.gaussian(1.0)
        self.model = model
        self.tau = None if dim is not None else tau
        self.dim = dim
        self.scale = scale
        self.auto_shrink = auto_shrink
        self.model_ = None

    @property
    def scree(self):
        return ScreeParams(tau=self.tau, dim=self.dim)

    def fit(self, X, y):
        X = np.asarray(X)
        scaler = None
        if self.scale:
            scaler = RangeScaler.fit(X)
            X = scaler.transform(X)
        g = build_gram(self.kernel, X)
        self.model_ = fit(g, y, self.model, self.scree, self.auto_shrink)
        if self.kernel.analytic:
            self.model_.train_data = X
        self.model_.scaler = scaler
        return self

    def fit_gram(self, K, y):
        g = K if isinstance(K, GramMatrix) else precomputed_gram(K)
        self.model_ = fit(g, y, self.model, self.scree, self.auto_shrink)
        return self

    def _check(self):
        if self.model_ is None:
            raise ModelError("estimator is not fitted")
        return self.model_

    def decision_function(self, X):
        return self._check().score(X)

    def predict(self, X):
        return self._check().predict(X)

    def predict_proba(self, X):
        return self._check().posterior(X)

    def transform(self, X, cls):
        return self._check().project(X, cls)

    @property
    def classes_(self):
        return self._check().labels
