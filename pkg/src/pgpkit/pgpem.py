"""EM clustering with parsimonious Gaussian process models.

The M step is the supervised estimator run with responsibilities as
weights; the E step turns the resulting classification functions into
posterior cluster memberships.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ClusteringFailure, DegenerateClusterError, InputError, ModelError, NumericalError
from .kernels import GramMatrix, precomputed_gram
from .numerics import log_sum_exp_neg_half, softmin_neg_half
from .pgpda import FittedModel, ScreeParams, estimate

COLLAPSE_RTOL = 1e-8


@dataclass
class EmConfig:
    k: int
    submodel: str = "M0"
    scree: ScreeParams = field(default_factory=lambda: ScreeParams(tau=0.2))
    max_iter: int = 200
    tol: float = 1e-4
    restarts: int = 10
    seed: int = 0
    init: str = "kkmeans"
    freeze_dims_after: Optional[int] = None
    auto_shrink: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be >= 1")
        if not self.tol > 0:
            raise InputError("tolerance must be positive")
        if self.restarts < 1:
            raise InputError("restarts must be >= 1")
        if self.init not in ("kkmeans", "random"):
            raise InputError(f"unknown init mode {self.init!r}")


@dataclass
class EmTrace:
    objective: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    dims: list = field(default_factory=list)

    def rows(self):
        for q, (J, dt, d) in enumerate(zip(self.objective, self.delta, self.dims), start=1):
            yield q, J, dt, d


@dataclass
class EmResult:
    partition: np.ndarray
    responsibilities: np.ndarray
    model: FittedModel
    trace: EmTrace
    restart: int
    objective: float
    failures: list = field(default_factory=list)


def _K(gram):
    return gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=float)


def kernel_kmeans(K, k, rng, max_iter=100):
    """Hard partition by Lloyd iterations in feature space, k-means++ seeding."""
    n = K.shape[0]
    dK = np.diag(K)
    centers = [int(rng.integers(n))]
    for _ in range(1, k):
        c = np.array(centers)
        dist = dK[:, None] - 2 * K[:, c] + dK[c][None, :]
        dmin = np.maximum(dist.min(1), 0.0)
        p = dmin / dmin.sum() if dmin.sum() > 0 else np.full(n, 1.0 / n)
        centers.append(int(rng.choice(n, p=p)))
    dist = dK[:, None] - 2 * K[:, centers] + dK[centers][None, :]
    z = np.argmin(dist, axis=1)
    for _ in range(max_iter):
        fit_err = dist[np.arange(n), z]
        dist = np.empty((n, k))
        for c in range(k):
            m = z == c
            if not m.any():
                # re-seed an empty cluster on the worst-fitted point
                m = np.zeros(n, bool)
                m[int(np.argmax(fit_err))] = True
            dist[:, c] = dK - 2 * K[:, m].mean(1) + K[np.ix_(m, m)].mean()
        z_new = np.argmin(dist, axis=1)
        if np.array_equal(z_new, z):
            break
        z = z_new
    return z


def init_responsibilities(n, k, mode="random", seed=0, gram=None) -> np.ndarray:
    """Starting responsibilities: Dirichlet(1) rows or softened kernel k-means."""
    if k > n:
        raise InputError(f"cannot form {k} clusters from {n} samples")
    if k == 1:
        return np.ones((n, 1))
    rng = np.random.default_rng(seed)
    if mode == "random":
        return rng.dirichlet(np.ones(k), size=n)
    if mode == "kkmeans":
        if gram is None:
            raise InputError("kernel k-means initialisation needs the Gram matrix")
        z = kernel_kmeans(_K(gram), k, rng)
        return 0.9 * np.eye(k)[z] + 0.1 / k
    raise InputError(f"unknown init mode {mode!r}")


def m_step(gram, t, submodel="M0", scree=None, auto_shrink=True, fixed_dims=None) -> FittedModel:
    t = np.asarray(t, dtype=float)
    sizes = t.sum(0)
    n = t.shape[0]
    dead = np.flatnonzero(sizes < COLLAPSE_RTOL * n)
    if dead.size:
        raise DegenerateClusterError(f"cluster {int(dead[0])} collapsed (n_i = {sizes[dead[0]]:.3g})")
    g = gram if isinstance(gram, GramMatrix) else precomputed_gram(gram)
    return estimate(g, t, submodel, scree, auto_shrink=auto_shrink, fixed_dims=fixed_dims)


def e_step(model: FittedModel, gram, t_prev=None):
    """Responsibilities and per-sample log normaliser under ``model``.

    ``t_prev`` is accepted for symmetry with the M step; the weights it
    carries are already part of ``model``.
    """
    K = _K(gram)
    D = model.train_scores(K)
    bad = np.flatnonzero(~np.all(np.isfinite(D), axis=1))
    if bad.size:
        raise NumericalError(f"non-finite classification score for sample {int(bad[0])}")
    return softmin_neg_half(D), log_sum_exp_neg_half(D)


def objective(model: FittedModel, lse) -> float:
    """Log-likelihood, up to a constant, within the rank-bounded span.

    The scores D_i leave out (r - d_max) log(lambda), which is shared by
    every cluster but changes with the noise estimate between iterations;
    without it the sum of log normalisers is not monotone under EM.
    """
    r = max(c.rank for c in model.classes)
    return float(np.sum(lse) - 0.5 * len(lse) * (r - model.d_max) * np.log(model.noise))


def _run_once(gram, config: EmConfig, seed):
    K = _K(gram)
    n = K.shape[0]
    t = init_responsibilities(n, config.k, config.init, seed, gram)
    trace = EmTrace()
    model = None
    fixed = None
    for q in range(1, config.max_iter + 1):
        model = m_step(gram, t, config.submodel, config.scree, config.auto_shrink, fixed)
        if config.freeze_dims_after is not None and q == config.freeze_dims_after:
            fixed = [c.d for c in model.classes]
        t_new, lse = e_step(model, gram, t)
        delta = float(np.abs(t_new - t).mean())
        trace.objective.append(objective(model, lse))
        trace.delta.append(delta)
        trace.dims.append([c.d for c in model.classes])
        t = t_new
        if delta < config.tol:
            break
    return t, model, trace


def _threads():
    try:
        return max(1, int(os.environ.get("PGP_THREADS", "1")))
    except ValueError:
        return 1


def run(gram, config: EmConfig) -> EmResult:
    """EM from several starts; keeps the run with the highest final objective."""
    K = _K(gram)
    if config.k > K.shape[0]:
        raise InputError(f"cannot form {config.k} clusters from {K.shape[0]} samples")
    seeds = [config.seed + r for r in range(config.restarts)]

    def attempt(seed):
        try:
            return _run_once(gram, config, seed)
        except (DegenerateClusterError, ModelError) as exc:
            return exc

    workers = min(_threads(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(attempt, seeds))
    else:
        outcomes = [attempt(s) for s in seeds]

    best = None
    failures = []
    for r, out in enumerate(outcomes):
        if isinstance(out, Exception):
            failures.append((r, str(out)))
            continue
        t, model, trace = out
        J = trace.objective[-1]
        if best is None or J > best[4]:
            best = (t, model, trace, r, J)
    if best is None:
        raise ClusteringFailure(f"all {len(seeds)} restarts failed; first: {failures[0][1]}")
    if failures:
        warnings.warn(f"{len(failures)} of {len(seeds)} restarts failed", UserWarning, stacklevel=2)
    t, model, trace, r, J = best
    return EmResult(np.argmax(t, axis=1), t, model, trace, r, J, failures)


def cluster_accuracy(partition, labels) -> float:
    """Best agreement between a partition and labels over label matchings."""
    partition = np.asarray(partition)
    labels = np.asarray(labels)
    if partition.shape != labels.shape:
        raise InputError("partition and labels must have equal length")
    if partition.size == 0:
        return 1.0
    _, p = np.unique(partition, return_inverse=True)
    _, l = np.unique(labels, return_inverse=True)
    C = np.zeros((p.max() + 1, l.max() + 1))
    np.add.at(C, (p, l), 1)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum() / partition.size)


class PGPEM:
    """Estimator front-end for clustering a dataset under a kernel."""

    def __init__(self, kernel, k, model="M0", tau=0.2, dim=None, **config):
        self.kernel = kernel
        self.config = EmConfig(
            k=k, submodel=model, scree=ScreeParams(tau=None if dim is not None else tau, dim=dim), **config
        )
        self.result_ = None

    def fit(self, X):
        from .kernels import gram

        g = gram(self.kernel, X)
        self.result_ = run(g, self.config)
        if self.kernel.analytic:
            self.result_.model.train_data = np.asarray(X)
        return self

    def fit_gram(self, K):
        self.result_ = run(K, self.config)
        return self

    def fit_predict(self, X):
        return self.fit(X).result_.partition
