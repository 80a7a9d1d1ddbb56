"""Explicit feature-space versions of the classifier.

When the feature map is known (identity for the linear kernel, B^-1 gamma
for curves in a basis) the classifier can be built from ordinary covariance
matrices instead of kernel matrices. These paths share nothing with the
kernel route except the spectrum-constraint step, which makes them useful
as cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .pgpda import ScreeParams, constrain_spectra, get_submodel, one_hot


@dataclass
class DirectClass:
    label: object
    prior: float
    mean: np.ndarray
    axes: np.ndarray  # p x d, columns normalised in the feature metric
    variances: np.ndarray
    eigenvalues: np.ndarray
    spectrum: np.ndarray
    d: int


@dataclass
class DirectModel:
    classes: list
    noise: float
    metric: np.ndarray  # quadratic form giving the squared feature-space norm

    @property
    def labels(self):
        return [c.label for c in self.classes]

    def score(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        lam = self.noise
        d_max = max(c.d for c in self.classes)
        cols = []
        for c in self.classes:
            dz = Z - c.mean
            proj = dz @ c.axes
            D = (proj ** 2) @ (1.0 / c.variances - 1.0 / lam)
            D += np.einsum("ij,jk,ik->i", dz, self.metric, dz) / lam
            D += np.sum(np.log(c.variances)) + (d_max - c.d) * np.log(lam) - 2.0 * np.log(c.prior)
            cols.append(D)
        return np.column_stack(cols)

    def predict(self, Z):
        return np.asarray(self.labels, dtype=object)[np.argmin(self.score(Z), axis=1)]


def _fit(Z, labels, submodel, scree, to_symmetric, from_symmetric, metric, auto_shrink):
    sm = get_submodel(submodel)
    if sm.orientation == "common":
        raise InputError("the explicit path covers submodels with free orientation (M0-M6)")
    scree = scree if scree is not None else ScreeParams(tau=0.2)
    T, classes = one_hot(labels)
    n, p = Z.shape
    priors = T.sum(0) / n
    spectra, ranks, traces, parts = [], [], [], []
    for i in range(len(classes)):
        Zi = Z[T[:, i] > 0]
        mean = Zi.mean(0)
        C = (Zi - mean).T @ (Zi - mean) / Zi.shape[0]
        S = to_symmetric(C)
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        r = min(Zi.shape[0], p)
        spectra.append(np.maximum(vals[:r], 0.0))
        ranks.append(r)
        traces.append(float(np.trace(S)))
        parts.append((mean, vals, vecs))
    dims, variances, noise = constrain_spectra(
        spectra, ranks, traces, priors, sm, scree, auto_shrink, classes
    )
    out = []
    for i, (mean, vals, vecs) in enumerate(parts):
        d = dims[i]
        out.append(
            DirectClass(
                label=classes[i],
                prior=float(priors[i]),
                mean=mean,
                axes=from_symmetric(vecs[:, :d]),
                variances=np.asarray(variances[i], float),
                eigenvalues=vals[:d],
                spectrum=spectra[i],
                d=d,
            )
        )
    return DirectModel(out, noise, metric)


def fit_linear_direct(X, labels, submodel="M0", scree=None, auto_shrink=True) -> DirectModel:
    """Classifier from per-class covariance eigendecompositions in R^p."""
    X = np.asarray(X, dtype=float)
    ident = lambda A: A  # noqa: E731
    return _fit(X, labels, submodel, scree, ident, ident, np.eye(X.shape[1]), auto_shrink)


def fit_functional_direct(gammas, labels, B, submodel="M0", scree=None, auto_shrink=True) -> DirectModel:
    """Classifier from eigenvectors of B^-1 Sigma_i on basis projections.

    The eigenproblem is solved in the symmetric form B^-1/2 Sigma B^-1/2 and
    the eigenvectors mapped back, so that q' B q = 1.
    """
    G = np.asarray(gammas, dtype=float)
    B = np.asarray(B, dtype=float)
    w, V = np.linalg.eigh(B)
    B_inv_half = (V / np.sqrt(w)) @ V.T
    B_inv = (V / w) @ V.T
    return _fit(
        G,
        labels,
        submodel,
        scree,
        lambda C: B_inv_half @ C @ B_inv_half,
        lambda U: B_inv_half @ U,
        B_inv,
        auto_shrink,
    )
