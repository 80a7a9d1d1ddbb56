"""Hyperparameter selection: stratified k-fold CV and repeated hold-out.

A configuration is one (kernel, submodel, scree) triple. Kernel matrices
are built once per kernel hyperparameter over the whole training part and
sliced per fold.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.model_selection import StratifiedKFold, StratifiedShuffleSplit

from .errors import ConfigurationError, InputError, PGPError
from .kernels import GramMatrix, KernelSpec, RangeScaler, cross, diag, gram
from .pgpda import SUBMODELS, ScreeParams, fit


@dataclass
class SearchGrid:
    kernels: list
    scree: list
    submodels: list = field(default_factory=lambda: ["M0"])
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.kernels or not self.scree or not self.submodels:
            raise ConfigurationError("every grid axis needs at least one value")
        if self.folds < 2:
            raise ConfigurationError("fold count must be >= 2")
        for m in self.submodels:
            if m not in SUBMODELS:
                raise ConfigurationError(f"unknown submodel {m!r}")

    @classmethod
    def build(cls, kernel: KernelSpec, param=None, values=None, taus=None, dims=None, **kw):
        """Grid over one kernel parameter and a list of taus or fixed dims.

        For ``param="sigma"`` the values are exponents g with sigma = 2^g.
        """
        if (taus is None) == (dims is None):
            raise ConfigurationError("give either a tau list or a dimension list")
        if param is None:
            kernels = [kernel]
        elif param == "sigma":
            kernels = [kernel.with_params(sigma=float(2.0 ** g)) for g in values]
        else:
            kernels = [kernel.with_params(**{param: v}) for v in values]
        scree = [ScreeParams(tau=float(t)) for t in taus] if taus is not None else [
            ScreeParams(dim=int(d)) for d in dims
        ]
        return cls(kernels, scree, **kw)

    def configurations(self):
        """All (kernel, submodel, scree) triples in grid order."""
        return [(kern, m, s) for kern in self.kernels for m in self.submodels for s in self.scree]


def describe(config):
    kern, m, s = config
    out = {"kernel": kern.to_dict(), "model": m}
    if s.tau is not None:
        out["tau"] = s.tau
    else:
        out["dim"] = s.dim
    return out


@dataclass
class CvReport:
    configs: list  # description dicts
    fold_accuracy: np.ndarray  # n_configs x folds, nan where the fit failed
    errors: list
    selected: int
    replications: list = field(default_factory=list)
    selections: list = field(default_factory=list)  # chosen config per replication

    @property
    def mean(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(self.fold_accuracy, axis=1) if self.fold_accuracy.size else np.array([])

    @property
    def std(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanstd(self.fold_accuracy, axis=1)

    @property
    def best(self):
        return self.configs[self.selected]

    def summary(self):
        rep = np.asarray(self.replications, dtype=float)
        return {
            "selected": self.best,
            "selected_cv_accuracy": float(self.mean[self.selected]),
            "replications": rep.tolist(),
            "selections": self.selections,
            "mean_accuracy": float(rep.mean()) if rep.size else None,
            "std_accuracy": float(rep.std()) if rep.size else None,
        }

    def to_json(self):
        rows = []
        for i, c in enumerate(self.configs):
            acc = self.fold_accuracy[i]
            rows.append(
                dict(
                    c,
                    mean=None if np.isnan(self.mean[i]) else float(self.mean[i]),
                    std=None if np.isnan(self.std[i]) else float(self.std[i]),
                    folds=[None if np.isnan(a) else float(a) for a in acc],
                    error=self.errors[i],
                )
            )
        return json.dumps(dict(self.summary(), configurations=rows), indent=2)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "kernel", "model", "tau", "dim", "mean", "std", "selected", "error"])
        for i, c in enumerate(self.configs):
            w.writerow(
                [
                    i,
                    json.dumps(c["kernel"], sort_keys=True),
                    c["model"],
                    "" if "tau" not in c else "%.17g" % c["tau"],
                    c.get("dim", ""),
                    "" if np.isnan(self.mean[i]) else "%.17g" % self.mean[i],
                    "" if np.isnan(self.std[i]) else "%.17g" % self.std[i],
                    int(i == self.selected),
                    self.errors[i] or "",
                ]
            )
        return buf.getvalue()


def _codes(labels):
    return np.unique(np.asarray(labels), return_inverse=True)[1]


def stratified_folds(labels, folds, seed):
    """List of (train, test) index arrays; small classes trigger sklearn's warning."""
    labels = _codes(labels)
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(tr, te) for tr, te in skf.split(np.zeros(len(labels)), labels)]


def _threads():
    try:
        return max(1, int(os.environ.get("PGP_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_kernel(G: GramMatrix, labels, splits, submodels, screes):
    """Fold accuracies for every (submodel, scree) under one Gram matrix."""
    K = G.entries
    dK = np.diag(K)
    acc = np.full((len(submodels) * len(screes), len(splits)), np.nan)
    errs = [None] * acc.shape[0]
    for f, (tr, te) in enumerate(splits):
        sub = G.subset(tr)
        rows = K[np.ix_(te, tr)]
        for a, m in enumerate(submodels):
            for b, s in enumerate(screes):
                j = a * len(screes) + b
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        model = fit(sub, labels[tr], m, s)
                    pred = model.predict_rows(rows, dK[te])
                    acc[j, f] = float(np.mean(pred == labels[te]))
                except PGPError as exc:
                    errs[j] = errs[j] or f"{exc.code}: {exc}"
    return acc, errs


def kfold_cv(gram_factory: Callable[[KernelSpec], GramMatrix], labels, grid: SearchGrid) -> CvReport:
    """Stratified k-fold CV over the grid.

    ``gram_factory(spec)`` returns the Gram matrix of all samples under
    ``spec``. A configuration whose fit fails on any fold is reported with
    its error and excluded from selection. Ties go to the first
    configuration in grid order.
    """
    labels = np.asarray(labels)
    splits = stratified_folds(labels, grid.folds, grid.seed)

    def work(spec):
        return _evaluate_kernel(gram_factory(spec), labels, splits, grid.submodels, grid.scree)

    workers = min(_threads(), len(grid.kernels))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, grid.kernels))
    else:
        parts = [work(spec) for spec in grid.kernels]
    acc = np.vstack([p[0] for p in parts])
    errors = [e for p in parts for e in p[1]]
    for i, e in enumerate(errors):
        if e is not None:
            acc[i, :] = np.nan
    configs = [describe(c) for c in grid.configurations()]
    report = CvReport(configs, acc, errors, selected=-1)
    mean = report.mean
    if np.all(np.isnan(mean)):
        raise ConfigurationError(f"every configuration failed; first error: {next(e for e in errors if e)}")
    report.selected = int(np.nanargmax(mean))  # first maximiser
    return report


def holdout_split(labels, hr, seed):
    """Stratified split with a fraction ``hr`` of the samples for training."""
    if not 0.0 < hr < 1.0:
        raise ConfigurationError(f"hold-out ratio must be in (0, 1), got {hr}")
    labels = _codes(labels)
    sss = StratifiedShuffleSplit(n_splits=1, train_size=hr, random_state=seed)
    tr, te = next(sss.split(np.zeros(len(labels)), labels))
    return np.sort(tr), np.sort(te)


def holdout_replications(
    data, labels, hr, replications, grid: SearchGrid, scale=True, progress=None
) -> CvReport:
    """Repeated hold-out: CV-select on the training part, score the test part.

    ``data`` are samples for an analytic kernel. Scaling to [-1, 1], when
    asked, is fitted on each training part. The returned report holds the
    CV table of the first replication and every replication's test accuracy.
    """
    if replications < 1:
        raise ConfigurationError("replications must be >= 1")
    X = np.asarray(data)
    labels = np.asarray(labels)
    if X.shape[0] != labels.shape[0]:
        raise InputError("data and labels differ in length")
    for spec in grid.kernels:
        if not spec.analytic:
            raise ConfigurationError(f"hold-out needs kernels evaluable on samples, got {spec.family}")
    first = None
    accs, chosen = [], []
    for r in range(replications):
        tr, te = holdout_split(labels, hr, grid.seed + r)
        Xtr, Xte = X[tr], X[te]
        if scale:
            scaler = RangeScaler.fit(Xtr)
            Xtr, Xte = scaler.transform(Xtr), scaler.transform(Xte)
        sub = SearchGrid(grid.kernels, grid.scree, grid.submodels, grid.folds, grid.seed + r)
        rep = kfold_cv(lambda spec: gram(spec, Xtr), labels[tr], sub)
        spec, m, s = sub.configurations()[rep.selected]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = fit(gram(spec, Xtr), labels[tr], m, s)
        pred = model.predict_rows(cross(spec, Xte, Xtr), diag(spec, Xte))
        accs.append(float(np.mean(pred == labels[te])))
        chosen.append(rep.best)
        if progress is not None:
            progress(r, accs[-1], rep.best)
        if first is None:
            first = rep
    first.replications = accs
    first.selections = chosen
    return first
