import json

import numpy as np
import pytest

from pgpkit.errors import ConfigurationError
from pgpkit.kernels import KernelSpec, cross, diag, gram
from pgpkit.modelsel import (
    SearchGrid,
    holdout_replications,
    holdout_split,
    kfold_cv,
    stratified_folds,
)
from pgpkit.pgpda import ScreeParams, fit

from conftest import blobs


def test_folds_partition_and_stratify(rng):
    y = np.repeat(["a", "b", "c"], [10, 15, 20])
    splits = stratified_folds(y, 5, seed=3)
    seen = np.concatenate([te for _, te in splits])
    np.testing.assert_array_equal(np.sort(seen), np.arange(45))
    for tr, te in splits:
        assert np.intersect1d(tr, te).size == 0
        assert sorted(np.unique(y[te], return_counts=True)[1]) == [2, 3, 4]
    again = stratified_folds(y, 5, seed=3)
    for (a, b), (c, d) in zip(splits, again):
        np.testing.assert_array_equal(a, c)
        np.testing.assert_array_equal(b, d)


def test_single_configuration_matches_manual_cv(rng):
    X, y = blobs(rng, n_per=15, p=3, k=3, gap=1.5)
    spec = KernelSpec.gaussian(1.0)
    grid = SearchGrid([spec], [ScreeParams(tau=0.1)], folds=4, seed=7)
    rep = kfold_cv(lambda s: gram(s, X), y, grid)
    manual = []
    for tr, te in stratified_folds(y, 4, 7):
        m = fit(gram(spec, X[tr]), y[tr], "M0", ScreeParams(tau=0.1))
        manual.append(np.mean(m.predict_rows(cross(spec, X[te], X[tr]), diag(spec, X[te])) == y[te]))
    np.testing.assert_allclose(rep.fold_accuracy[0], manual, atol=1e-12)
    assert rep.selected == 0


def test_separable_data_reach_full_accuracy(rng):
    X, y = blobs(rng, n_per=20, p=2, gap=8.0)
    grid = SearchGrid.build(KernelSpec.gaussian(1.0), "sigma", [-1, 0, 1], taus=[0.1, 0.5])
    rep = kfold_cv(lambda s: gram(s, X), y, grid)
    assert rep.mean[rep.selected] == 1.0
    assert len(rep.configs) == 6
    assert rep.configs[2]["kernel"]["sigma"] == 1.0


def test_ties_go_to_first_configuration(rng):
    X, y = blobs(rng, n_per=12)
    s = ScreeParams(tau=0.2)
    grid = SearchGrid([KernelSpec.linear(), KernelSpec.linear()], [s, s], submodels=["M0", "M0"])
    rep = kfold_cv(lambda k: gram(k, X), y, grid)
    assert np.allclose(rep.mean, rep.mean[0])
    assert rep.selected == 0


def test_failed_configuration_is_excluded(rng):
    X, y = blobs(rng, n_per=10, p=2)
    flat = np.zeros_like(X)

    def factory(spec):
        # the gaussian kernel sees constant data, leaving no noise to estimate
        return gram(spec, flat if spec.family == "gaussian" else X)

    grid = SearchGrid([KernelSpec.gaussian(1.0), KernelSpec.linear()], [ScreeParams(tau=0.2)])
    rep = kfold_cv(factory, y, grid)
    assert rep.errors[0].startswith("degenerate-noise")
    assert np.all(np.isnan(rep.fold_accuracy[0]))
    assert rep.selected == 1
    assert json.loads(rep.to_json())["configurations"][0]["mean"] is None


def test_every_configuration_failing(rng):
    X = np.ones((12, 2))
    y = np.repeat([0, 1], 6)
    grid = SearchGrid([KernelSpec.linear()], [ScreeParams(tau=0.2)], folds=3)
    with pytest.raises(ConfigurationError):
        kfold_cv(lambda k: gram(k, X), y, grid)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        SearchGrid([], [ScreeParams(tau=0.2)])
    with pytest.raises(ConfigurationError):
        SearchGrid([KernelSpec.linear()], [ScreeParams(tau=0.2)], folds=1)
    with pytest.raises(ConfigurationError):
        SearchGrid([KernelSpec.linear()], [ScreeParams(tau=0.2)], submodels=["M42"])
    with pytest.raises(ConfigurationError):
        SearchGrid.build(KernelSpec.linear(), taus=[0.1], dims=[1])


@pytest.mark.parametrize("hr", [0.0, 1.0, 1.5, -0.2])
def test_holdout_ratio_bounds(hr):
    with pytest.raises(ConfigurationError):
        holdout_split(np.repeat([0, 1], 5), hr, 0)


def test_holdout_split_is_stratified():
    y = np.repeat([0, 1, 2], 20)
    tr, te = holdout_split(y, 0.5, 4)
    assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 60
    assert list(np.bincount(y[tr])) == [10, 10, 10]


def test_one_test_point_per_class_accuracy_levels(rng):
    X, y = blobs(rng, n_per=4, p=2, gap=1.0)
    grid = SearchGrid([KernelSpec.linear()], [ScreeParams(dim=1)], folds=2)
    rep = holdout_replications(X, y, 0.75, 6, grid)
    assert set(rep.replications) <= {0.0, 0.5, 1.0}


def test_holdout_is_deterministic_and_reported(rng):
    X, y = blobs(rng, n_per=20, p=3, k=3, gap=2.0)
    grid = SearchGrid.build(KernelSpec.gaussian(1.0), "sigma", [-1, 1], taus=[0.1, 0.3], folds=3, seed=2)
    calls = []
    a = holdout_replications(X, y, 0.5, 3, grid, progress=lambda *args: calls.append(args))
    b = holdout_replications(X, y, 0.5, 3, grid)
    assert a.replications == b.replications and len(a.replications) == 3
    assert len(calls) == 3 and len(a.selections) == 3
    doc = json.loads(a.to_json())
    assert doc["mean_accuracy"] == pytest.approx(np.mean(a.replications))
    assert len(doc["configurations"]) == 4
    lines = a.to_csv().strip().split("\n")
    assert lines[0].split(",")[:3] == ["index", "kernel", "model"]
    assert len(lines) == 5
    assert sum(int(l.rsplit(",", 2)[1]) for l in lines[1:]) == 1


def test_holdout_requires_analytic_kernel(rng):
    X, y = blobs(rng, n_per=5)
    grid = SearchGrid([KernelSpec.precomputed()], [ScreeParams(tau=0.2)])
    with pytest.raises(ConfigurationError):
        holdout_replications(X, y, 0.5, 1, grid)
