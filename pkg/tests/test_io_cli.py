import csv
import json
import os

import numpy as np
import pytest

from pgpkit import cli
from pgpkit.errors import LoadError
from pgpkit.io import load_dataset, load_edge_list, load_kernel, load_model, load_table, save_model
from pgpkit.kernels import KernelSpec, cross, diag, gram
from pgpkit.pgpda import ScreeParams, fit

from conftest import blobs, fetch_or_skip


def _write(path, text):
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _toy_csv(tmp_path, rng, n_per=15):
    X, y = blobs(rng, n_per=n_per, p=3, gap=5.0)
    lines = ["id,a,b,c,label"] + ["s%d,%r,%r,%r,%s" % (i, float(x[0]), float(x[1]), float(x[2]), "ab"[t]) for i, (x, t) in enumerate(zip(X, y))]
    return _write(tmp_path / "toy.csv", "\n".join(lines) + "\n"), X, np.array(["ab"[t] for t in y])


# -- loaders ------------------------------------------------------------------


def test_two_row_numeric_csv(tmp_path):
    p = _write(tmp_path / "t.csv", "x,y,label\n1.5,2,a\n3,4,b\n")
    ds = load_table(p, "numeric-csv", label_col="label")
    assert ds.n == 2 and ds.X.shape == (2, 2)
    assert sorted(set(ds.labels)) == ["a", "b"]
    np.testing.assert_allclose(ds.X, [[1.5, 2], [3, 4]])


def test_edge_list_path_graph(tmp_path):
    ds = load_edge_list(_write(tmp_path / "g.txt", "1 2\n2 3\n"))
    np.testing.assert_array_equal(ds.X, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert ds.ids == ["1", "2", "3"]


def test_categorical_codes_and_unknown_category(tmp_path):
    p = _write(tmp_path / "c.csv", "id,v1,v2,label\n1,y,n,a\n2,n,?,b\n3,y,y,a\n")
    ds = load_table(p, "categorical-csv", label_col="label", id_col="id")
    assert ds.X.shape == (3, 2)
    assert ds.categories[0] == ["n", "y"]
    assert "?" in ds.categories[1]
    q = _write(tmp_path / "d.csv", "id,v1,v2,label\n4,maybe,n,a\n")
    with pytest.raises(LoadError, match=r"d\.csv:2:"):
        load_table(q, "categorical-csv", label_col="label", id_col="id", categories=ds.categories)


def test_ragged_and_non_numeric_rows(tmp_path):
    with pytest.raises(LoadError, match=r"r\.csv:3:"):
        load_table(_write(tmp_path / "r.csv", "a,b\n1,2\n3\n"), "numeric-csv")
    with pytest.raises(LoadError, match=r"s\.csv:2:"):
        load_table(_write(tmp_path / "s.csv", "a,b\n1,x\n"), "numeric-csv")


def test_kernel_csv_symmetry(tmp_path):
    ok = load_kernel(_write(tmp_path / "k.csv", ",a,b\na,2,1\nb,1,2\n"))
    np.testing.assert_allclose(ok.X, [[2, 1], [1, 2]])
    with pytest.raises(LoadError):
        load_kernel(_write(tmp_path / "bad.csv", ",a,b\na,2,1\nb,1.5,2\n"))
    plain = load_kernel(_write(tmp_path / "p.csv", "a,b\n2,1\n1,2\n"))
    assert plain.ids == ["a", "b"]


def test_house_votes_shape():
    info = fetch_or_skip("house-votes")
    ds = load_dataset(info["data"], info["format"], label_col=info["label_col"], id_col=info["id_col"])
    assert ds.X.shape == (435, 16)
    labels, counts = np.unique(ds.labels, return_counts=True)
    assert dict(zip(labels, counts)) == {"republican": 168, "democrat": 267}
    assert all(len(c) <= 3 for c in ds.categories.values())


# -- persistence ------------------------------------------------------------------


@pytest.mark.parametrize("model_name", ["M0", "M4", "M7"])
def test_model_json_round_trip(model_name, tmp_path, rng):
    X, y = blobs(rng, n_per=20, p=3, k=3)
    spec = KernelSpec.gaussian(1.5)
    m = fit(gram(spec, X), y, model_name, ScreeParams(tau=0.2))
    m.train_data = X
    path = str(tmp_path / "m.json")
    save_model(path, m, {"note": 1})
    m2, meta = load_model(path)
    assert meta == {"note": 1}
    Xt = rng.normal(size=(9, 3)) * 3
    a = m.score_rows(cross(spec, Xt, X), diag(spec, Xt))
    np.testing.assert_allclose(m2.score(Xt), a, rtol=1e-12, atol=1e-12)
    assert m2.labels == m.labels


def test_bad_model_files(tmp_path):
    with pytest.raises(LoadError):
        load_model(_write(tmp_path / "x.json", "{not json"))
    with pytest.raises(LoadError):
        load_model(_write(tmp_path / "y.json", json.dumps({"format": "other"})))


# -- commands -----------------------------------------------------------------


def test_fit_predict_byte_identical(tmp_path, rng, capsys):
    data, X, y = _toy_csv(tmp_path, rng)
    out = tmp_path / "o"
    out.mkdir()
    base = ["--data", data, "--format", "numeric-csv", "--label-col", "label", "--id-col", "id", "--out", str(out)]
    assert cli.main(["fit", *base, "--kernel", "gaussian", "--sigma", "2", "--scale"]) == 0
    model = str(out / "model.json")
    assert cli.main(["predict", *base, "--model-file", model]) == 0
    first = (out / "predictions.csv").read_bytes()
    assert cli.main(["predict", *base, "--model-file", model]) == 0
    assert (out / "predictions.csv").read_bytes() == first
    rows = _read_csv(out / "predictions.csv")
    assert rows[0] == ["id", "label", "posterior_1", "posterior_2"]
    assert len(rows) - 1 == len(y)
    assert [r[1] for r in rows[1:]] == list(y)
    post = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    np.testing.assert_allclose(post.sum(1), 1.0, atol=1e-9)
    assert "accuracy 1.0000" in capsys.readouterr().out


def test_project_moments(tmp_path, rng):
    data, X, y = _toy_csv(tmp_path, rng, n_per=20)
    out = tmp_path / "o"
    out.mkdir()
    args = ["--data", data, "--format", "numeric-csv", "--label-col", "label", "--id-col", "id", "--out", str(out)]
    assert cli.main(["fit", *args, "--kernel", "linear", "--tau", "0.05"]) == 0
    assert cli.main(["project", *args, "--model-file", str(out / "model.json")]) == 0
    model, _ = load_model(str(out / "model.json"))
    rows = _read_csv(out / "projection.csv")
    for c in model.classes:
        own = [r for r in rows[1:] if r[1] == c.label and r[2] == c.label]
        P = np.array([[float(v) for v in r[3 : 3 + c.d]] for r in own])
        np.testing.assert_allclose(P.mean(0), 0.0, atol=1e-9)
        np.testing.assert_allclose(P.var(0), c.variances[: c.d], rtol=1e-8)
    scree = _read_csv(out / "scree.csv")
    assert scree[0] == ["class", "rank", "value"]


def test_cluster_outputs(tmp_path, rng):
    data, X, y = _toy_csv(tmp_path, rng)
    out = tmp_path / "o"
    out.mkdir()
    args = ["--data", data, "--format", "numeric-csv", "--label-col", "label", "--id-col", "id", "--out", str(out)]
    assert cli.main(["cluster", *args, "--kernel", "linear", "--k", "2", "--restarts", "3"]) == 0
    part = _read_csv(out / "partition.csv")
    assert part[0] == ["id", "cluster", "t_1", "t_2"] and len(part) == 31
    trace = _read_csv(out / "trace.csv")
    assert trace[0][:3] == ["iteration", "J", "delta"]
    first = (out / "partition.csv").read_bytes()
    assert cli.main(["cluster", *args, "--kernel", "linear", "--k", "2", "--restarts", "3"]) == 0
    assert (out / "partition.csv").read_bytes() == first


def test_cv_and_kernel_commands(tmp_path, rng):
    data, X, y = _toy_csv(tmp_path, rng)
    out = tmp_path / "o"
    out.mkdir()
    args = ["--data", data, "--format", "numeric-csv", "--label-col", "label", "--id-col", "id", "--out", str(out)]
    grid = ["--sigma-grid=-1:1:3", "--tau-grid", "0.1,0.3", "--folds", "3"]
    assert cli.main(["cv", *args, "--kernel", "gaussian", *grid]) == 0
    doc = json.loads((out / "cv.json").read_text())
    assert len(doc["configurations"]) == 6
    assert cli.main(["cv", *args, "--kernel", "gaussian", *grid, "--hr", "0.5", "--reps", "2"]) == 0
    assert len(json.loads((out / "cv.json").read_text())["replications"]) == 2
    assert cli.main(["kernel", *args, "--kernel", "linear"]) == 0
    K = np.array([[float(v) for v in r[1:]] for r in _read_csv(out / "gram.csv")[1:]])
    np.testing.assert_allclose(K, X @ X.T, rtol=1e-12)
    # the dumped Gram matrix loads back as a kernel-csv
    assert load_kernel(str(out / "gram.csv")).n == len(y)


def test_graph_workflow(tmp_path, rng):
    # two cliques joined by one edge, labelled on a few nodes
    edges = [(i, j) for c in (0, 10) for i in range(c, c + 10) for j in range(i + 1, c + 10)] + [(0, 10)]
    g = _write(tmp_path / "g.txt", "\n".join(f"{i} {j}" for i, j in edges) + "\n")
    lab = _write(tmp_path / "l.csv", "id,label\n" + "\n".join(f"{i},{'A' if i < 10 else 'B'}" for i in [1, 2, 3, 4, 5, 11, 12, 13, 14, 15]) + "\n")
    out = tmp_path / "o"
    out.mkdir()
    args = ["--data", g, "--format", "edge-list", "--labels", lab, "--kernel", "laplacian", "--nu", "1", "--dim", "1", "--out", str(out)]
    assert cli.main(["predict", *args]) == 0
    pred = {int(r[0]): r[1] for r in _read_csv(out / "predictions.csv")[1:]}
    assert all(pred[i] == ("A" if i < 10 else "B") for i in range(20))


def test_config_file_and_overrides(tmp_path, rng):
    data, X, y = _toy_csv(tmp_path, rng)
    out = tmp_path / "o"
    out.mkdir()
    conf = _write(
        tmp_path / "run.yaml",
        f"data: {data}\nformat: numeric-csv\nlabel_col: label\nid_col: id\nkernel: gaussian\nsigma: 1.0\nout: {out}\n",
    )
    assert cli.main(["fit", "--config", conf, "--sigma", "4"]) == 0
    model, _ = load_model(str(out / "model.json"))
    assert model.kernel.sigma == 4.0
    bad = _write(tmp_path / "bad.yaml", "kernal: gaussian\n")
    assert cli.main(["fit", "--config", bad]) == 2


def test_errors_are_one_line(tmp_path, capsys):
    assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--format", "numeric-csv", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error[") and "\n" not in err
    p = _write(tmp_path / "r.csv", "a,label\n1,x\n2\n")
    assert cli.main(["fit", "--data", p, "--format", "numeric-csv", "--label-col", "label", "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error[load]")
    with pytest.raises(SystemExit):
        cli.main(["bogus"])
