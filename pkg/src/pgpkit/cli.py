"""Command-line interface: pgpkit {fit,predict,cluster,cv,project,kernel}.

Settings come from an optional JSON or YAML config file (``--config``);
command-line flags override file values. Errors end the process with
status 2 and a single line ``error[<code>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .errors import ConfigurationError, InputError, PGPError
from .functional import NaturalCubicSplineBasis, principal_band, project_curves
from .io import (
    load_dataset,
    load_model,
    save_model,
    write_csv,
    write_text_atomic,
)
from .kernels import KernelSpec, RangeScaler, combine, cross, diag, functional_gram_for, gram, precomputed_gram
from .modelsel import SearchGrid, holdout_replications, kfold_cv
from .pgpda import ScreeParams, fit
from .pgpem import EmConfig, cluster_accuracy, run

KERNELS = ("linear", "gaussian", "poly", "hamming", "laplacian", "functional", "precomputed")

DEFAULTS = dict(
    format="numeric-csv",
    kernel="gaussian",
    sigma=1.0,
    degree=2,
    gamma_h=0.1,
    nu=1.0,
    alpha=0.5,
    basis_size=20,
    model="M0",
    tau=0.2,
    k=2,
    restarts=10,
    max_iter=200,
    tol=1e-4,
    init="kkmeans",
    folds=5,
    reps=1,
    seed=0,
    out=".",
    scale=False,
    sigma_grid="-4:4:9",
    tau_grid="1e-7,1e-5,1e-3,0.01,0.05,0.1,0.2,0.5,1",
)


# ---------------------------------------------------------------------------
# configuration


def _read_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    if path.endswith((".yml", ".yaml")):
        import yaml

        try:
            cfg = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: invalid YAML: {exc}") from None
    else:
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: config must be a mapping")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def resolve(args) -> dict:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        file_cfg = _read_config(args.config)
        unknown = sorted(set(file_cfg) - set(vars(args)))
        if unknown:
            raise ConfigurationError(f"unknown config key {unknown[0]!r}")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "func"):
            cfg[k] = v
    return cfg


def _single_spec(name, cfg, columns=None):
    if name not in KERNELS:
        raise ConfigurationError(f"unknown kernel {name!r}; expected one of {', '.join(KERNELS)}")
    if name == "linear":
        return KernelSpec.linear(columns=columns)
    if name == "gaussian":
        return KernelSpec.gaussian(cfg["sigma"], columns=columns)
    if name == "poly":
        return KernelSpec.polynomial(cfg["degree"], columns=columns)
    if name == "hamming":
        return KernelSpec.hamming(cfg["gamma_h"], columns=columns)
    if name == "laplacian":
        return KernelSpec.laplacian(cfg["nu"])
    if name == "functional":
        return KernelSpec.functional(cfg["basis_size"], cfg.get("quad_density"))
    return KernelSpec.precomputed()


def kernel_spec(cfg, ds) -> KernelSpec:
    first = cfg["kernel"]
    second = cfg.get("second_kernel")
    fmt = ds.format
    if first == "laplacian" and fmt != "edge-list":
        raise ConfigurationError("the laplacian kernel reads an edge-list dataset")
    if first == "precomputed" and fmt != "kernel-csv":
        raise ConfigurationError("the precomputed kernel reads a kernel-csv dataset")
    if first == "functional" and fmt != "curves-csv":
        raise ConfigurationError("the functional kernel reads a curves-csv dataset")
    if fmt in ("edge-list", "kernel-csv", "curves-csv") and first not in ("laplacian", "precomputed", "functional"):
        raise ConfigurationError(f"{fmt} data need the {_native(fmt)} kernel")
    if second is None:
        if fmt == "mixed-csv":
            raise ConfigurationError("mixed data need --second-kernel (first kernel reads num columns, second cat)")
        return _single_spec(first, cfg)
    if fmt == "mixed-csv":
        left, right = ds.numeric_columns(), ds.categorical_columns()
    else:
        left = right = None
    return KernelSpec.combined(cfg["alpha"], _single_spec(first, cfg, left), _single_spec(second, cfg, right))


def _native(fmt):
    return {"edge-list": "laplacian", "kernel-csv": "precomputed", "curves-csv": "functional"}[fmt]


def scree_params(cfg):
    if cfg.get("dim") is not None:
        return ScreeParams(dim=int(cfg["dim"]))
    return ScreeParams(tau=float(cfg["tau"]))


def _load(cfg, categories=None):
    if not cfg.get("data"):
        raise ConfigurationError("--data is required")
    return load_dataset(
        cfg["data"],
        cfg["format"],
        label_col=cfg.get("label_col"),
        id_col=cfg.get("id_col"),
        labels_path=cfg.get("labels"),
        categories=categories,
    )


def features(ds, spec):
    """Sample representation the kernel is evaluated on (None if transductive)."""
    if ds.format == "curves-csv":
        return project_curves(ds.grid, ds.X.T, functional_gram_for(spec))
    if ds.transductive:
        return None
    return ds.X


def full_gram(ds, spec):
    if ds.format == "edge-list":
        return gram(spec, ds.X)
    if ds.format == "kernel-csv":
        return precomputed_gram(ds.X)
    raise ConfigurationError(f"{ds.format} data have no transductive kernel")  # pragma: no cover


def _scaler(ds, X, enabled):
    """[-1, 1] range scaling of numeric columns; categorical codes pass through."""
    if not enabled or X is None or ds.format == "curves-csv":
        return None
    sc = RangeScaler.fit(X)
    for j in ds.categorical_columns():
        sc.low[j], sc.high[j] = -1.0, 1.0
    return sc


def _labelled(ds):
    if ds.labels is None:
        raise InputError("labels are required (--label-col, or --labels for an id,label file)")
    mask = np.array([v is not None for v in ds.labels])
    if not mask.any():
        raise InputError("no labelled samples")
    return np.flatnonzero(mask)


def _out(cfg, name):
    return os.path.join(cfg["out"], name)


def _meta(cfg, ds, train_idx):
    return dict(
        format=ds.format,
        train_ids=[ds.ids[i] for i in train_idx],
        categories={str(k): v for k, v in ds.categories.items()},
        column_types=ds.column_types,
        columns=ds.columns,
    )


def train(cfg, ds, idx):
    """Supervised fit on samples ``idx``; returns the model."""
    spec = kernel_spec(cfg, ds)
    labels = np.asarray(ds.labels, dtype=object)[idx]
    X = features(ds, spec)
    if X is None:
        G = full_gram(ds, spec).subset(idx)
        model = fit(G, labels, cfg["model"], scree_params(cfg))
        return model
    Xtr = X[idx]
    sc = _scaler(ds, Xtr, cfg["scale"])
    if sc is not None:
        Xtr = sc.transform(Xtr)
    model = fit(gram(spec, Xtr), labels, cfg["model"], scree_params(cfg))
    model.train_data = Xtr
    model.scaler = sc
    return model


def kernel_rows(model, meta, ds):
    """Kernel rows of every sample of ``ds`` against the model's training set."""
    spec = model.kernel
    if ds.transductive:
        pos = {v: i for i, v in enumerate(ds.ids)}
        missing = [t for t in meta["train_ids"] if t not in pos]
        if missing:
            raise InputError(f"training sample {missing[0]!r} is not in the dataset")
        tr = np.array([pos[t] for t in meta["train_ids"]])
        K = full_gram(ds, spec).entries
        return K[:, tr], np.diag(K).copy()
    X = features(ds, spec)
    return model.kernel_rows(X)


def _categories(meta):
    return {int(k): v for k, v in meta.get("categories", {}).items()} or None


# ---------------------------------------------------------------------------
# commands


def cmd_fit(cfg):
    ds = _load(cfg)
    idx = _labelled(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train(cfg, ds, idx)
    path = cfg.get("model_file") or _out(cfg, "model.json")
    save_model(path, model, _meta(cfg, ds, idx))
    dims = " ".join(f"{c.label}:{c.d}" for c in model.classes)
    print(f"fitted {model.submodel} on {len(idx)} samples, k={model.k}, d=[{dims}], noise={model.noise:.6g} -> {path}")
    return 0


def _model_and_data(cfg):
    path = cfg.get("model_file")
    if path:
        model, meta = load_model(path)
        ds = _load(dict(cfg, format=meta.get("format", cfg["format"])), _categories(meta))
        return model, meta, ds
    ds = _load(cfg)
    idx = _labelled(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train(cfg, ds, idx)
    return model, _meta(cfg, ds, idx), ds


def cmd_predict(cfg):
    model, meta, ds = _model_and_data(cfg)
    rows, selfv = kernel_rows(model, meta, ds)
    post = model.posterior_rows(rows, selfv)
    pred = np.asarray(model.labels, dtype=object)[np.argmin(model.score_rows(rows, selfv), axis=1)]
    header = ["id", "label"] + [f"posterior_{i + 1}" for i in range(model.k)]
    write_csv(_out(cfg, "predictions.csv"), header, [[i, p, *map(float, q)] for i, p, q in zip(ds.ids, pred, post)])
    msg = f"predicted {ds.n} samples -> {_out(cfg, 'predictions.csv')}"
    if ds.labels is not None:
        mask = np.array([v is not None for v in ds.labels])
        if mask.any():
            acc = np.mean(pred[mask] == np.asarray(ds.labels, dtype=object)[mask])
            msg += f"; accuracy {acc:.4f} on {int(mask.sum())} labelled samples"
    print(msg)
    return 0


def cmd_cluster(cfg):
    ds = _load(cfg)
    spec = kernel_spec(cfg, ds)
    X = features(ds, spec)
    if X is None:
        G = full_gram(ds, spec)
    else:
        sc = _scaler(ds, X, cfg["scale"])
        if sc is not None:
            X = sc.transform(X)
        G = gram(spec, X)
    conf = EmConfig(
        k=int(cfg["k"]),
        submodel=cfg["model"],
        scree=scree_params(cfg),
        max_iter=int(cfg["max_iter"]),
        tol=float(cfg["tol"]),
        restarts=int(cfg["restarts"]),
        seed=int(cfg["seed"]),
        init=cfg["init"],
        freeze_dims_after=cfg.get("freeze_dims_after"),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run(G, conf)
    k = conf.k
    write_csv(
        _out(cfg, "partition.csv"),
        ["id", "cluster"] + [f"t_{i + 1}" for i in range(k)],
        [[i, int(z) + 1, *map(float, t)] for i, z, t in zip(ds.ids, res.partition, res.responsibilities)],
    )
    write_csv(
        _out(cfg, "trace.csv"),
        ["iteration", "J", "delta"] + [f"d_{i + 1}" for i in range(k)],
        [[q, J, dt, *d] for q, J, dt, d in res.trace.rows()],
    )
    msg = (
        f"clustered {ds.n} samples into {k} groups (restart {res.restart}, "
        f"{len(res.trace.objective)} iterations, J={res.objective:.6g})"
    )
    if ds.labels is not None and all(v is not None for v in ds.labels):
        msg += f"; accuracy {cluster_accuracy(res.partition, np.asarray(ds.labels, dtype=str)):.4f}"
    print(msg)
    return 0


def _grid_values(text):
    """"a:b:n" for n evenly spaced values, or a comma separated list."""
    text = str(text)
    if ":" in text:
        a, b, n = text.split(":")
        return list(np.linspace(float(a), float(b), int(n)))
    return [float(v) for v in text.split(",") if v.strip()]


def search_grid(cfg, spec):
    models = cfg["model"] if isinstance(cfg["model"], list) else str(cfg["model"]).split(",")
    kw = dict(submodels=models, folds=int(cfg["folds"]), seed=int(cfg["seed"]))
    dims = cfg.get("dim_grid")
    screes = dict(dims=[int(v) for v in _grid_values(dims)]) if dims else dict(taus=_grid_values(cfg["tau_grid"]))
    if spec.family == "gaussian":
        return SearchGrid.build(spec, "sigma", _grid_values(cfg["sigma_grid"]), **screes, **kw)
    return SearchGrid.build(spec, **screes, **kw)


def cmd_cv(cfg):
    ds = _load(cfg)
    idx = _labelled(ds)
    spec = kernel_spec(cfg, ds)
    grid = search_grid(cfg, spec)
    labels = np.asarray(ds.labels, dtype=object)[idx]
    X = features(ds, spec)
    if cfg.get("hr") is not None:
        if X is None:
            raise ConfigurationError("hold-out replications need a kernel evaluable on samples")
        if ds.format == "mixed-csv" and cfg["scale"]:
            raise ConfigurationError("hold-out scaling of mixed data is not supported; scale the file")
        report = holdout_replications(X[idx], labels, float(cfg["hr"]), int(cfg["reps"]), grid, scale=cfg["scale"])
    else:
        if X is None:
            G = full_gram(ds, spec).subset(idx)
            factory = lambda s: G if s == spec else full_gram(ds, s).subset(idx)  # noqa: E731
        else:
            Xi = X[idx]
            sc = _scaler(ds, Xi, cfg["scale"])
            if sc is not None:
                Xi = sc.transform(Xi)
            factory = lambda s: gram(s, Xi)  # noqa: E731
        report = kfold_cv(factory, labels, grid)
    write_text_atomic(_out(cfg, "cv.json"), report.to_json() + "\n")
    write_text_atomic(_out(cfg, "cv.csv"), report.to_csv())
    s = report.summary()
    msg = f"selected {json.dumps(s['selected'], sort_keys=True)} (cv accuracy {s['selected_cv_accuracy']:.4f})"
    if s["mean_accuracy"] is not None:
        msg += f"; hold-out accuracy {s['mean_accuracy']:.4f} +/- {s['std_accuracy']:.4f} over {len(s['replications'])} replications"
    print(msg)
    return 0


def cmd_project(cfg):
    model, meta, ds = _model_and_data(cfg)
    rows, selfv = kernel_rows(model, meta, ds)
    parts = model.projections(rows, selfv)
    d_max = model.d_max
    out = []
    labels = ds.labels if ds.labels is not None else [None] * ds.n
    for c, (P, _) in zip(model.classes, parts):
        for sid, lab, p in zip(ds.ids, labels, P):
            out.append([sid, "" if lab is None else lab, c.label, *map(float, p), *[""] * (d_max - c.d)])
    header = ["id", "label", "class"] + [f"axis_{j + 1}" for j in range(d_max)]
    write_csv(_out(cfg, "projection.csv"), header, out)
    scree = [[c.label, j + 1, float(v)] for c in model.classes for j, v in enumerate(c.spectrum)]
    write_csv(_out(cfg, "scree.csv"), ["class", "rank", "value"], scree)
    msg = f"projected {ds.n} samples on {model.k} class subspaces -> {_out(cfg, 'projection.csv')}"
    if model.kernel.family == "functional" and model.train_data is not None:
        basis = NaturalCubicSplineBasis(model.kernel.basis_size)
        bg = functional_gram_for(model.kernel)
        band_rows = []
        for i, c in enumerate(model.classes):
            for axis in range(1, max(c.d, 1) + 1):
                t, mean, plus, minus = principal_band(model, model.train_data, bg, basis, i, axis)
                band_rows += [[c.label, axis, *map(float, v)] for v in zip(t, mean, plus, minus)]
        write_csv(_out(cfg, "bands.csv"), ["class", "axis", "t", "mean", "plus", "minus"], band_rows)
        msg += f"; principal bands -> {_out(cfg, 'bands.csv')}"
    print(msg)
    return 0


def cmd_kernel(cfg):
    ds = _load(cfg)
    spec = kernel_spec(cfg, ds)
    X = features(ds, spec)
    if X is None:
        K = full_gram(ds, spec).entries
    else:
        sc = _scaler(ds, X, cfg["scale"])
        K = gram(spec, X if sc is None else sc.transform(X)).entries
    write_csv(_out(cfg, "gram.csv"), [""] + list(map(str, ds.ids)), [[i, *map(float, r)] for i, r in zip(ds.ids, K)])
    print(f"wrote {K.shape[0]}x{K.shape[1]} {spec.family} Gram matrix -> {_out(cfg, 'gram.csv')}")
    return 0


COMMANDS = {
    "fit": (cmd_fit, "fit a supervised model and save it as JSON"),
    "predict": (cmd_predict, "predicted labels and posteriors"),
    "cluster": (cmd_cluster, "EM clustering"),
    "cv": (cmd_cv, "cross-validation / repeated hold-out over a grid"),
    "project": (cmd_project, "projections on the class subspaces, scree values"),
    "kernel": (cmd_kernel, "dump the Gram matrix"),
}


def _flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON or YAML file of settings; flags override it")
    g = p.add_argument_group("data")
    g.add_argument("--data", help="input file")
    g.add_argument("--format", help="numeric-csv | categorical-csv | mixed-csv | edge-list | curves-csv | kernel-csv")
    g.add_argument("--label-col", help="label column of a CSV table")
    g.add_argument("--id-col", help="sample id column of a CSV table")
    g.add_argument("--labels", help="id,label file (graphs, curves, kernels)")
    g.add_argument("--scale", action="store_true", default=None, help="map numeric columns onto [-1, 1]")
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", help="|".join(KERNELS))
    g.add_argument("--sigma", type=float)
    g.add_argument("--degree", type=int)
    g.add_argument("--gamma-h", type=float)
    g.add_argument("--nu", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--second-kernel", help="second operand of a combined kernel")
    g.add_argument("--basis-size", type=int, help="number of spline basis functions (functional kernel)")
    g.add_argument("--quad-density", type=int, help=S)
    g = p.add_argument_group("model")
    g.add_argument("--model", help="M0..M8 (comma separated list for cv)")
    g.add_argument("--tau", type=float, help="scree threshold")
    g.add_argument("--dim", type=int, help="fixed intrinsic dimension instead of the scree test")
    g.add_argument("--model-file", help="saved model (predict/project); output path for fit")
    g = p.add_argument_group("clustering")
    g.add_argument("--k", type=int)
    g.add_argument("--restarts", type=int)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--init", choices=["kkmeans", "random"])
    g.add_argument("--freeze-dims-after", type=int)
    g = p.add_argument_group("model selection")
    g.add_argument("--folds", type=int)
    g.add_argument("--hr", type=float, help="training fraction for repeated hold-out")
    g.add_argument("--reps", type=int)
    g.add_argument("--sigma-grid", help="log2 sigma values: 'a:b:n' or comma list")
    g.add_argument("--tau-grid")
    g.add_argument("--dim-grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="pgpkit", description="Parsimonious Gaussian process models through kernels.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        _flags(p)
        p.set_defaults(func=fn)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except PGPError as exc:
        print(f"error[{exc.code}]: {_one_line(exc)}", file=sys.stderr)
    except OSError as exc:
        print(f"error[io]: {_one_line(exc)}", file=sys.stderr)
    except ValueError as exc:
        print(f"error[input]: {_one_line(exc)}", file=sys.stderr)
    return 2


def _one_line(exc):
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
