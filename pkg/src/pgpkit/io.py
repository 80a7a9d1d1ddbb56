"""Dataset loading, model persistence and CSV output."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, LoadError
from .kernels import KernelSpec, RangeScaler
from .pgpda import ClassModel, FittedModel

FORMATS = ("numeric-csv", "categorical-csv", "mixed-csv", "edge-list", "curves-csv", "kernel-csv")
MISSING = ("", "?", "NA")
MODEL_FORMAT = "pgpkit-model"
MODEL_VERSION = 1


@dataclass
class Dataset:
    """Samples in file order.

    ``X`` holds features (numeric or category codes), the adjacency matrix
    of a graph, the full kernel matrix (kernel-csv) or curve values on
    ``grid`` (one curve per row, curves-csv).
    """

    format: str
    ids: list
    X: np.ndarray
    labels: Optional[np.ndarray] = None
    columns: list = field(default_factory=list)
    column_types: list = field(default_factory=list)  # "num" / "cat" per column
    categories: dict = field(default_factory=dict)  # column index -> list of category strings
    grid: Optional[np.ndarray] = None

    @property
    def n(self):
        return len(self.ids)

    @property
    def transductive(self):
        """Kernel defined over the full sample set rather than per pair."""
        return self.format in ("edge-list", "kernel-csv")

    def numeric_columns(self):
        return [j for j, t in enumerate(self.column_types) if t == "num"]

    def categorical_columns(self):
        return [j for j, t in enumerate(self.column_types) if t == "cat"]


def _read_rows(path, delimiter=","):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc.strerror}") from None
    return [(i + 1, [c.strip() for c in r]) for i, r in enumerate(rows) if any(c.strip() for c in r)]


def _check_ragged(rows, width, path):
    for line, r in rows:
        if len(r) != width:
            raise LoadError(f"{path}:{line}: expected {width} fields, found {len(r)}")


def _split_meta(header, label_col, id_col, path):
    def find(name):
        if name is None:
            return None
        if name not in header:
            raise LoadError(f"{path}: no column named {name!r}")
        return header.index(name)

    li, ii = find(label_col), find(id_col)
    feats = [j for j in range(len(header)) if j not in (li, ii)]
    return li, ii, feats


def _to_float(value, path, line, col):
    try:
        v = float(value)
    except ValueError:
        raise LoadError(f"{path}:{line}: column {col!r} has non-numeric value {value!r}") from None
    if not np.isfinite(v):
        raise LoadError(f"{path}:{line}: column {col!r} has non-finite value {value!r}")
    return v


def _encode(values, known=None, path="", col="", lines=None):
    """Category codes; '?' and empty cells form their own category."""
    vals = ["?" if v in MISSING else v for v in values]
    if known is None:
        cats = sorted(set(vals))
    else:
        cats = list(known)
        unknown = [(i, v) for i, v in enumerate(vals) if v not in cats]
        if unknown:
            i, v = unknown[0]
            line = lines[i] if lines is not None else i + 2
            raise LoadError(f"{path}:{line}: column {col!r} has unknown category {v!r}")
    index = {c: k for k, c in enumerate(cats)}
    return np.array([index[v] for v in vals], dtype=float), cats


def load_table(path, fmt, label_col=None, id_col=None, categories=None) -> Dataset:
    """numeric-csv, categorical-csv or mixed-csv (second row: num/cat per column)."""
    rows = _read_rows(path)
    if not rows:
        raise LoadError(f"{path}: empty file")
    header = rows[0][1]
    body = rows[1:]
    li, ii, feats = _split_meta(header, label_col, id_col, path)
    if fmt == "mixed-csv":
        if not body:
            raise LoadError(f"{path}: missing the column-type row")
        tline, trow = body[0]
        _check_ragged([(tline, trow)], len(header), path)
        types = [trow[j] for j in feats]
        bad = [t for t in types if t not in ("num", "cat")]
        if bad:
            raise LoadError(f"{path}:{tline}: column types must be 'num' or 'cat', found {bad[0]!r}")
        body = body[1:]
    else:
        types = ["num" if fmt == "numeric-csv" else "cat"] * len(feats)
    _check_ragged(body, len(header), path)
    if not body:
        raise LoadError(f"{path}: no samples")
    X = np.empty((len(body), len(feats)))
    cats = {}
    for c, (j, t) in enumerate(zip(feats, types)):
        if t == "num":
            X[:, c] = [_to_float(r[j], path, line, header[j]) for line, r in body]
        else:
            known = None if categories is None else categories.get(c)
            X[:, c], cats[c] = _encode([r[j] for _, r in body], known, path, header[j], [ln for ln, _ in body])
    ids = [r[ii] for _, r in body] if ii is not None else [str(i + 1) for i in range(len(body))]
    labels = np.array([r[li] for _, r in body], dtype=object) if li is not None else None
    return Dataset(fmt, ids, X, _natural(labels), [header[j] for j in feats], types, cats)


def load_edge_list(path) -> Dataset:
    """Undirected unweighted graph, one "a b" pair per line (space, tab or comma)."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc.strerror}") from None
    edges = []
    for i, raw in enumerate(lines, start=1):
        s = raw.split("#", 1)[0].replace(",", " ").split()
        if not s:
            continue
        if len(s) != 2:
            raise LoadError(f"{path}:{i}: an edge needs exactly two node ids, found {len(s)}")
        if s[0] == s[1]:
            raise LoadError(f"{path}:{i}: self-loop on node {s[0]!r}")
        edges.append((s[0], s[1]))
    if not edges:
        raise LoadError(f"{path}: no edges")
    ids = _sort_ids({a for e in edges for a in e})
    index = {v: k for k, v in enumerate(ids)}
    A = np.zeros((len(ids), len(ids)))
    for a, b in edges:
        A[index[a], index[b]] = A[index[b], index[a]] = 1.0
    return Dataset("edge-list", ids, A)


def load_curves(path) -> Dataset:
    """First column is the observation grid; every further column is one curve.

    The grid is rescaled onto [0, 1] when it is not already inside it.
    """
    from .functional import rescale_grid

    rows = _read_rows(path)
    if len(rows) < 2:
        raise LoadError(f"{path}: no observations")
    header = rows[0][1]
    body = rows[1:]
    _check_ragged(body, len(header), path)
    vals = np.array([[_to_float(v, path, line, header[j]) for j, v in enumerate(r)] for line, r in body])
    t = vals[:, 0]
    if np.any(np.diff(t) <= 0):
        raise LoadError(f"{path}: the grid column must be strictly increasing")
    return Dataset("curves-csv", header[1:], vals[:, 1:].T.copy(), grid=rescale_grid(t))


def load_kernel(path, tol=1e-9) -> Dataset:
    """Square kernel matrix with a header row of sample ids.

    Rows may start with the sample id when the header has an empty first cell.
    """
    rows = _read_rows(path)
    if not rows:
        raise LoadError(f"{path}: empty file")
    ids = rows[0][1]
    body = rows[1:]
    if ids and ids[0] == "":
        # leading id column, as written by the kernel command
        ids = ids[1:]
        row_ids = [r[0] if r else "" for _, r in body]
        if row_ids != ids[: len(row_ids)]:
            raise LoadError(f"{path}: row ids do not follow the header order")
        body = [(line, r[1:]) for line, r in body]
    if len(body) != len(ids):
        raise LoadError(f"{path}: {len(ids)} ids in the header but {len(body)} rows")
    _check_ragged(body, len(ids), path)
    K = np.array([[_to_float(v, path, line, ids[j]) for j, v in enumerate(r)] for line, r in body])
    asym = np.abs(K - K.T)
    if asym.max() > tol * max(1.0, np.abs(K).max()):
        i, j = np.unravel_index(np.argmax(asym), K.shape)
        raise LoadError(
            f"{path}:{i + 2}: kernel not symmetric at ({ids[i]}, {ids[j]}), difference {asym[i, j]:.3g}"
        )
    return Dataset("kernel-csv", ids, 0.5 * (K + K.T))


def load_labels(path, ids, id_col="id", label_col="label"):
    """Labels from an id,label file, aligned to ``ids``; unlisted samples get None."""
    rows = _read_rows(path)
    if not rows:
        raise LoadError(f"{path}: empty label file")
    header = rows[0][1]
    if id_col not in header or label_col not in header:
        raise LoadError(f"{path}: label file needs columns {id_col!r} and {label_col!r}")
    a, b = header.index(id_col), header.index(label_col)
    _check_ragged(rows[1:], len(header), path)
    table = {}
    for line, r in rows[1:]:
        if r[a] in table:
            raise LoadError(f"{path}:{line}: duplicate id {r[a]!r}")
        table[r[a]] = r[b]
    missing = [k for k in table if k not in set(ids)]
    if missing:
        raise LoadError(f"{path}: id {missing[0]!r} does not occur in the dataset")
    return _natural(np.array([table.get(i) for i in ids], dtype=object))


def load_dataset(path, fmt, label_col=None, id_col=None, labels_path=None, categories=None) -> Dataset:
    if fmt not in FORMATS:
        raise InputError(f"unknown data format {fmt!r}; expected one of {', '.join(FORMATS)}")
    if fmt in ("numeric-csv", "categorical-csv", "mixed-csv"):
        ds = load_table(path, fmt, label_col, id_col, categories)
    elif fmt == "edge-list":
        ds = load_edge_list(path)
    elif fmt == "curves-csv":
        ds = load_curves(path)
    else:
        ds = load_kernel(path)
    if labels_path is not None:
        ds.labels = load_labels(labels_path, ds.ids)
    return ds


def _sort_ids(ids):
    ids = list(ids)
    try:
        return sorted(ids, key=int)
    except ValueError:
        return sorted(ids)


def _natural(labels):
    """Integer-looking labels become ints so that 1 and "1" agree across files."""
    if labels is None:
        return None
    try:
        present = [v for v in labels if v is not None]
        if present and all(str(int(v)) == str(v) for v in present):
            return np.array([None if v is None else int(v) for v in labels], dtype=object)
    except (TypeError, ValueError):
        pass
    return labels


# ---------------------------------------------------------------------------
# output


def format_value(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_text_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(format_value(v) for v in r))
    write_text_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# model persistence


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def _label_out(v):
    return v.item() if isinstance(v, np.generic) else v


def model_to_dict(model: FittedModel, meta=None) -> dict:
    classes = []
    for c in model.classes:
        classes.append(
            dict(
                label=_label_out(c.label),
                size=float(c.size),
                prior=float(c.prior),
                d=int(c.d),
                rank=int(c.rank),
                variances=_arr(c.variances),
                eigenvalues=_arr(c.eigenvalues),
                spectrum=_arr(c.spectrum),
                trace=float(c.trace),
                axes=_arr(c.axes),
                beta=_arr(c.beta),
                support=_arr(c.support),
            )
        )
    td = model.train_data
    return dict(
        format=MODEL_FORMAT,
        version=MODEL_VERSION,
        submodel=model.submodel,
        kernel=model.kernel.to_dict(),
        noise=float(model.noise),
        classes=classes,
        center_weights=_arr(model.center_weights),
        col_means=_arr(model.col_means),
        block_means=_arr(model.block_means),
        train_data=None if td is None else np.asarray(td, dtype=float).tolist(),
        scaler=None if model.scaler is None else model.scaler.to_dict(),
        feature_dim=model.feature_dim,
        shared_orientation=bool(model.shared_orientation),
        meta=meta or {},
    )


def model_from_dict(d) -> tuple:
    """Returns (FittedModel, meta)."""
    if d.get("format") != MODEL_FORMAT:
        raise LoadError("not a pgpkit model file")
    if d.get("version") != MODEL_VERSION:
        raise LoadError(f"unsupported model file version {d.get('version')!r}")
    try:
        classes = []
        for c in d["classes"]:
            classes.append(
                ClassModel(
                    label=c["label"],
                    size=c["size"],
                    prior=c["prior"],
                    d=c["d"],
                    rank=c["rank"],
                    variances=np.asarray(c["variances"], float),
                    eigenvalues=np.asarray(c["eigenvalues"], float),
                    spectrum=np.asarray(c["spectrum"], float),
                    trace=c["trace"],
                    axes=np.asarray(c["axes"], float).reshape(
                        len(d["center_weights"]), len(d["classes"]), c["d"]
                    ),
                    beta=None if c["beta"] is None else np.asarray(c["beta"], float),
                    support=None if c["support"] is None else np.asarray(c["support"], int),
                )
            )
        model = FittedModel(
            submodel=d["submodel"],
            kernel=KernelSpec.from_dict(d["kernel"]),
            classes=classes,
            noise=d["noise"],
            center_weights=np.asarray(d["center_weights"], float),
            col_means=np.asarray(d["col_means"], float),
            block_means=np.asarray(d["block_means"], float),
            train_data=None if d["train_data"] is None else np.asarray(d["train_data"], float),
            scaler=None if d["scaler"] is None else RangeScaler.from_dict(d["scaler"]),
            feature_dim=d["feature_dim"],
            shared_orientation=d["shared_orientation"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"malformed model file: {exc}") from None
    return model, d.get("meta", {})


def save_model(path, model: FittedModel, meta=None):
    write_text_atomic(path, json.dumps(model_to_dict(model, meta)))


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(d)
