"""Fetch the benchmark datasets into a local cache as plain CSV files.

iris and wine ship with scikit-learn. House-votes and the Canadian
temperature curves are taken from data files bundled in two PyPI
distributions (Orange3 and fdars), since PyPI is often the only index
reachable from a build box. Downloads are checked against the sha256
digest published by the index.

    python -m pgpkit.datasets [--cache DIR] [name ...]
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import re
import sys
import tarfile
import urllib.parse
import urllib.request
import zipfile

from .errors import LoadError

INDEX = os.environ.get("PGP_INDEX_URL", "https://pypi.org/simple")

SOURCES = {
    "house-votes": ("orange3", "Orange3-3.3.8.tar.gz", "Orange3-3.3.8/Orange/datasets/voting.tab"),
    "canadian-weather": (
        "fdars",
        "fdars-0.13.0-cp39-abi3-manylinux_2_17_x86_64.manylinux2014_x86_64.whl",
        ("fdars/data/canadian_weather.csv", "fdars/data/canadian_weather_meta.csv"),
    ),
}
NAMES = ("iris", "wine", "house-votes", "canadian-weather")


def cache_dir(path=None):
    d = path or os.environ.get("PGP_DATA") or os.path.join(os.path.expanduser("~"), ".cache", "pgpkit")
    os.makedirs(d, exist_ok=True)
    return d


def _index_link(project, filename):
    url = f"{INDEX.rstrip('/')}/{project}/"
    with urllib.request.urlopen(url, timeout=60) as r:
        page = r.read().decode()
    for href, text in re.findall(r'<a href="([^"]+)"[^>]*>([^<]+)</a>', page):
        if text.strip() == filename:
            link, _, frag = urllib.parse.urljoin(url, href).partition("#")
            return link, frag.partition("sha256=")[2] or None
    raise LoadError(f"{filename} not listed on {url}")


def _download(project, filename, dest):
    if os.path.exists(dest):
        return dest
    link, digest = _index_link(project, filename)
    with urllib.request.urlopen(link, timeout=300) as r:
        blob = r.read()
    if digest and hashlib.sha256(blob).hexdigest() != digest:
        raise LoadError(f"sha256 mismatch for {filename}")
    tmp = dest + ".part"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, dest)
    return dest


def _write(path, header, rows):
    tmp = path + ".part"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def _sklearn(name, d):
    from sklearn import datasets as skd

    out = os.path.join(d, f"{name}.csv")
    if not os.path.exists(out):
        bunch = getattr(skd, f"load_{name}")()
        cols = [re.sub(r"\W+", "_", c.replace(" (cm)", "")).strip("_") for c in bunch.feature_names]
        rows = [[f"{i + 1}"] + ["%r" % float(v) for v in x] + [int(y)] for i, (x, y) in enumerate(zip(bunch.data, bunch.target))]
        _write(out, ["id"] + cols + ["label"], rows)
    return {"data": out, "format": "numeric-csv", "label_col": "label", "id_col": "id"}


def house_votes(d):
    """435 x 16 categorical votes (y / n / ?), label column "party"."""
    out = os.path.join(d, "house-votes.csv")
    if not os.path.exists(out):
        project, fname, member = SOURCES["house-votes"]
        archive = _download(project, fname, os.path.join(d, fname))
        with tarfile.open(archive) as tf:
            text = tf.extractfile(member).read().decode()
        lines = [ln.split("\t") for ln in text.splitlines() if ln.strip()]
        header, body = lines[0], lines[3:]  # name, type and flag rows
        label = header.index("party")
        votes = [j for j in range(len(header)) if j != label]
        rows = []
        for i, r in enumerate(body):
            r = r + [""] * (len(header) - len(r))
            rows.append([i + 1, r[label]] + [r[j] if r[j] else "?" for j in votes])
        _write(out, ["id", "party"] + [header[j] for j in votes], rows)
    return {"data": out, "format": "categorical-csv", "label_col": "party", "id_col": "id"}


def canadian_weather(d):
    """Daily mean temperature curves of 35 stations; labels are the 4 climate regions."""
    curves = os.path.join(d, "canadian-weather.csv")
    labels = os.path.join(d, "canadian-weather-labels.csv")
    if not (os.path.exists(curves) and os.path.exists(labels)):
        project, fname, (cfile, mfile) = SOURCES["canadian-weather"]
        archive = _download(project, fname, os.path.join(d, fname))
        with zipfile.ZipFile(archive) as zf:
            ctext = zf.read(cfile).decode()
            mtext = zf.read(mfile).decode()
        crows = list(csv.reader(io.StringIO(ctext)))
        _write(curves, crows[0], crows[1:])
        meta = list(csv.DictReader(io.StringIO(mtext)))
        _write(labels, ["id", "label"], [[m["station"], m["region"]] for m in meta])
    return {"data": curves, "format": "curves-csv", "labels": labels}


FETCHERS = {
    "iris": lambda d: _sklearn("iris", d),
    "wine": lambda d: _sklearn("wine", d),
    "house-votes": house_votes,
    "canadian-weather": canadian_weather,
}


def fetch(name, path=None) -> dict:
    """Materialise dataset ``name``; returns the loader arguments for it."""
    if name not in FETCHERS:
        raise LoadError(f"unknown dataset {name!r}; known: {', '.join(NAMES)}")
    try:
        return FETCHERS[name](cache_dir(path))
    except OSError as exc:
        raise LoadError(f"could not fetch {name}: {exc}") from None


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m pgpkit.datasets", description=__doc__.split("\n")[0])
    ap.add_argument("names", nargs="*", default=list(NAMES))
    ap.add_argument("--cache", default=None, help="cache directory (default $PGP_DATA or ~/.cache/pgpkit)")
    args = ap.parse_args(argv)
    status = 0
    for name in args.names:
        try:
            info = fetch(name, args.cache)
            print(f"{name}: {info['data']}")
        except LoadError as exc:
            print(f"{name}: error[{exc.code}]: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
