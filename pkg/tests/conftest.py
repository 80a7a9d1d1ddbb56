import os

import numpy as np
import pytest


def data_dir():
    return os.environ.get("PGP_DATA") or os.path.join(os.path.expanduser("~"), ".cache", "pgpkit")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fetch_or_skip(name):
    """Cached dataset info, fetching on first use; skips when unreachable."""
    from pgpkit.datasets import fetch
    from pgpkit.errors import LoadError

    try:
        return fetch(name, data_dir())
    except LoadError as exc:
        pytest.skip(f"{name} unavailable: {exc}")


def blobs(rng, n_per=20, p=2, k=2, gap=8.0):
    X = np.vstack([rng.normal(size=(n_per, p)) + gap * i for i in range(k)])
    y = np.repeat(np.arange(k), n_per)
    return X, y


ACCEPTANCE = []  # (number, passed, detail) recorded by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
