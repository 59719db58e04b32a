import warnings

import numpy as np
import pytest

from scadafusion.fusion import ColumnInfo, FeatureMatrix
from scadafusion.scenario import ScenarioSpec, generate_scenario


def blobs(n=200, p=2, sep=6.0, seed=0, classes=2):
    """Gaussian blobs of unit variance whose centres sit ``sep`` apart along every axis."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    X = rng.normal(size=(n, p)) + sep * y[:, None]
    return X, y


def as_matrix(X, prefix="f"):
    return FeatureMatrix(np.asarray(X, float), [ColumnInfo(f"{prefix}{j}", "numeric") for j in range(X.shape[1])])


SMALL_SPEC = dict(use_case="UC1", n_masters=2, polling_interval_s=10.0, duration_s=900.0,
                  attack_start_s=300.0, attack_end_s=600.0, seed=5)


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_scenario(ScenarioSpec(**SMALL_SPEC), tmp_path_factory.mktemp("bundle"))


def two_view_blobs(n=600, seed=0, sep=6.0, p=4):
    """Balanced two-class data whose cyber-like and physical-like halves each separate the classes."""
    from scadafusion.cotrain import ViewSplit
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % 2)
    X = rng.normal(size=(n, 2 * p)) + sep * y[:, None] / np.sqrt(p)
    names = [f"c{j}" for j in range(p)] + [f"p{j}" for j in range(p)]
    m = FeatureMatrix(X, [ColumnInfo(c, "numeric") for c in names])
    return m, y, ViewSplit(tuple(names[:p]), tuple(names[p:]))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) == "call":
                lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
