import filecmp
import shutil

import numpy as np
import pytest

from scadafusion.errors import ConfigError, DataError
from scadafusion.pipeline import compare_labels, config_from_dict, run_pipeline

SMALL = {
    "scenarios": [{"name": "uc1", "spec": {"use_case": "UC1", "duration_s": 900, "attack_start_s": 300,
                                           "attack_end_s": 600, "seed": 3, "n_masters": 2,
                                           "polling_interval_s": 10}}],
    "learn": {"models": ["DT", "GNB"], "grids": {"DT": {"max_depth": [3, None]}}},
    "labels": {"models": ["DT"]},
    "feature_sets": {"models": ["DT"]},
    "reduction": {"models": ["DT"]},
    "clustering": {"algos": ["KMEANS", "AGGLOMERATIVE"], "k_max": 4, "max_rows": 400, "resamples": 3},
    "manifold": {"algos": ["MDS", "ISOMAP"], "models": ["KNN", "DT"], "n_samples": 200},
    "cotrain": {"bases": ["DT"], "max_loops": 10},
}


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipe")
    reports = [run_pipeline(config_from_dict(SMALL, base), base / name) for name in ("a", "b")]
    return base, reports


def test_report_reproducible(two_runs):
    base, _ = two_runs
    a, b = base / "a", base / "b"
    names = sorted(p.name for p in a.iterdir() if p.is_file())
    assert "summary.txt" in names and "provenance.json" in names
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors


def test_table_shapes(two_runs):
    _, (report, _) = two_runs
    fs = report.table("feature_sets")
    assert fs.header == ["classifier"] + [f"{s}_{m}" for s in ("pure_cyber", "pure_physical", "cyber_physical")
                                          for m in ("F1", "Rec", "Prec")]
    labels = report.table("labels")
    assert labels.header[1:] == ["snort_F1", "snort_Rec", "snort_Prec", "window_F1", "window_Rec", "window_Prec"]
    assert report.table("manifold").header == ["manifold", "KNN", "DT"]
    assert [r[0] for r in report.table("clustering_opt").rows] == ["uc1", "uc1"]
    assert report.table("cotrain").header[0] == "classifier"
    prov = report.provenance
    assert len(prov["config_hash"]) == 64 and prov["scenarios"]["uc1"]["rows"] > 0


def test_compare_labels(two_runs):
    base, _ = two_runs
    t = compare_labels(base / "a" / "labels.csv")
    assert t.header == ["classifier", "snort_F1", "window_F1", "delta_F1"]
    (row,) = t.rows
    assert row[3] == pytest.approx(row[2] - row[1])
    with pytest.raises(ConfigError):
        compare_labels(base / "a" / "classifiers.csv")


def test_config_hash_tracks_values(tmp_path):
    a = config_from_dict(SMALL, tmp_path)
    changed = dict(SMALL, learn={"models": ["DT"]})
    assert a.digest() == config_from_dict(SMALL, tmp_path).digest()
    assert a.digest() != config_from_dict(changed, tmp_path).digest()
    # output location and worker count cannot change any number
    assert a.digest() == config_from_dict(dict(SMALL, out="elsewhere", workers=3), tmp_path).digest()


@pytest.mark.parametrize("bad", [{"scenarios": []}, dict(SMALL, physical_mode="keep"),
                                 dict(SMALL, learn={"models": ["XGB"]}), dict(SMALL, unknown_key=1),
                                 dict(SMALL, clustering={"k_min": 5, "k_max": 3})])
def test_invalid_configs(tmp_path, bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad, tmp_path).validate()


def test_missing_bundle_rejected_up_front(tmp_path):
    with pytest.raises(ConfigError, match="no bundle"):
        run_pipeline(config_from_dict({"scenarios": [{"name": "gone", "path": "missing_bundle"}]}, tmp_path),
                     tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_failing_stage_is_named(tmp_path, small_bundle):
    broken = tmp_path / "broken"
    shutil.copytree(small_bundle.directory, broken)
    with open(broken / "capture.jsonl", "a") as fh:
        fh.write("{not json\n")
    cfg = config_from_dict({"scenarios": [{"name": "bad", "path": "broken"}]}, tmp_path)
    with pytest.raises(DataError, match=r"\[fuse:bad\]"):
        run_pipeline(cfg, tmp_path / "out")
