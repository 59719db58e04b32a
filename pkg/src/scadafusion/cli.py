"""Command-line interface: ``scadafusion <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 numeric failure.  Set ``SCADAFUSION_LOG`` (DEBUG, INFO, WARNING, ...) to
change log verbosity.  Outputs are staged in a temporary location and only
moved into place when the command succeeds.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DataError, NumericError, ScadaFusionError

log = logging.getLogger("scadafusion")

EXIT = {ConfigError: 2, DataError: 3, NumericError: 4}


# --- output staging ---------------------------------------------------------

@contextlib.contextmanager
def staged_file(target):
    """Yield a temporary path that replaces ``target`` only on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@contextlib.contextmanager
def staged_dir(target):
    """Yield a temporary directory whose entries move into ``target`` on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
        target.mkdir(exist_ok=True)
        for entry in sorted(tmp.iterdir()):
            dest = target / entry.name
            if dest.is_dir() and not dest.is_symlink():
                shutil.rmtree(dest)
            os.replace(entry, dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_text(path, text: str):
    with staged_file(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def _emit(text: str, out):
    if out:
        _write_text(out, text)
    else:
        sys.stdout.write(text)


# --- shared loading -----------------------------------------------------------

def _load_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _fused(path, label_required=True):
    from .fusion import encode, read_table_csv, scale
    try:
        table, labels = read_table_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if label_required and labels is None:
        raise DataError(f"{path} has no label column; run `fuse` with --label-mode")
    return table, scale(encode(table)), labels


def _parse_ratio(s: str):
    try:
        a, b = (int(v) for v in s.split(":"))
    except ValueError:
        raise ConfigError(f"ratio must look like 1:2, got {s!r}") from None
    if a < 1 or b < 1:
        raise ConfigError("ratio parts must be positive")
    return a, b


def _json_arg(text, what):
    if not text:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}") from None


def _metrics_json(m) -> str:
    f1, rec, prec = m.row()
    return json.dumps({"classes": [int(c) for c in m.classes], "f1": f1, "recall": rec, "precision": prec,
                       "per_class_f1": m.f1.tolist(), "confusion": m.confusion.tolist()},
                      indent=2, sort_keys=True) + "\n"


# --- commands ---------------------------------------------------------------

def cmd_generate(a):
    from .scenario import generate_scenario, spec_from_dict
    spec = dict(a.cfg)
    for key, val in (("use_case", a.use_case), ("n_masters", a.masters), ("polling_interval_s", a.pi),
                     ("duration_s", a.duration), ("seed", a.seed)):
        if val is not None:
            spec[key] = val
    if a.attack is not None:
        spec["attack_start_s"], spec["attack_end_s"] = a.attack
    if a.no_attack:
        spec["attack_start_s"] = spec["attack_end_s"] = None
    s = spec_from_dict(spec)
    with staged_dir(a.out) as tmp:
        bundle = generate_scenario(s, tmp)
        n = bundle.manifest["n_packets"]
    print(f"wrote {n} packets to {a.out}")


def cmd_ingest(a):
    from .fusion import merge_alerts, merge_flow_features, write_table_csv
    from .ingest import build_cyber_table, load_alert_events, load_capture, load_flow_events
    d = Path(a.inp)
    try:
        pkts = load_capture(d / "capture.jsonl")
        cb = build_cyber_table(pkts)
        cb = merge_alerts(cb, load_alert_events(d / "alerts.jsonl"))
        cb = merge_flow_features(cb, load_flow_events(d / "flows.jsonl"))
    except OSError as exc:
        raise DataError(f"cannot read bundle {d}: {exc}") from None
    with staged_file(a.out) as tmp:
        write_table_csv(tmp, cb)
    print(f"wrote {len(cb)} cyber records to {a.out}")


def cmd_fuse(a):
    from .fusion import assign_labels, fuse_bundle, load_windows, write_table_csv
    try:
        table = fuse_bundle(a.inp, a.physical_mode)
    except OSError as exc:
        raise DataError(f"cannot read bundle {a.inp}: {exc}") from None
    labels = None
    if a.label_mode != "none":
        windows = load_windows(Path(a.inp) / "manifest.json") if a.label_mode == "attack_window" else None
        labels = assign_labels(table, a.label_mode, windows)
    with staged_file(a.out) as tmp:
        write_table_csv(tmp, table, labels)
    print(f"wrote {len(table)} fused records to {a.out}")


def cmd_featan(a):
    from .featan import pca_fit_transform, pearson_matrix, select_features, shapiro_rank
    from .pipeline import Table
    _, X, _ = _fused(a.inp, label_required=False)
    if a.action == "corr":
        c = pearson_matrix(X)
        t = Table("correlation", "Pearson correlation", ["feature", *c.names],
                  [[n, *row] for n, row in zip(c.names, c.values)])
    elif a.action == "pca":
        model, _ = pca_fit_transform(X, a.threshold)
        t = Table("pca", f"PCA components at {a.threshold:g} variance", ["feature", *[f"pc{i + 1}" for i in
                                                                                      range(model.k)]],
                  [[n, *row] for n, row in zip(model.names, model.components)])
        t.rows.append(["explained_variance_ratio", *model.explained_variance_ratio])
    else:
        scores = shapiro_rank(X, seed=a.seed)
        keep = set(select_features(scores, a.cutoff))
        t = Table("shapiro", "Shapiro-Wilk ranking", ["feature", "W", "selected"],
                  [[n, scores[n], n in keep] for n in sorted(scores, key=lambda n: (-scores[n], n))])
    _emit(t.csv_text(), a.out)


def _view(X, features):
    if not features:
        return X
    names = [f.strip() for f in features.split(",")]
    missing = [n for n in names if n not in X.names]
    if missing:
        raise ConfigError(f"unknown features {missing}")
    return X.select(names)


def cmd_learn(a):
    from .learn import ClassifierSpec, Model, evaluate, grid_search, stratified_split, train
    params = _json_arg(a.params, "--params") or {}
    if a.action == "eval":
        from .fusion import ColumnInfo, FeatureMatrix, encode, read_table_csv, scale
        try:
            blob = json.loads(Path(a.model).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load model {a.model}: {exc}") from None
        model = Model.from_json(json.dumps(blob["model"]))
        ref = FeatureMatrix(np.zeros((0, len(blob["preprocess"]))),
                            [ColumnInfo(c["name"], c["kind"], c["encoder"], tuple(c["scaling"]))
                             for c in blob["preprocess"]])
        table, y = read_table_csv(a.inp)
        if y is None:
            raise DataError(f"{a.inp} has no label column")
        X = scale(encode(table, ref), blob["scale"], ref).select(model.columns)
        _emit(_metrics_json(evaluate(y, model.predict(X), classes=model.classes)), a.out)
        return
    _, X, y = _fused(a.inp)
    X = _view(X, a.features)
    spec = ClassifierSpec(a.algo, params, a.seed)
    tr, te = stratified_split(y, a.test_fraction, a.seed)
    if a.action == "grid":
        grid = _json_arg(a.grid, "--grid")
        if not isinstance(grid, dict):
            raise ConfigError("--grid must be a JSON object of parameter lists")
        best, score = grid_search(spec, X.take(tr), y[tr], grid, a.folds)
        m = evaluate(y[te], train(spec.with_params(**best), X.take(tr), y[tr]).predict(X.take(te)))
        _emit(json.dumps({"best_params": best, "cv_f1": score, "test_f1": m.weighted_f1}, indent=2,
                         sort_keys=True) + "\n", a.out)
        return
    model = train(spec, X.take(tr), y[tr])
    m = evaluate(y[te], model.predict(X.take(te)), classes=model.classes)
    full = _fused(a.inp)[1]
    pre = [{"name": c.name, "kind": c.kind, "encoder": c.encoder, "scaling": list(c.scaling)} for c in full.columns]
    blob = {"model": json.loads(model.to_json()), "preprocess": pre, "scale": "minmax",
            "test_f1": m.weighted_f1}
    _write_text(a.out, json.dumps(blob, sort_keys=True) + "\n")
    print(f"{a.algo}: test weighted F1 {m.weighted_f1:.4f}; model written to {a.out}")


def cmd_cluster(a):
    from .cluster import adjusted_rand, cluster, cluster_quality
    from .pipeline import Table, _subsample
    _, X, y = _fused(a.inp, label_required=False)
    idx = _subsample(len(X.values), a.max_rows, a.seed)
    A = X.values[idx]
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(a.k_min, a.k_max + 1):
            res = cluster(a.algo, A, k, a.seed)
            q = cluster_quality(A, res.labels)
            ar = adjusted_rand(y[idx], res.labels) if y is not None else float("nan")
            rows.append([a.algo, k, q["silhouette"], q["calinski_harabasz"], ar, q["davies_bouldin"]])
    _emit(Table("clusters", "", ["algo", "k", "S", "CH", "AR", "DB"], rows).csv_text(), a.out)


def cmd_manifold(a):
    from .learn import ClassifierSpec, _infos, evaluate, stratified_split, train
    from .fusion import FeatureMatrix
    from .manifold import embed
    from .pipeline import Table, _subsample
    _, X, y = _fused(a.inp, label_required=a.action == "bench")
    idx = _subsample(len(X.values), a.n_samples, a.seed)
    A = X.values[idx]
    params = _json_arg(a.params, "--params")
    algos = [a.algo] if a.action == "embed" else [s.strip() for s in a.algos.split(",")]
    names = [f"e{j + 1}" for j in range(a.d)]
    if a.action == "embed":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            emb = embed(a.algo, A, a.d, params, a.seed)
        rows = [[int(i), *row] for i, row in zip(idx, emb.coords)]
        _emit(Table("embedding", "", ["row", *names], rows).csv_text(), a.out)
        return
    yy = y[idx]
    tr, te = stratified_split(yy, 0.3, a.seed)
    rows = []
    for algo in algos:
        # fit on training rows, place test rows out of sample
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            emb = embed(algo, A[tr], a.d, None, a.seed)
            coords = np.zeros((len(yy), a.d))
            coords[tr], coords[te] = emb.coords, emb.transform(A[te])
        E = FeatureMatrix(coords, _infos(names))
        models = [s.strip() for s in a.models.split(",")]
        rows.append([algo, *[evaluate(yy[te], train(ClassifierSpec(m, {}, a.seed), E.take(tr), yy[tr])
                                      .predict(E.take(te))).weighted_f1 for m in models]])
    _emit(Table("manifold", "", ["manifold", *models], rows).csv_text(), a.out)


def cmd_cotrain(a):
    from .cotrain import cotrain_fit, cotrain_predict, labeled_unlabeled_split
    from .learn import ClassifierSpec, evaluate, stratified_split, train
    from .pipeline import Table
    _, X, y = _fused(a.inp)
    ratio = _parse_ratio(a.ratio)
    tr, te = stratified_split(y, 0.3, a.seed)
    lab, unl = labeled_unlabeled_split(len(tr), ratio, a.seed)
    rows = []
    for base in [s.strip() for s in a.base.split(",")]:
        spec = ClassifierSpec(base, {}, a.seed)
        L = (X.take(tr[lab]), y[tr[lab]])
        sup = evaluate(y[te], train(spec, *L).predict(X.take(te)), classes=[0, 1]).row()
        cm = cotrain_fit(spec, L, X.take(tr[unl]), max_loops=a.max_loops)
        co = evaluate(y[te], cotrain_predict(cm, X.take(te))[0], classes=[0, 1]).row()
        rows.append([base, *sup, *co])
    hdr = ["classifier", "supervised_F1", "supervised_Rec", "supervised_Prec", "cotrain_F1", "cotrain_Rec",
           "cotrain_Prec"]
    _emit(Table("cotrain", "", hdr, rows).csv_text(), a.out)


def cmd_report(a):
    from .pipeline import compare_labels
    if a.compare != "labels":
        raise ConfigError(f"unknown comparison {a.compare!r}")
    src = Path(a.inp)
    if src.is_dir():
        src = src / "labels.csv"
    if not src.is_file():
        raise DataError(f"no label comparison table at {src}")
    _emit(compare_labels(src).csv_text(), a.out)


def cmd_run(a):
    from .pipeline import config_from_dict, run_pipeline
    if not a.config:
        raise ConfigError("run needs --config")
    cfg = config_from_dict(a.cfg, base_dir=Path(a.config).parent)
    if a.seed is not None:
        for section in (cfg.learn, cfg.labels, cfg.feature_sets, cfg.reduction, cfg.clustering, cfg.manifold):
            section.seed = a.seed
        cfg.cotrain.seeds = [a.seed]
    out = Path(a.out) if a.out else cfg.resolve(cfg.out)
    with staged_dir(out) as tmp:
        report = run_pipeline(cfg, tmp)
    print(f"report {report.provenance['config_hash'][:16]} written to {out}")


# --- parser -------------------------------------------------------------------

def _common(p, out_required=False):
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--config", help="YAML file supplying defaults for this command")
    p.add_argument("--out", required=out_required, help="output path")


def build_parser() -> argparse.ArgumentParser:
    from .cluster import ALGOS as CLUSTER_ALGOS
    from .learn import ALGOS
    from .manifold import ALGOS as MANIFOLDS
    ap = argparse.ArgumentParser(prog="scadafusion", description="Cyber-physical data fusion for SCADA intrusion "
                                                                 "detection.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a scenario bundle")
    _common(p, out_required=True)
    p.add_argument("--use-case", choices=["UC1", "UC2", "UC3", "UC4"])
    p.add_argument("--masters", type=int)
    p.add_argument("--pi", type=float, help="polling interval in seconds")
    p.add_argument("--duration", type=float, help="scenario length in seconds")
    p.add_argument("--attack", type=float, nargs=2, metavar=("START", "END"))
    p.add_argument("--no-attack", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="build the merged cyber table of a bundle")
    _common(p, out_required=True)
    p.add_argument("--in", dest="inp", required=True, help="bundle directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fuse", help="fuse cyber and physical features of a bundle")
    _common(p, out_required=True)
    p.add_argument("--in", dest="inp", required=True, help="bundle directory")
    p.add_argument("--physical-mode", choices=["drop", "impute"], default="drop")
    p.add_argument("--label-mode", choices=["attack_window", "snort", "none"], default="attack_window")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("featan", help="feature analysis on a fused CSV")
    p.add_argument("action", choices=["corr", "pca", "shapiro"])
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--threshold", type=float, default=0.95, help="PCA variance threshold")
    p.add_argument("--cutoff", type=float, default=0.7, help="Shapiro selection cutoff")
    p.set_defaults(func=cmd_featan)

    p = sub.add_parser("learn", help="train, evaluate or tune a classifier")
    p.add_argument("action", choices=["train", "eval", "grid"])
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--algo", choices=ALGOS, default="DT")
    p.add_argument("--params", help="JSON object of hyperparameters")
    p.add_argument("--grid", help="JSON object mapping parameters to candidate lists")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--features", help="comma-separated column subset")
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--model", help="model file for eval")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("cluster", help="cluster a fused CSV over a k range")
    p.add_argument("action", choices=["run"])
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--algo", choices=CLUSTER_ALGOS, default="KMEANS")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--max-rows", type=int, default=1500)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("manifold", help="low-dimensional embeddings")
    p.add_argument("action", choices=["embed", "bench"])
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--algo", choices=MANIFOLDS, default="ISOMAP")
    p.add_argument("--algos", default=",".join(MANIFOLDS))
    p.add_argument("--models", default="SVC,KNN,DT,RF,GNB,BNB,MLP")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n-samples", type=int, default=600)
    p.add_argument("--params", help="JSON object of embedding parameters")
    p.set_defaults(func=cmd_manifold)

    p = sub.add_parser("cotrain", help="supervised vs co-training comparison")
    p.add_argument("action", choices=["run"])
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--base", default="DT", help="comma-separated base classifiers")
    p.add_argument("--ratio", default="1:2", help="labeled:unlabeled ratio")
    p.add_argument("--max-loops", type=int, default=50)
    p.set_defaults(func=cmd_cotrain)

    p = sub.add_parser("report", help="derive comparison tables from a report")
    _common(p)
    p.add_argument("--compare", choices=["labels"], required=True)
    p.add_argument("--in", dest="inp", required=True, help="report directory or labels.csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    _common(p)
    p.set_defaults(func=cmd_run)
    return ap


def _apply_config(parser, args):
    """Load --config; for most commands its keys become option defaults."""
    args.cfg = {}
    if not getattr(args, "config", None):
        return args
    data = _load_yaml(args.config)
    args.cfg = data
    if args.command in ("generate", "run"):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    section = data.get(args.command, data)
    unknown = set(section) - dests
    if unknown:
        raise ConfigError(f"{args.config}: unknown keys for {args.command}: {sorted(unknown)}")
    sub.set_defaults(**section)
    return parser.parse_args(args.argv)


def _configure_logging():
    level = os.environ.get("SCADAFUSION_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    if level not in ("DEBUG", "INFO"):
        warnings.simplefilter("ignore")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        args = _apply_config(parser, args)
        args.argv = argv
        if getattr(args, "seed", None) is None and args.command not in ("generate", "run"):
            args.seed = 0
        if not getattr(args, "cfg", None):
            args.cfg = _load_yaml(args.config) if args.config else {}
        args.func(args)
    except ScadaFusionError as exc:
        code = next(c for cls, c in EXIT.items() if isinstance(exc, cls)) if isinstance(
            exc, tuple(EXIT)) else 1
        print(f"scadafusion {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"scadafusion {args.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
