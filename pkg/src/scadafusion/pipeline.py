"""End-to-end runs: generate or load bundles, fuse, analyse, learn, report.

A run is described by a ``PipelineConfig`` (usually read from YAML) and
writes a directory of CSV tables, an aligned plain-text ``summary.txt`` and a
``provenance.json``.  Nothing written depends on wall-clock time, so two runs
of the same config give byte-identical files.
"""
from __future__ import annotations

import contextlib
import csv
import hashlib
import io
import json
import logging
import math
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .cluster import ALGOS as CLUSTER_ALGOS
from .cluster import adjusted_rand, cluster, cluster_quality, robustness_stats
from .cotrain import ViewSplit, cotrain_fit, cotrain_predict, labeled_unlabeled_split
from .errors import ConfigError, ScadaFusionError
from .featan import pca_fit_transform, pearson_matrix, select_features, shapiro_rank
from .features import COLUMNS, CYBER_COLUMNS, PHYSICAL_COLUMNS
from .fusion import (LABEL_MODES, AttackWindow, PHYSICAL_MODES, SCALE_METHODS, FeatureMatrix, assign_labels,
                     encode, fuse_bundle, load_windows, scale, write_table_csv)
from .learn import ALGOS as CLASSIFIERS
from .learn import ClassifierSpec, _infos, evaluate, grid_search, stratified_split, train
from .manifold import ALGOS as MANIFOLDS
from .manifold import embed
from .scenario import generate_scenario, spec_from_dict

log = logging.getLogger("scadafusion")

FEATURE_SETS = {"pure_cyber": CYBER_COLUMNS, "pure_physical": PHYSICAL_COLUMNS, "cyber_physical": COLUMNS}


# --- configuration ----------------------------------------------------------

@dataclass
class ScenarioEntry:
    name: str
    path: str | None = None  # existing bundle directory; generated when absent
    spec: dict = field(default_factory=dict)


@dataclass
class LearnConfig:
    enabled: bool = True
    models: list[str] = field(default_factory=lambda: ["SVC", "DT", "RF", "GNB", "BNB", "MLP"])
    params: dict = field(default_factory=dict)  # algo -> fixed hyperparameters
    grids: dict = field(default_factory=dict)   # algo -> grid searched by k-fold CV
    folds: int = 5
    test_fraction: float = 0.3
    seed: int = 0


@dataclass
class LabelsConfig:
    enabled: bool = True
    models: list[str] = field(default_factory=lambda: ["SVC", "DT", "RF", "GNB", "BNB", "MLP"])
    seed: int = 0


@dataclass
class FeatureSetConfig:
    enabled: bool = True
    sets: list[str] = field(default_factory=lambda: list(FEATURE_SETS))
    models: list[str] = field(default_factory=lambda: ["SVC", "DT", "RF", "GNB", "BNB", "MLP"])
    seed: int = 0


@dataclass
class ReductionConfig:
    enabled: bool = True
    models: list[str] = field(default_factory=lambda: ["SVC", "DT", "RF", "GNB", "BNB", "MLP"])
    pca_threshold: float = 0.95
    shapiro_cutoff: float = 0.7
    seed: int = 0


@dataclass
class ClusterConfig:
    enabled: bool = True
    algos: list[str] = field(default_factory=lambda: list(CLUSTER_ALGOS))
    k_min: int = 2
    k_max: int = 10
    max_rows: int = 1500
    robustness_k: int = 3
    resamples: int = 5
    resample_fraction: float = 0.8
    seed: int = 0


@dataclass
class ManifoldConfig:
    enabled: bool = True
    algos: list[str] = field(default_factory=lambda: list(MANIFOLDS))
    models: list[str] = field(default_factory=lambda: ["SVC", "KNN", "DT", "RF", "GNB", "BNB", "MLP"])
    d: int = 2
    n_samples: int = 600
    params: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class CotrainConfig:
    enabled: bool = True
    bases: list[str] = field(default_factory=lambda: ["LR", "DT", "RF"])
    ratio: list[int] = field(default_factory=lambda: [1, 2])
    max_loops: int = 50
    seeds: list[int] = field(default_factory=lambda: [0])


@dataclass
class PipelineConfig:
    scenarios: list[ScenarioEntry]
    out: str = "report"
    physical_mode: str = "drop"
    scale: str = "minmax"
    label_mode: str = "attack_window"
    emit_fused: bool = False
    workers: int = 1
    learn: LearnConfig = field(default_factory=LearnConfig)
    labels: LabelsConfig = field(default_factory=LabelsConfig)
    feature_sets: FeatureSetConfig = field(default_factory=FeatureSetConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    cotrain: CotrainConfig = field(default_factory=CotrainConfig)
    base_dir: str = "."  # directory relative paths resolve against; not hashed

    def validate(self) -> "PipelineConfig":
        if not self.scenarios:
            raise ConfigError("config lists no scenarios")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")
        for s in self.scenarios:
            if s.path is not None:
                p = self.resolve(s.path)
                if not (p / "manifest.json").is_file():
                    raise ConfigError(f"scenario {s.name}: no bundle at {p}")
            else:
                spec_from_dict(s.spec)
        if self.physical_mode not in PHYSICAL_MODES:
            raise ConfigError(f"physical_mode must be one of {PHYSICAL_MODES}")
        if self.scale not in SCALE_METHODS:
            raise ConfigError(f"scale must be one of {SCALE_METHODS}")
        if self.label_mode not in LABEL_MODES:
            raise ConfigError(f"label_mode must be one of {LABEL_MODES}")
        for section in (self.learn, self.labels, self.feature_sets, self.reduction, self.manifold):
            bad = set(section.models) - set(CLASSIFIERS)
            if bad:
                raise ConfigError(f"unknown classifiers {sorted(bad)}")
        for algo, grid in self.learn.grids.items():
            if algo not in CLASSIFIERS or not isinstance(grid, dict):
                raise ConfigError(f"bad grid for {algo!r}")
        bad = set(self.feature_sets.sets) - set(FEATURE_SETS)
        if bad:
            raise ConfigError(f"unknown feature sets {sorted(bad)}")
        if set(self.clustering.algos) - set(CLUSTER_ALGOS):
            raise ConfigError(f"clustering algos must come from {CLUSTER_ALGOS}")
        if not 2 <= self.clustering.k_min <= self.clustering.k_max:
            raise ConfigError("need 2 <= k_min <= k_max")
        if set(self.manifold.algos) - set(MANIFOLDS):
            raise ConfigError(f"manifold algos must come from {MANIFOLDS}")
        if set(self.cotrain.bases) - set(CLASSIFIERS):
            raise ConfigError("unknown co-training base classifier")
        if len(self.cotrain.ratio) != 2 or min(self.cotrain.ratio) < 1:
            raise ConfigError("co-training ratio must be two positive integers")
        if not 0 < self.learn.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def hashed(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d.pop("workers")  # concurrency never changes an emitted number
        d.pop("out")
        return d

    def digest(self) -> str:
        d = self.hashed()
        # bundles read from disk contribute their bytes, not just their path
        d["bundle_digests"] = {s.name: bundle_digest(self.resolve(s.path)) for s in self.scenarios if s.path}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(f"{__version__}\n{blob}".encode()).hexdigest()


def bundle_digest(bundle_dir) -> str:
    h = hashlib.sha256()
    for name in ("manifest.json", "capture.jsonl", "flows.jsonl", "alerts.jsonl"):
        p = Path(bundle_dir) / name
        if p.is_file():
            h.update(name.encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {"learn": LearnConfig, "labels": LabelsConfig, "feature_sets": FeatureSetConfig,
             "reduction": ReductionConfig, "clustering": ClusterConfig, "manifold": ManifoldConfig,
             "cotrain": CotrainConfig}


def config_from_dict(d: dict, base_dir=".") -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a mapping")
    d = dict(d)
    scen = d.pop("scenarios", None)
    if not isinstance(scen, list):
        raise ConfigError("config needs a 'scenarios' list")
    entries = [_build(ScenarioEntry, s, f"scenarios[{i}]") for i, s in enumerate(scen)]
    for key, cls in _SECTIONS.items():
        if key in d:
            d[key] = _build(cls, d[key] or {}, key)
    cfg = _build(PipelineConfig, {**d, "scenarios": entries, "base_dir": str(base_dir)}, "config")
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


# --- tables -----------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}" if abs(v) >= 1e5 else f"{v:.4f}"
    return str(v)


@dataclass
class Table:
    name: str
    title: str
    header: list[str]
    rows: list[list]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()

    def text(self) -> str:
        cells = [self.header] + [[fmt(v) for v in r] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.header))]
        lines = [self.title, "-" * len(self.title)]
        for j, row in enumerate(cells):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


@dataclass
class Report:
    tables: list[Table]
    provenance: dict
    out_dir: Path | None = None

    def table(self, name) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def summary(self) -> str:
        head = f"config {self.provenance['config_hash'][:16]}  scadafusion {self.provenance['version']}\n\n"
        return head + "\n".join(t.text() for t in self.tables)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for t in self.tables:
            (out / f"{t.name}.csv").write_text(t.csv_text(), encoding="utf-8")
        (out / "summary.txt").write_text(self.summary(), encoding="utf-8")
        (out / "provenance.json").write_text(json.dumps(self.provenance, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
        self.out_dir = out
        return out


# --- stages -----------------------------------------------------------------

@contextlib.contextmanager
def stage(name: str):
    """Prefix any library error raised inside with the stage name."""
    log.info("stage %s", name)
    try:
        yield
    except ScadaFusionError as exc:
        msg = str(exc)
        if msg.startswith("["):
            raise
        try:
            new = type(exc)(f"[{name}] {msg}")
        except TypeError:
            raise exc from None
        raise new from exc


@dataclass
class Dataset:
    """One fused bundle, encoded and scaled, with both label vectors."""
    name: str
    meta: dict
    table: list[dict]
    X: FeatureMatrix
    y: np.ndarray          # labels from the configured label mode
    y_window: np.ndarray   # attack-window ground truth
    y_snort: np.ndarray


def prepare(cfg: PipelineConfig, entry: ScenarioEntry, work: Path) -> Dataset:
    with stage(f"generate:{entry.name}"):
        if entry.path is None:
            bundle_dir = work / "bundles" / entry.name
            generate_scenario(spec_from_dict(entry.spec), bundle_dir)
        else:
            bundle_dir = cfg.resolve(entry.path)
        meta = json.loads((bundle_dir / "manifest.json").read_text(encoding="utf-8"))
    with stage(f"fuse:{entry.name}"):
        table = fuse_bundle(bundle_dir, cfg.physical_mode)
        X = scale(encode(table), cfg.scale)
        windows = load_windows(bundle_dir / "manifest.json")
        y_window = assign_labels(table, "attack_window", windows).labels
        y_snort = assign_labels(table, "snort").labels
        y = y_window if cfg.label_mode == "attack_window" else y_snort
    return Dataset(entry.name, meta, table, X, y, y_window, y_snort)


def _spec(cfg_params: dict, algo: str, seed: int) -> ClassifierSpec:
    return ClassifierSpec(algo, dict(cfg_params.get(algo, {})), seed)


def _fit_eval(spec, X: FeatureMatrix, y_train_src, y_eval, tr, te):
    model = train(spec, X.take(tr), y_train_src[tr])
    return evaluate(y_eval[te], model.predict(X.take(te)), classes=[0, 1]).row()


def exp_learn(cfg: PipelineConfig, ds: Dataset) -> list[list]:
    c = cfg.learn
    tr, te = stratified_split(ds.y, c.test_fraction, c.seed)
    spec = ds.meta.get("spec", {})
    rows = []
    for algo in c.models:
        with stage(f"learn:{ds.name}:{algo}"):
            base = _spec(c.params, algo, c.seed)
            f1, rec, prec = _fit_eval(base, ds.X, ds.y, ds.y, tr, te)
            tuned, best = (float("nan"),) * 3, ""
            if algo in c.grids:
                point, _ = grid_search(base, ds.X.take(tr), ds.y[tr], c.grids[algo], c.folds)
                tuned = _fit_eval(base.with_params(**point), ds.X, ds.y, ds.y, tr, te)
                best = json.dumps(point, sort_keys=True)
            rows.append([ds.name, spec.get("use_case", ""), spec.get("n_masters", ""),
                         spec.get("polling_interval_s", ""), algo, f1, rec, prec, tuned[0], best])
    return rows


def exp_labels(cfg: PipelineConfig, ds: Dataset) -> list[list]:
    # both label sources train on the same split; evaluation is against window truth
    c = cfg.labels
    tr, te = stratified_split(ds.y_window, cfg.learn.test_fraction, c.seed)
    rows = []
    for algo in c.models:
        with stage(f"labels:{ds.name}:{algo}"):
            spec = _spec(cfg.learn.params, algo, c.seed)
            if len(np.unique(ds.y_snort[tr])) < 2:
                snort = (float("nan"),) * 3
            else:
                snort = _fit_eval(spec, ds.X, ds.y_snort, ds.y_window, tr, te)
            window = _fit_eval(spec, ds.X, ds.y_window, ds.y_window, tr, te)
            rows.append([ds.name, algo, *snort, *window])
    return rows


def exp_feature_sets(cfg: PipelineConfig, ds: Dataset) -> list[list]:
    c = cfg.feature_sets
    tr, te = stratified_split(ds.y, cfg.learn.test_fraction, c.seed)
    rows = []
    for algo in c.models:
        row = [ds.name, algo]
        for s in c.sets:
            with stage(f"feature_sets:{ds.name}:{s}:{algo}"):
                row += _fit_eval(_spec(cfg.learn.params, algo, c.seed), ds.X.select(FEATURE_SETS[s]),
                                 ds.y, ds.y, tr, te)
        rows.append(row)
    return rows


def exp_reduction(cfg: PipelineConfig, ds: Dataset) -> tuple[list[list], list[list]]:
    c = cfg.reduction
    tr, te = stratified_split(ds.y, cfg.learn.test_fraction, c.seed)
    with stage(f"reduction:{ds.name}"):
        Xtr = ds.X.take(tr)
        pca, Ztr = pca_fit_transform(Xtr, c.pca_threshold)
        Zte = pca.transform(ds.X.take(te))
        scores = shapiro_rank(Xtr, seed=c.seed)
        keep = select_features(scores, c.shapiro_cutoff)
    names = [f"pc{i + 1}" for i in range(pca.k)]
    Zall = np.zeros((len(ds.y), pca.k))
    Zall[tr], Zall[te] = Ztr, Zte
    Z = FeatureMatrix(Zall, _infos(names))
    rows = []
    for algo in c.models:
        with stage(f"reduction:{ds.name}:{algo}"):
            spec = _spec(cfg.learn.params, algo, c.seed)
            full = _fit_eval(spec, ds.X, ds.y, ds.y, tr, te)
            red = _fit_eval(spec, Z, ds.y, ds.y, tr, te)
            sel = _fit_eval(spec, ds.X.select(keep), ds.y, ds.y, tr, te) if keep else (float("nan"),) * 3
            rows.append([ds.name, algo, *full, *red, *sel])
    ranking = [[ds.name, n, scores[n], n in keep] for n in sorted(scores, key=lambda n: (-scores[n], n))]
    ranking.append([ds.name, "__pca_components__", float(pca.k), True])
    return rows, ranking


def _subsample(n: int, limit: int, seed: int) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, limit, replace=False))


def _scores(X, labels, truth) -> dict:
    if len(np.unique(labels)) < 2:
        return {"S": float("nan"), "CH": float("nan"), "AR": adjusted_rand(truth, labels), "DB": float("nan")}
    q = cluster_quality(X, labels)
    return {"S": q["silhouette"], "CH": q["calinski_harabasz"], "AR": adjusted_rand(truth, labels),
            "DB": q["davies_bouldin"]}


def exp_clustering(cfg: PipelineConfig, ds: Dataset) -> tuple[list[list], list[list]]:
    c = cfg.clustering
    rows_k, rows_alt = [], []
    idx = _subsample(len(ds.y), c.max_rows, c.seed)
    X, truth = ds.X.values[idx], ds.y_window[idx]
    rng = np.random.default_rng(c.seed)
    alt_sets = [np.sort(rng.choice(len(X), max(c.robustness_k + 1, int(c.resample_fraction * len(X))),
                                   replace=False)) for _ in range(c.resamples)]
    for algo in c.algos:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for k in range(c.k_min, min(c.k_max, len(X) - 1) + 1):
                with stage(f"clustering:{ds.name}:{algo}:k={k}"):
                    res = cluster(algo, X, k, c.seed)
                    s = _scores(X, res.labels, truth)
                rows_k.append([ds.name, algo, k, s["S"], s["CH"], s["AR"], s["DB"]])
            for r, sub in enumerate(alt_sets):
                with stage(f"clustering:{ds.name}:{algo}:resample={r}"):
                    res = cluster(algo, X[sub], c.robustness_k, c.seed)
                    s = _scores(X[sub], res.labels, truth[sub])
                rows_alt.append([ds.name, algo, r, s["S"], s["CH"], s["AR"], s["DB"]])
    return rows_k, rows_alt


def exp_manifold(cfg: PipelineConfig, ds: Dataset) -> list[list]:
    c = cfg.manifold
    idx = _subsample(len(ds.y), c.n_samples, c.seed)
    X, y = ds.X.values[idx], ds.y[idx]
    tr, te = stratified_split(y, cfg.learn.test_fraction, c.seed)
    rows = []
    for algo in c.algos:
        # embed the training rows; test rows are placed out of sample by barycentric interpolation
        with stage(f"manifold:{ds.name}:{algo}"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            emb = embed(algo, X[tr], c.d, c.params.get(algo), c.seed)
            coords = np.zeros((len(y), c.d))
            coords[tr], coords[te] = emb.coords, emb.transform(X[te])
        Y = FeatureMatrix(coords, _infos([f"e{i + 1}" for i in range(c.d)]))
        row = [ds.name, algo]
        for model in c.models:
            with stage(f"manifold:{ds.name}:{algo}:{model}"):
                row.append(_fit_eval(_spec(cfg.learn.params, model, c.seed), Y, y, y, tr, te)[0])
        rows.append(row)
    return rows


def exp_cotrain(cfg: PipelineConfig, ds: Dataset) -> list[list]:
    c = cfg.cotrain
    rows = []
    for seed in c.seeds:
        tr, te = stratified_split(ds.y, cfg.learn.test_fraction, seed)
        lab, unl = labeled_unlabeled_split(len(tr), tuple(c.ratio), seed)
        L = (ds.X.take(tr[lab]), ds.y[tr[lab]])
        for algo in c.bases:
            with stage(f"cotrain:{ds.name}:{algo}:seed={seed}"):
                spec = _spec(cfg.learn.params, algo, seed)
                sup = evaluate(ds.y[te], train(spec, *L).predict(ds.X.take(te)), classes=[0, 1]).row()
                cm = cotrain_fit(spec, L, ds.X.take(tr[unl]), ViewSplit(), c.max_loops)
                pred, _ = cotrain_predict(cm, ds.X.take(te))
                co = evaluate(ds.y[te], pred, classes=[0, 1]).row()
            rows.append([ds.name, algo, seed, *sup, *co, cm.loops])
    return rows


# --- orchestration ----------------------------------------------------------

_EXPERIMENTS = {"learn": exp_learn, "labels": exp_labels, "feature_sets": exp_feature_sets,
                "reduction": exp_reduction, "clustering": exp_clustering, "manifold": exp_manifold,
                "cotrain": exp_cotrain}


def _run_entry(args):
    cfg, name, kind, ds = args
    return (name, kind), _EXPERIMENTS[kind](cfg, ds)


def _mean_rows(rows, key_cols, value_cols):
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[i] for i in key_cols), []).append([r[i] for i in value_cols])
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan columns stay nan
        for key, vals in groups.items():
            out.append([*key, *np.nanmean(np.asarray(vals, float), axis=0)])
    return out


def _opt_k(rows_k, algos):
    # best k per metric: larger is better except Davies-Bouldin
    out = []
    for algo in algos:
        sub = [r for r in rows_k if r[1] == algo]
        if not sub:
            continue
        ks = [r[2] for r in sub]
        row = [algo]
        for col, better in ((3, max), (4, max), (5, max), (6, min)):
            vals = np.array([r[col] for r in sub], float)
            if np.all(np.isnan(vals)):
                row.append("nan")
                continue
            target = np.nanmax(vals) if better is max else np.nanmin(vals)
            row.append(ks[int(np.flatnonzero(vals == target)[0])])
        out.append(row)
    return out


def _robustness(rows_k, rows_alt, algos):
    out = []
    for mi, metric in enumerate(("S", "CH", "AR", "DB")):
        for algo in algos:
            a = [r[3 + mi] for r in rows_k if r[1] == algo and not math.isnan(r[3 + mi])]
            b = [r[3 + mi] for r in rows_alt if r[1] == algo and not math.isnan(r[3 + mi])]
            if not a or not b:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pa, pb = robustness_stats(a), robustness_stats(b)
            out.append([metric, algo, pa.mean, pa.variance, pa.nvar, pb.mean, pb.variance, pb.nvar])
    return out


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> Report:
    cfg.validate()
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.out)
    datasets = [prepare(cfg, e, out) for e in cfg.scenarios]
    tables: list[Table] = []

    for ds in datasets:
        with stage(f"correlation:{ds.name}"):
            corr = pearson_matrix(ds.X)
        tables.append(Table(f"correlation_{ds.name}", f"Pearson correlation ({ds.name})", ["feature", *corr.names],
                            [[n, *row] for n, row in zip(corr.names, corr.values)]))
        if cfg.emit_fused:
            buf = out / f"fused_{ds.name}.csv"
            out.mkdir(parents=True, exist_ok=True)
            write_table_csv(buf, ds.table, assign_labels(ds.table, "attack_window", _windows(ds)))

    enabled = [k for k in _EXPERIMENTS if getattr(cfg, k).enabled]
    jobs = [(cfg, ds.name, kind, ds) for ds in datasets for kind in enabled]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = dict(pool.map(_run_entry, jobs))
    else:
        results = dict(_run_entry(j) for j in jobs)

    def gather(kind, part=None):
        rows = []
        for ds in datasets:
            r = results[(ds.name, kind)]
            rows += r if part is None else r[part]
        return rows

    prf = ["F1", "Rec", "Prec"]
    if "learn" in enabled:
        rows = gather("learn")
        tables.append(Table("classifiers", "Classifier F1 per scenario",
                            ["scenario", "uc", "masters", "pi_s", "classifier", *prf, "tuned_F1", "tuned_params"],
                            rows))
        models = cfg.learn.models
        wide = []
        for ds in datasets:
            sub = {r[4]: r for r in rows if r[0] == ds.name}
            wide.append([ds.name, sub[models[0]][1], sub[models[0]][2], sub[models[0]][3],
                         *[sub[m][5] for m in models]])
        tables.append(Table("scenarios", "F1 by scenario and classifier", ["scenario", "uc", "masters", "pi_s", *models],
                            wide))
    if "labels" in enabled:
        rows = gather("labels")
        snort_w = [f"snort_{m}" for m in prf] + [f"window_{m}" for m in prf]
        tables.append(Table("labels_by_scenario", "Label source comparison per scenario",
                            ["scenario", "classifier", *snort_w], rows))
        tables.append(Table("labels", "Label source comparison (mean over scenarios)", ["classifier", *snort_w],
                            _mean_rows(rows, [1], range(2, 8))))
    if "feature_sets" in enabled:
        rows = gather("feature_sets")
        hdr = [f"{s}_{m}" for s in cfg.feature_sets.sets for m in prf]
        tables.append(Table("feature_sets_by_scenario", "Feature set comparison per scenario",
                            ["scenario", "classifier", *hdr], rows))
        tables.append(Table("feature_sets", "Feature set comparison (mean over scenarios)", ["classifier", *hdr],
                            _mean_rows(rows, [1], range(2, 2 + len(hdr)))))
    if "reduction" in enabled:
        rows = gather("reduction", 0)
        hdr = [f"{s}_{m}" for s in ("all", "pca", "shapiro") for m in prf]
        tables.append(Table("reduction", "All features vs PCA vs Shapiro selection (mean over scenarios)",
                            ["classifier", *hdr], _mean_rows(rows, [1], range(2, 11))))
        tables.append(Table("shapiro_ranking", "Shapiro-Wilk feature scores",
                            ["scenario", "feature", "W", "selected"], gather("reduction", 1)))
    if "clustering" in enabled:
        rows_k, rows_alt = gather("clustering", 0), gather("clustering", 1)
        hdr = ["S", "CH", "AR", "DB"]
        tables.append(Table("clustering_scores", "Cluster quality by k", ["scenario", "algo", "k", *hdr], rows_k))
        opt = []
        for ds in datasets:
            opt += [[ds.name, *r] for r in _opt_k([r for r in rows_k if r[0] == ds.name], cfg.clustering.algos)]
        tables.append(Table("clustering_opt", "Optimal cluster count per metric", ["scenario", "algo", *hdr], opt))
        tables.append(Table("clustering_robustness", "Robustness: effect of k and of data resampling",
                            ["metric", "algo", "param_mean", "param_var", "param_nvar", "data_mean", "data_var",
                             "data_nvar"], _robustness(rows_k, rows_alt, cfg.clustering.algos)))
    if "manifold" in enabled:
        rows = gather("manifold")
        models = cfg.manifold.models
        tables.append(Table("manifold_by_scenario", "Classifier F1 on embeddings per scenario",
                            ["scenario", "manifold", *models], rows))
        tables.append(Table("manifold", "Classifier F1 on embeddings (mean over scenarios)", ["manifold", *models],
                            _mean_rows(rows, [1], range(2, 2 + len(models)))))
    if "cotrain" in enabled:
        rows = gather("cotrain")
        hdr = [f"supervised_{m}" for m in prf] + [f"cotrain_{m}" for m in prf]
        tables.append(Table("cotrain_by_seed", "Supervised vs co-training per scenario and seed",
                            ["scenario", "classifier", "seed", *hdr, "loops"], rows))
        tables.append(Table("cotrain", "Supervised vs co-training (mean over scenarios and seeds)",
                            ["classifier", *hdr], _mean_rows(rows, [1], range(3, 9))))

    provenance = {
        "config_hash": cfg.digest(),
        "config": cfg.hashed(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scenarios": {ds.name: {"seed": ds.meta.get("seed"), "rows": len(ds.y),
                                "attacked_rows": int(ds.y_window.sum())} for ds in datasets},
        "seeds": {k: getattr(cfg, k).seed if hasattr(getattr(cfg, k), "seed") else getattr(cfg, k).seeds
                  for k in _EXPERIMENTS},
        "tables": [t.name for t in tables],
    }
    report = Report(tables, provenance)
    report.write(out)
    return report


def _windows(ds: Dataset):
    return [AttackWindow(int(w["start_us"]), int(w["end_us"]), str(w["kind"])) for w in ds.meta["windows"]]


def compare_labels(table_csv) -> Table:
    """Per-classifier F1 under Snort labels, under window labels, and the delta."""
    with open(table_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "snort_F1" not in rows[0] or "window_F1" not in rows[0]:
        raise ConfigError(f"{table_csv} is not a label comparison table")
    out = []
    for r in rows:
        s, w = float(r["snort_F1"]), float(r["window_F1"])
        out.append([r["classifier"], s, w, w - s])
    return Table("labels_delta", "F1 change from Snort labels to attack-window labels",
                 ["classifier", "snort_F1", "window_F1", "delta_F1"], out)
