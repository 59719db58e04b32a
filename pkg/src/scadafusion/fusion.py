"""Time-aligned merge of capture, flow, alert and DNP3 streams into the fused table.

A table is a list of dicts keyed by ``ts_us`` plus the 28 schema columns;
``None`` marks a cell no source populated.  Imputation replaces those with
the schema defaults, encoding turns the table into a numeric
:class:`FeatureMatrix`.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dnp3
from .errors import (ConfigError, DataError, Dnp3Error, DuplicateTimestamp, MissingWindows,
                     NonFiniteInput, UnsortedInput)
from .features import (COLUMNS, DEFAULTS, KINDS, NAN, PHYSICAL_COLUMNS, hex8,
                       payload_signature)
from .ingest import (build_cyber_table, load_alert_events, load_capture,
                     load_flow_events)

log = logging.getLogger(__name__)

ALERT_PRIORITY = {"DNP3": 0, "ARP_SPOOF": 1, "ICMP_FLOOD": 2, "OTHER": 3}
LABEL_MODES = ("snort", "attack_window")
PHYSICAL_MODES = ("impute", "drop")
SCALE_METHODS = ("minmax", "log_then_minmax", "none")


@dataclass(frozen=True)
class AttackWindow:
    start_us: int
    end_us: int
    kind: str

    def __post_init__(self):
        if not self.start_us < self.end_us:
            raise DataError("attack window must have start < end")

    def to_json(self):
        return {"start_us": self.start_us, "end_us": self.end_us, "kind": self.kind}


@dataclass
class LabelVector:
    labels: np.ndarray
    mode: str

    def __len__(self):
        return len(self.labels)


@dataclass
class ColumnInfo:
    name: str
    kind: str
    encoder: dict | None = None
    # (log_shift or None, lo, hi) once scaled
    scaling: tuple | None = None


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: list[ColumnInfo]
    ts_us: np.ndarray | None = None

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def shape(self):
        return self.values.shape

    def select(self, names) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(self.values[:, idx], [self.columns[i] for i in idx], self.ts_us)

    def take(self, rows) -> "FeatureMatrix":
        ts = None if self.ts_us is None else self.ts_us[rows]
        return FeatureMatrix(self.values[rows], self.columns, ts)


def _times(cb):
    t = np.fromiter((r["ts_us"] for r in cb), dtype=np.int64, count=len(cb))
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise UnsortedInput("cyber table must be sorted by ts_us")
    return t


def flow_targets(t: np.ndarray, start: int, end: int) -> range:
    """Record indices a flow event contributes to.

    For records i < N-1 the three merge conditions together amount to the
    closed intervals [t_i, t_{i+1}] and [start, end] overlapping; the last
    record's interval is [t_{N-1}, +inf).
    """
    n = len(t)
    if n == 0:
        return range(0)
    hi = int(np.searchsorted(t, end, side="right")) - 1
    lo = max(int(np.searchsorted(t, start, side="left")) - 1, 0)
    return range(lo, hi + 1)


def merge_flow_features(cb: list[dict], flows) -> list[dict]:
    t = _times(cb)
    n = len(cb)
    cnt = np.zeros(n + 1, dtype=np.int64)
    fin = np.zeros(n + 1, dtype=np.int64)
    pk = np.zeros(n + 1, dtype=np.int64)
    for f in flows:
        r = flow_targets(t, f.event_start_us, f.event_end_us)
        if len(r) == 0:
            continue
        cnt[r.start] += 1
        cnt[r.stop] -= 1
        if f.flow_final:
            fin[r.start] += 1
            fin[r.stop] -= 1
        pk[r.start] += f.source_packets
        pk[r.stop] -= f.source_packets
    cnt, fin, pk = np.cumsum(cnt)[:n], np.cumsum(fin)[:n], np.cumsum(pk)[:n]
    out = []
    for i, rec in enumerate(cb):
        rec = dict(rec)
        if cnt[i]:
            rec["Flow Cnt"] = (rec["Flow Cnt"] or 0) + int(cnt[i])
            rec["Flow Fin Cnt"] = (rec["Flow Fin Cnt"] or 0) + int(fin[i])
            rec["Packets"] = (rec["Packets"] or 0) + int(pk[i])
        out.append(rec)
    return out


def alert_target(t: np.ndarray, ts: int) -> int:
    """Index of the record whose interval [t_i, t_{i+1}) holds ``ts``; -1 if before all."""
    return int(np.searchsorted(t, ts, side="right")) - 1


def merge_alerts(cb: list[dict], alerts) -> list[dict]:
    t = _times(cb)
    out = [dict(r) for r in cb]
    for a in alerts:
        i = alert_target(t, a.ts_us)
        if i < 0:
            continue
        rec = out[i]
        rec["Snort Alert"] = 1
        cur = rec["Alert Type"]
        if cur in (None, NAN) or ALERT_PRIORITY[a.alert_type] < ALERT_PRIORITY[cur]:
            rec["Alert Type"] = a.alert_type
    return out


def physical_columns(p: dnp3.PhysicalRecord) -> dict:
    def opt(v, f=int):
        return None if v is None else f(v)
    return {
        "LL Src": p.ll_src,
        "LL Dest": p.ll_dest,
        "LL Len": p.ll_len,
        "LL Ctrl": hex8(p.ll_ctrl),
        "TL Ctrl": opt(p.tl_ctrl, hex8),
        "Func. code": opt(p.function_code),
        "AL Ctrl": opt(p.al_ctrl, hex8),
        "Obj count": opt(p.obj_count),
        "AL Payload": None if p.al_payload is None else payload_signature(p.al_payload),
    }


def fuse_physical(cb: list[dict], phys, mode: str = "impute") -> list[dict]:
    """Join physical records onto cyber rows by exact timestamp."""
    if mode not in PHYSICAL_MODES:
        raise ConfigError(f"physical mode must be one of {PHYSICAL_MODES}")
    by_ts: dict[int, list] = {}
    for ts, p in phys:
        by_ts.setdefault(ts, []).append(p)
    if any(len(v) > 1 for v in by_ts.values()):
        warnings.warn("several physical records share a timestamp; matching in order",
                      DuplicateTimestamp)
    # rows that carry DNP3 get first claim on a timestamp's records
    slots: dict[int, list[int]] = {}
    for i, rec in enumerate(cb):
        if rec["ts_us"] in by_ts:
            slots.setdefault(rec["ts_us"], []).append(i)
    assigned: dict[int, dnp3.PhysicalRecord] = {}
    for ts, rows in slots.items():
        dnp = [i for i in rows if "dnp3" in str(cb[i].get("Frame Prot.") or "")]
        order = dnp + [i for i in rows if i not in dnp]
        for i, p in zip(order, by_ts[ts]):
            assigned[i] = p
    out = []
    for i, rec in enumerate(cb):
        p = assigned.get(i)
        if p is None and mode == "drop":
            continue
        rec = dict(rec)
        if p is not None:
            rec.update(physical_columns(p))
        out.append(rec)
    return out


def impute(table: list[dict]) -> list[dict]:
    out = []
    for rec in table:
        rec = dict(rec)
        for name in COLUMNS:
            if rec.get(name) is None:
                rec[name] = DEFAULTS[name]
        out.append(rec)
    return out


def encode(table: list[dict], reference: FeatureMatrix | None = None) -> FeatureMatrix:
    """Label-encode categorical columns independently (codes in sorted category order).

    With ``reference``, that matrix's encoders are reused and unseen
    categories get code -1.
    """
    n = len(table)
    values = np.empty((n, len(COLUMNS)), dtype=np.float64)
    columns = []
    ref = {c.name: c for c in reference.columns} if reference is not None else None
    for j, name in enumerate(COLUMNS):
        col = [rec[name] for rec in table]
        if any(v is None for v in col):
            raise DataError(f"column {name!r} has absent cells; impute first")
        if KINDS[name] == "categorical":
            if ref is not None:
                enc = ref[name].encoder
            else:
                enc = {c: k for k, c in enumerate(sorted({str(v) for v in col}))}
            values[:, j] = [enc.get(str(v), -1) for v in col]
            columns.append(ColumnInfo(name, "categorical", enc))
        else:
            try:
                values[:, j] = [float(v) for v in col]
            except (TypeError, ValueError):
                raise DataError(f"non-numeric value in numeric column {name!r}") from None
            columns.append(ColumnInfo(name, "numeric"))
    ts = np.fromiter((r["ts_us"] for r in table), dtype=np.int64, count=n)
    return FeatureMatrix(values, columns, ts)


def scale(m: FeatureMatrix, method: str = "minmax", reference: FeatureMatrix | None = None) -> FeatureMatrix:
    """Column-wise min-max scaling, optionally after a log transform of numeric columns.

    Constant columns map to 0.  With ``reference`` the parameters stored on
    that (already scaled) matrix are applied instead of being fitted.
    """
    if method not in SCALE_METHODS:
        raise ConfigError(f"scale method must be one of {SCALE_METHODS}")
    X = np.asarray(m.values, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("matrix has non-finite entries")
    if method == "none":
        return FeatureMatrix(X.copy(), list(m.columns), m.ts_us)
    out = np.empty_like(X)
    cols = []
    for j, info in enumerate(m.columns):
        x = X[:, j]
        if reference is not None:
            shift, lo, hi = reference.columns[j].scaling
        else:
            shift = None
            if method == "log_then_minmax" and info.kind == "numeric":
                mn = float(x.min()) if len(x) else 0.0
                shift = -mn if mn < 0 else 0.0
            lo, hi = (float(x.min()), float(x.max())) if len(x) else (0.0, 0.0)
            if shift is not None:
                lo, hi = math.log1p(lo + shift), math.log1p(hi + shift)
        if shift is not None:
            x = np.log1p(np.maximum(x + shift, 0.0))
        out[:, j] = (x - lo) / (hi - lo) if hi > lo else 0.0
        cols.append(replace(info, scaling=(shift, lo, hi)))
    return FeatureMatrix(out, cols, m.ts_us)


def assign_labels(table, mode: str, windows=None) -> LabelVector:
    """Per-row class: 1 = attacked, 0 = normal."""
    if mode not in LABEL_MODES:
        raise ConfigError(f"label mode must be one of {LABEL_MODES}")
    if mode == "snort":
        lab = np.array([1 if rec["Snort Alert"] == 1 else 0 for rec in table], dtype=np.int64)
        return LabelVector(lab, mode)
    if windows is None:
        raise MissingWindows("attack_window labels need the ground-truth windows")
    ts = np.fromiter((r["ts_us"] for r in table), dtype=np.int64, count=len(table))
    lab = np.zeros(len(ts), dtype=np.int64)
    for w in windows:
        lab[(ts >= w.start_us) & (ts <= w.end_us)] = 1
    return LabelVector(lab, mode)


# --- bundle-level procedure -------------------------------------------------

def extract_physical_records(pkts) -> list[tuple[int, dnp3.PhysicalRecord]]:
    out = []
    for p in pkts:
        if p.dnp3_bytes is None:
            continue
        try:
            frame = dnp3.parse_link_frame(p.dnp3_bytes)
        except Dnp3Error as exc:
            log.warning("dropping DNP3 payload at %d: %s", p.ts_us, exc)
            continue
        try:
            rec = dnp3.extract_physical(frame)
        except Dnp3Error as exc:
            log.info("application layer unparsed at %d: %s", p.ts_us, exc)
            rec = dnp3.partial_physical(frame)
        out.append((p.ts_us, rec))
    return out


def load_windows(manifest_path) -> list[AttackWindow]:
    with open(manifest_path, encoding="utf-8") as fh:
        man = json.load(fh)
    return [AttackWindow(int(w["start_us"]), int(w["end_us"]), str(w["kind"])) for w in man["windows"]]


def fuse_bundle(bundle_dir, physical_mode: str = "drop") -> list[dict]:
    """Run the full merge procedure on a scenario directory and impute the result."""
    d = Path(bundle_dir)
    pkts = load_capture(d / "capture.jsonl")
    cb = build_cyber_table(pkts)
    cb = merge_alerts(cb, load_alert_events(d / "alerts.jsonl"))
    cb = merge_flow_features(cb, load_flow_events(d / "flows.jsonl"))
    fused = fuse_physical(cb, extract_physical_records(pkts), physical_mode)
    return impute(fused)


# --- CSV --------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table_csv(path, table: list[dict], labels: LabelVector | None = None) -> None:
    header = ["ts_us", *COLUMNS] + (["label"] if labels is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, rec in enumerate(table):
            row = [_fmt(rec["ts_us"])] + [_fmt(rec[c]) for c in COLUMNS]
            if labels is not None:
                row.append(str(int(labels.labels[i])))
            w.writerow(row)


def _parse_number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def read_table_csv(path) -> tuple[list[dict], np.ndarray | None]:
    """Inverse of :func:`write_table_csv`; returns the table and labels if present."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty CSV")
    header = rows[0]
    missing = [c for c in ("ts_us", *COLUMNS) if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    pos = {name: k for k, name in enumerate(header)}
    table, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            rec = {"ts_us": int(row[pos["ts_us"]])}
            for c in COLUMNS:
                s = row[pos[c]]
                if s == "":
                    rec[c] = None
                elif KINDS[c] == "numeric":
                    rec[c] = _parse_number(s)
                else:
                    rec[c] = s
            if "label" in pos:
                labels.append(int(row[pos["label"]]))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        table.append(rec)
    return table, (np.array(labels, dtype=np.int64) if "label" in pos else None)
