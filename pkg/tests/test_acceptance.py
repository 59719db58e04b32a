"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that the terminal summary prints
under "acceptance criteria"; run ``pytest tests/test_acceptance.py -v``.
"""
import filecmp
import math
import time
import warnings

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from scadafusion import dnp3
from scadafusion.cluster import adjusted_rand, calinski_harabasz, cluster, davies_bouldin, silhouette
from scadafusion.cotrain import cotrain_fit, cotrain_predict, labeled_unlabeled_split
from scadafusion.errors import Dnp3Error
from scadafusion.featan import pca_fit_transform
from scadafusion.features import COLUMNS, CYBER_COLUMNS
from scadafusion.fusion import assign_labels, encode, fuse_bundle, merge_alerts, merge_flow_features, scale
from scadafusion.ingest import AlertEvent, FlowEvent, load_capture
from scadafusion.learn import ALGOS, ClassifierSpec, evaluate, stratified_split, train
from scadafusion.manifold import conditional_p, joint_p, lle_weights, smacof
from scadafusion.pipeline import config_from_dict, run_pipeline
from scadafusion.scenario import ScenarioSpec, generate_scenario

from conftest import blobs, two_view_blobs
from test_pipeline import SMALL


def verdict(record_property, n, title, ok, detail=""):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    record_property("acceptance", line)
    print(line)
    assert ok, line


def quiet_bundle(path, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_scenario(ScenarioSpec(**kw), path)


def fused_bundle(bundle):
    table = fuse_bundle(bundle.directory)
    return table, scale(encode(table)), assign_labels(table, "attack_window", bundle.windows).labels


# --- 1 ----------------------------------------------------------------------

def oracle_flows(t, s, e, fin, pk):
    nxt = np.r_[t[1:], np.inf]
    ti, ni = t[:, None], nxt[:, None]
    hit = ((ti <= s) & (ni >= s)) | ((ti <= e) & (ni >= e)) | ((ti >= s) & (ni <= e))
    return hit.sum(1), (hit & fin).sum(1), (hit * pk).sum(1)


def oracle_alerts(t, tau):
    nxt = np.r_[t[1:], np.inf]
    hit = (t[:, None] <= tau) & (tau <= nxt[:, None])
    # a timestamp on a shared boundary belongs to the later record
    return np.array([np.flatnonzero(col).max() if col.any() else -1 for col in hit.T])


def test_criterion_01_merge_oracle(record_property):
    rng = np.random.default_rng(2024)
    bad, spent = 0, 0.0
    for _ in range(100):
        n, m = int(rng.integers(1, 501)), int(rng.integers(0, 501))
        t = np.sort(rng.integers(0, 100_000, n))
        s = rng.integers(-5_000, 105_000, m)
        e = s + rng.integers(0, 3_000, m)
        fin, pk = rng.integers(0, 2, m).astype(bool), rng.integers(1, 40, m)
        tau = rng.integers(-1_000, 101_000, m)
        kinds = rng.choice(["DNP3", "ARP_SPOOF", "ICMP_FLOOD", "OTHER"], m)
        cb = [{"ts_us": int(v), "Flow Cnt": None, "Flow Fin Cnt": None, "Packets": None, "Snort Alert": None,
               "Alert Type": None} for v in t]
        flows = [FlowEvent(int(a), int(b), "f", bool(c), int(d), int(b - a)) for a, b, c, d in zip(s, e, fin, pk)]
        alerts = [AlertEvent(int(a), str(k), 1) for a, k in zip(tau, kinds)]
        t0 = time.perf_counter()
        got_f = merge_flow_features(cb, flows)
        got_a = merge_alerts(cb, alerts)
        spent += time.perf_counter() - t0
        cnt, fc, pkts = oracle_flows(t, s, e, fin, pk)
        want_f = [(int(a), int(b), int(c)) if a else (None, None, None) for a, b, c in zip(cnt, fc, pkts)]
        bad += [(r["Flow Cnt"], r["Flow Fin Cnt"], r["Packets"]) for r in got_f] != want_f
        rows = oracle_alerts(t, tau)
        prio = {"DNP3": 0, "ARP_SPOOF": 1, "ICMP_FLOOD": 2, "OTHER": 3}
        want_a = [None] * n
        for r, k in zip(rows, kinds):
            if r >= 0 and (want_a[r] is None or prio[k] < prio[want_a[r]]):
                want_a[r] = str(k)
        bad += [r["Alert Type"] for r in got_a] != want_a
    verdict(record_property, 1, "merge engine equals brute-force conditions", bad == 0 and spent < 10,
            f"{bad} mismatching merges of 200, {spent:.2f}s")


# --- 2 ----------------------------------------------------------------------

def block_crc_fails(frame: bytes, byte: int) -> bool:
    """Recompute the CRC of the block holding ``byte`` under the original block layout."""
    if byte < 10:
        lo, hi = 0, 10
    else:
        lo = 10 + (byte - 10) // 18 * 18
        hi = min(lo + 18, len(frame))
    block = frame[lo:hi]
    return dnp3.crc16_dnp(block[:-2]) != int.from_bytes(block[-2:], "little")


def test_criterion_02_parser_round_trip(tmp_path, record_property):
    t0 = time.perf_counter()
    b = quiet_bundle(tmp_path / "b", n_masters=10, n_outstations=5, polling_interval_s=10.0, duration_s=1200.0,
                     seed=1)
    frames = [p.dnp3_bytes for p in load_capture(b.capture_path) if p.dnp3_bytes][:10_000]
    round_trip = sum(dnp3.serialize_link_frame(dnp3.parse_link_frame(f)) == f for f in frames)
    rng = np.random.default_rng(0)
    flips = accepted = crc_silent = 0
    for i in rng.choice(len(frames), 1000, replace=False):
        f = frames[i]
        for bit in range(len(f) * 8):
            g = bytearray(f)
            g[bit // 8] ^= 1 << (bit % 8)
            g = bytes(g)
            flips += 1
            try:
                dnp3.parse_link_frame(g)
                accepted += 1
            except Dnp3Error:
                pass
            crc_silent += not block_crc_fails(g, bit // 8)
    spent = time.perf_counter() - t0
    ok = len(frames) == 10_000 and round_trip == 10_000 and accepted == 0 and crc_silent == 0 and spent < 30
    verdict(record_property, 2, "DNP3 frames round-trip; single-bit flips rejected", ok,
            f"{round_trip}/{len(frames)} identical, {accepted}/{flips} flips accepted, "
            f"{crc_silent} flips invisible to CRC, {spent:.1f}s")


# --- 3 ----------------------------------------------------------------------

def test_criterion_03_fusion_impact(tmp_path, record_property):
    t0 = time.perf_counter()
    gains = {}
    for uc in ("UC1", "UC2", "UC3", "UC4"):
        b = quiet_bundle(tmp_path / uc, use_case=uc, seed=11)
        _, X, y = fused_bundle(b)
        tr, te = stratified_split(y, 0.3, 0)
        for algo in ("DT", "RF"):
            f1 = []
            for cols in (CYBER_COLUMNS, COLUMNS):
                M = X.select(cols)
                m = train(ClassifierSpec(algo, seed=0), M.take(tr), y[tr])
                f1.append(evaluate(y[te], m.predict(M.take(te))).weighted_f1)
            gains[f"{uc}/{algo}"] = f1[1] - f1[0]
    spent = time.perf_counter() - t0
    ok = min(gains.values()) >= 0.05 and spent < 300
    verdict(record_property, 3, "cyber-physical beats pure-cyber F1 by >= 0.05", ok,
            ", ".join(f"{k} +{v:.3f}" for k, v in gains.items()) + f", {spent:.0f}s")


# --- 4 ----------------------------------------------------------------------

def test_criterion_04_label_source(tmp_path, record_property):
    b = quiet_bundle(tmp_path / "b", use_case="UC1", seed=11, snort_detect_prob=0.8, snort_false_alarm_rate=0.05)
    table, X, y_win = fused_bundle(b)
    y_snort = assign_labels(table, "snort").labels
    tr, te = stratified_split(y_win, 0.3, 0)

    def f1(labels):
        m = train(ClassifierSpec("DT", seed=0), X.take(tr), labels[tr])
        return evaluate(y_win[te], m.predict(X.take(te))).weighted_f1

    window, snort = f1(y_win), f1(y_snort)
    verdict(record_property, 4, "attack-window labels beat Snort labels by >= 0.05 (DT)", window - snort >= 0.05,
            f"window {window:.3f}, snort {snort:.3f}")


# --- 5 ----------------------------------------------------------------------

def cotrain_gap(X, y, split, algo, seed, max_loops=50):
    tr, te = stratified_split(y, 0.3, seed)
    lab, unl = labeled_unlabeled_split(len(tr), (1, 2), seed)
    spec = ClassifierSpec(algo, seed=seed)
    L = (X.take(tr[lab]), y[tr[lab]])
    sup = evaluate(y[te], train(spec, *L).predict(X.take(te))).weighted_f1
    cm = cotrain_fit(spec, L, X.take(tr[unl]), split, max_loops)
    co = evaluate(y[te], cotrain_predict(cm, X.take(te))[0]).weighted_f1
    return sup, co


def test_criterion_05_cotrain_parity(tmp_path, record_property):
    gaps = {}
    for algo in ("DT", "RF", "LR"):
        for seed in range(5):
            X, y, split = two_view_blobs(600, seed)
            sup, co = cotrain_gap(X, y, split, algo, seed)
            gaps[(algo, seed)] = sup - co
    worst = {a: max(abs(g) for (b, _), g in gaps.items() if b == a) for a in ("DT", "RF", "LR")}

    # generator data, reported but not asserted: see the notes on tie-heavy tree votes
    b = quiet_bundle(tmp_path / "g", use_case="UC1", seed=11)
    _, Xg, yg = fused_bundle(b)
    gen = [cotrain_gap(Xg, yg, None, "DT", s) for s in range(5)]
    info = ", ".join(f"{s - c:+.3f}" for s, c in gen)
    print(f"generator-data DT gaps (supervised - co-trained) per seed: {info}")
    verdict(record_property, 5, "co-training within 0.10 of supervised F1 at 1:2 (DT/RF/LR, 5 seeds)",
            max(worst.values()) <= 0.10,
            ", ".join(f"{a} max gap {w:.3f}" for a, w in worst.items()) + f"; generator DT gaps {info}")


# --- 6 ----------------------------------------------------------------------

def test_criterion_06_cluster_count(tmp_path, record_property):
    b = quiet_bundle(tmp_path / "b", use_case="UC1", seed=11)
    table, X, _ = fused_bundle(b)
    kinds = {r["Alert Type"] for r in table}
    idx = np.sort(np.random.default_rng(0).choice(len(table), 1500, replace=False))
    A = X.values[idx]
    best = {}
    for algo in ("KMEANS", "AGGLOMERATIVE"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = [silhouette(A, cluster(algo, A, k, 0).labels) for k in range(2, 11)]
        best[algo] = int(np.argmax(s)) + 2
    ok = {"DNP3", "ARP_SPOOF"} <= kinds and all(k in (2, 3) for k in best.values())
    verdict(record_property, 6, "silhouette peaks at 2 or 3 clusters", ok,
            ", ".join(f"{a} k*={k}" for a, k in best.items()) + f"; alert types {sorted(kinds)}")


# --- 7 ----------------------------------------------------------------------

def test_criterion_07_metric_oracles(record_property):
    X = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], float)
    lab = [0, 0, 1, 1]
    b = (10 + math.sqrt(101)) / 2
    checks = {
        "silhouette": abs(silhouette(X, lab) - (b - 1) / b) <= 1e-6,
        "silhouette_ref": abs(silhouette(X, lab) - 0.9002487577582194) <= 1e-6,
        # between = 4 * 25, within = 4 * 0.25, (n - k) / (k - 1) = 2
        "CH": abs(calinski_harabasz(X, lab) - 200.0) <= 1e-6,
        # scatter 0.5 per cluster, centroid distance 10
        "DB": abs(davies_bouldin(X, lab) - 0.1) <= 1e-6,
        "ARI": adjusted_rand([0, 0, 1, 1], [0, 1, 0, 1]) == -0.5,
        "ARI_identity": adjusted_rand([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0,
    }
    verdict(record_property, 7, "cluster metrics match hand values", all(checks.values()),
            ", ".join(k for k, v in checks.items() if not v) or "all exact")


# --- 8 ----------------------------------------------------------------------

def test_criterion_08_numerics(record_property):
    rng = np.random.default_rng(8)
    fails = []
    for i in range(20):
        X = rng.normal(size=(30, 4))
        _, trace = smacof(squareform(pdist(X)), 2, i)
        if any(b > a * (1 + 1e-12) for a, b in zip(trace, trace[1:])):
            fails.append(f"smacof{i}")
    X = rng.normal(size=(80, 6)) @ rng.normal(size=(6, 6))
    model, Z = pca_fit_transform(X, 0.9)
    V = model.components
    if not np.allclose(V.T @ V, np.eye(model.k), atol=1e-8):
        fails.append("pca-orthonormal")
    if ((X - model.reconstruct(Z)) ** 2).sum() > 0.1 * model.total_variance + 1e-9:
        fails.append("pca-reconstruction")
    W = lle_weights(rng.normal(size=(60, 3)), 10).toarray()
    if not np.allclose(W.sum(axis=1), 1, atol=1e-9):
        fails.append("lle")
    Y = rng.normal(size=(70, 5))
    P = joint_p(Y, 15.0)
    if not np.allclose(P, P.T):
        fails.append("tsne-symmetry")
    C = conditional_p(squareform(pdist(Y)) ** 2, 15.0)
    perp = [2 ** (-(r[r > 0] * np.log2(r[r > 0])).sum()) for r in C]
    if max(abs(p / 15.0 - 1) for p in perp) > 0.01:
        fails.append("tsne-perplexity")
    verdict(record_property, 8, "SMACOF/PCA/LLE/t-SNE numerical checks", not fails, ", ".join(fails) or "all hold")


# --- 9 ----------------------------------------------------------------------

def test_criterion_09_determinism(tmp_path, record_property):
    for name in ("a", "b"):
        run_pipeline(config_from_dict(SMALL, tmp_path), tmp_path / name)
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", csvs, shallow=False)
    verdict(record_property, 9, "two pipeline runs give byte-identical CSVs", bool(csvs) and not mismatch
            and not errors, f"{len(csvs)} tables, {len(mismatch) + len(errors)} differ")


# --- 10 ---------------------------------------------------------------------

def test_criterion_10_classifier_sanity(record_property):
    X, y = blobs(200, sep=6.0)
    f1 = {a: evaluate(y, train(ClassifierSpec(a, seed=0), X, y).predict(X)).weighted_f1 for a in ALGOS}
    Xm, ym = blobs(200, p=3, sep=1.0, seed=5)
    invariant = True
    for algo in ("DT", "RF"):
        base = train(ClassifierSpec(algo, seed=3), Xm, ym).predict(Xm)
        for f in (np.exp, lambda a: a ** 3, lambda a: 5 * a + 1):
            invariant &= np.array_equal(base, train(ClassifierSpec(algo, seed=3), f(Xm), ym).predict(f(Xm)))
    ok = min(f1.values()) >= 0.95 and invariant
    verdict(record_property, 10, "all classifiers fit separable blobs; trees ignore monotone transforms", ok,
            f"min F1 {min(f1.values()):.3f} ({min(f1, key=f1.get)}), invariant={invariant}")
