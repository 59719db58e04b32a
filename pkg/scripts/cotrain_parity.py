"""Co-training vs a supervised model on the same labeled third.

Runs on generator data and on a two-view blob problem whose views are
each sufficient, the setting co-training assumes.
"""
import argparse

import numpy as np

from _common import bundle, fused, workdir
from scadafusion.cotrain import ViewSplit, cotrain_fit, cotrain_predict, labeled_unlabeled_split
from scadafusion.fusion import ColumnInfo, FeatureMatrix
from scadafusion.learn import ClassifierSpec, evaluate, stratified_split, train


def two_view_blobs(n, seed, sep=6.0, p=4):
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % 2)
    V = rng.normal(size=(n, 2 * p)) + sep * y[:, None] / np.sqrt(p)
    names = [f"c{i}" for i in range(p)] + [f"p{i}" for i in range(p)]
    return FeatureMatrix(V, [ColumnInfo(c, "numeric") for c in names]), y, ViewSplit(tuple(names[:p]), tuple(names[p:]))


def gap(X, y, split, algo, seed, loops):
    tr, te = stratified_split(y, 0.3, seed)
    lab, unl = labeled_unlabeled_split(len(tr), (1, 2), seed)
    spec = ClassifierSpec(algo, seed=seed)
    sup = evaluate(y[te], train(spec, X.take(tr[lab]), y[tr[lab]]).predict(X.take(te))).weighted_f1
    cm = cotrain_fit(spec, (X.take(tr[lab]), y[tr[lab]]), X.take(tr[unl]), split, loops)
    return sup, evaluate(y[te], cotrain_predict(cm, X.take(te))[0]).weighted_f1, cm.loops


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bases", default="DT,RF,LR")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--max-loops", type=int, default=50)
    ap.add_argument("--work")
    args = ap.parse_args()
    _, Xg, yg = fused(bundle(workdir(args.work), "g", use_case="UC1", seed=11))
    print(f"{'data':10} {'base':4} {'seed':>4} {'sup':>6} {'co':>6} {'gap':>7} {'loops':>5}")
    for algo in args.bases.split(","):
        for seed in range(args.seeds):
            for name, (X, y, split) in (("generator", (Xg, yg, None)), ("blobs", two_view_blobs(600, seed))):
                s, c, n = gap(X, y, split, algo, seed, args.max_loops)
                print(f"{name:10} {algo:4} {seed:4d} {s:6.3f} {c:6.3f} {s - c:+7.3f} {n:5d}")


if __name__ == "__main__":
    main()
