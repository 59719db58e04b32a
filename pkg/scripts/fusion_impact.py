"""Pure-cyber vs cyber-physical weighted F1 for every use case and model."""
import argparse

from _common import bundle, fused, workdir
from scadafusion.features import COLUMNS, CYBER_COLUMNS
from scadafusion.learn import ClassifierSpec, evaluate, stratified_split, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--models", default="DT,RF,GNB")
    ap.add_argument("--work", help="directory for generated bundles")
    args = ap.parse_args()
    root = workdir(args.work)
    print(f"{'case':5} {'model':5} {'cyber':>7} {'fused':>7} {'gain':>7}")
    for uc in ("UC1", "UC2", "UC3", "UC4"):
        _, X, y = fused(bundle(root, uc, use_case=uc, seed=args.seed))
        tr, te = stratified_split(y, 0.3, 0)
        for algo in args.models.split(","):
            f = []
            for cols in (CYBER_COLUMNS, COLUMNS):
                M = X.select(cols)
                m = train(ClassifierSpec(algo, seed=0), M.take(tr), y[tr])
                f.append(evaluate(y[te], m.predict(M.take(te))).weighted_f1)
            print(f"{uc:5} {algo:5} {f[0]:7.3f} {f[1]:7.3f} {f[1] - f[0]:+7.3f}")


if __name__ == "__main__":
    main()
