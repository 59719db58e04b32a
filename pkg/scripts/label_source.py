"""Train on Snort alerts or on attack-window labels, score both against window truth."""
import argparse

from _common import bundle, fused, workdir
from scadafusion.fusion import assign_labels
from scadafusion.learn import ClassifierSpec, evaluate, stratified_split, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="3,11")
    ap.add_argument("--detect", type=float, default=0.8, help="Snort detection probability")
    ap.add_argument("--false-alarm", type=float, default=0.05)
    ap.add_argument("--models", default="DT,RF")
    ap.add_argument("--work")
    args = ap.parse_args()
    root = workdir(args.work)
    print(f"{'case':5} {'seed':>4} {'model':5} {'window':>7} {'snort':>7}")
    for uc in ("UC1", "UC3"):
        for seed in map(int, args.seeds.split(",")):
            b = bundle(root, f"{uc}-{seed}", use_case=uc, seed=seed, snort_detect_prob=args.detect,
                       snort_false_alarm_rate=args.false_alarm)
            table, X, y = fused(b)
            ys = assign_labels(table, "snort").labels
            tr, te = stratified_split(y, 0.3, 0)
            for algo in args.models.split(","):
                row = [evaluate(y[te], train(ClassifierSpec(algo, seed=0), X.take(tr), lab[tr])
                                .predict(X.take(te))).weighted_f1 for lab in (y, ys)]
                print(f"{uc:5} {seed:4d} {algo:5} {row[0]:7.3f} {row[1]:7.3f}")


if __name__ == "__main__":
    main()
