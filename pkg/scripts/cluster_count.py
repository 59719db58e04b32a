"""Silhouette, Davies-Bouldin and Calinski-Harabasz over k for each clustering algorithm."""
import argparse
import warnings

import numpy as np

from _common import bundle, fused, workdir
from scadafusion.cluster import ALGOS as CLUSTER_ALGOS, calinski_harabasz, cluster, davies_bouldin, silhouette


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--use-case", default="UC1")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--rows", type=int, default=1500)
    ap.add_argument("--k-max", type=int, default=10)
    ap.add_argument("--algos", default=",".join(CLUSTER_ALGOS))
    ap.add_argument("--work")
    args = ap.parse_args()
    _, X, _ = fused(bundle(workdir(args.work), "b", use_case=args.use_case, seed=args.seed))
    rng = np.random.default_rng(0)
    A = X.values[np.sort(rng.choice(len(X.values), min(args.rows, len(X.values)), replace=False))]
    for algo in args.algos.split(","):
        print(f"{algo}\n  {'k':>3} {'sil':>7} {'db':>7} {'ch':>10}")
        scores = []
        for k in range(2, args.k_max + 1):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lab = cluster(algo, A, k, 0).labels
            if len(set(lab)) < 2:
                print(f"  {k:3d}  degenerate")
                scores.append(-np.inf)
                continue
            scores.append(silhouette(A, lab))
            print(f"  {k:3d} {scores[-1]:7.3f} {davies_bouldin(A, lab):7.3f} {calinski_harabasz(A, lab):10.1f}")
        print(f"  best k by silhouette: {int(np.argmax(scores)) + 2}")


if __name__ == "__main__":
    main()
