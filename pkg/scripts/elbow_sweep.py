#!/usr/bin/env python3
"""Inertia-vs-k curve on the training split, with the knee the trainer would pick."""
import argparse

from satbeam import dataset as D
from satbeam.ml.kmeans import elbow_sweep, pick_knee


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("dataset", help="split dataset (csv or bin)")
    p.add_argument("--kmin", type=int, default=4)
    p.add_argument("--kmax", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    ds = D.load(a.dataset)
    x = D.fit_scaler(ds).transform(ds.features[ds.indices("train")])
    ks, inertia = elbow_sweep(x, range(a.kmin, a.kmax + 1), a.seed)
    print("k,inertia")
    for k, v in zip(ks, inertia):
        print(f"{k},{v:.6g}")
    print(f"# knee k={pick_knee(ks, inertia)}")


if __name__ == "__main__":
    main()
