#!/usr/bin/env python3
"""All-on vs. a model-predicted matrix: azimuth cuts side by side in one CSV."""
import argparse

import numpy as np

from satbeam.array_model import ArrayConfig, WeightMatrix, pattern_cut
from satbeam.ml.approaches import infer, load_model
from satbeam.objective import BeamSpec


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--model", required=True)
    p.add_argument("--bw", type=float, nargs=2, default=(0.7, 0.7), metavar=("AZ", "EL"))
    p.add_argument("--sll", type=float, default=-18.0)
    p.add_argument("--eirp", type=float, default=76.0)
    p.add_argument("--half-range", type=float, default=4.0)
    p.add_argument("-o", "--out", default="cuts.csv")
    a = p.parse_args()
    cfg = ArrayConfig()
    spec = BeamSpec(*a.bw, a.sll, a.sll, a.eirp)
    full = WeightMatrix(np.ones((cfg.n_ports, cfg.n_ports), np.uint8))
    thin = infer(load_model(a.model), spec)
    c0 = pattern_cut(cfg, full, "azimuth", a.half_range, 0.002)
    c1 = pattern_cut(cfg, thin, "azimuth", a.half_range, 0.002)
    np.savetxt(a.out, np.column_stack([c0.angles_deg, c0.gain_db, c1.gain_db]), delimiter=",",
               header="angle_deg,all_on_db,predicted_db", comments="", fmt="%.6f")
    print(f"wrote {a.out} ({thin.n_active} active ports in the predicted matrix)")


if __name__ == "__main__":
    main()
