#!/usr/bin/env python3
"""Run (or resume) the desk-scale pipeline and print the KPI table."""
import argparse
import logging
from pathlib import Path

from satbeam.pipeline import DeskRun, run_pipeline


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "runs" / "desk"))
    p.add_argument("-n", type=int, default=2400)
    p.add_argument("--seed", type=int, default=1, help="generation seed")
    p.add_argument("--config")
    p.add_argument("--force", action="store_true", help="rerun stages whose outputs exist")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    res = run_pipeline(DeskRun(Path(a.out), a.n, gen_seed=a.seed, config=a.config), force=a.force)
    print("approach,kpi1,kpi2,kpi3,kpi4,kpi5,kpi6,f1,mean_wall_s")
    for name, r in res["approaches"].items():
        k = r["kpi"]
        print(f"{name},{k['kpi1']:.2f},{k['kpi2']:.2f},{k['kpi3']:.2f},{k['kpi4']:.2f},{k['kpi5']:.2f},"
              f"{k['kpi6']:.2f},{r['f1']:.4f},{r['mean_wall_s']:.6f}")


if __name__ == "__main__":
    main()
