"""Command-line pipeline: gen-data, split, train, bench, predict, pattern.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import statistics
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import dataset as dstore
from .array_model import (BeamMetrics, QuadratureError, WeightMatrix, evaluate_batch, evaluate_beam,
                          pattern_cut)
from .config import Settings, load_settings
from .ga import GaParams, expand_quadrant, extract_quadrant, ga_optimize, generate_dataset, sample_seed
from .link_budget import SpectralTable, beam_capacity
from .ml.approaches import (ModelError, approach1_infer, approach1_predict_bits, approach2_infer,
                            infer, load_model, save_model, train_approach2, train_mlp)
from .ml.metrics import multilabel_metrics
from .ml.nn import NumericError
from .objective import BeamSpec, build_report, cost, sample_kpis

log = logging.getLogger("satbeam")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
BENCH_SCHEMA = "satbeam.bench/1"
SAMPLE_COLUMNS = ["index", "approach", "wall_s", "cost", "kpi1", "kpi2", "kpi3", "kpi4",
                  "kpi1_raw", "kpi2_raw", "kpi3_raw", "kpi4_raw", "bw_az_deg", "bw_el_deg",
                  "sll_az_db", "sll_el_db", "eirp_dbw", "capacity_bps", "demand_bps"]


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _spec_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("requested beam")
    g.add_argument("--bw-az", type=float, default=0.6)
    g.add_argument("--bw-el", type=float, default=0.6)
    g.add_argument("--sll-az", type=float, default=-18.0)
    g.add_argument("--sll-el", type=float, default=-18.0)
    g.add_argument("--eirp", type=float, default=None, help="dBW; defaults to the sampler estimate for the beam")
    g.add_argument("--steer-az", type=float, default=0.0)
    g.add_argument("--steer-el", type=float, default=0.0)
    g.add_argument("--n-elements", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings file (default: $SATBEAM_CONFIG_DIR/satbeam.ini)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "bin"), default=None, help="dataset file format")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="satbeam", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="label random beam requests with the GA")
    p.add_argument("-n", type=_positive_int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("split", parents=[common], help="assign train/test/validation splits")
    p.add_argument("dataset")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=(0.70, 0.15, 0.15))

    p = sub.add_parser("train", parents=[common], help="train approach 1 (MLP) or 2 (clusters)")
    p.add_argument("dataset")
    p.add_argument("--approach", type=int, choices=(1, 2), required=True)
    p.add_argument("-o", "--out", required=True, help="model JSON; the curve goes to <out>.curve.csv")
    p.add_argument("--clusters", type=_positive_int, default=None, help="fix k instead of the elbow sweep")

    p = sub.add_parser("bench", parents=[common], help="GA vs both approaches on the validation split")
    p.add_argument("dataset")
    p.add_argument("--model1", required=True)
    p.add_argument("--model2", required=True)
    p.add_argument("-o", "--out", required=True, help="output prefix: <out>.json and <out>.samples.csv")
    p.add_argument("--limit", type=_positive_int, default=None, help="use only the first N validation specs")

    p = sub.add_parser("predict", parents=[common], help="weight matrix for one requested beam")
    p.add_argument("--model", required=True)
    _spec_args(p)
    p.add_argument("-o", "--out", help="write the 36x36 matrix as CSV")

    p = sub.add_parser("pattern", parents=[common], help="azimuth/elevation cuts of a weight matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--matrix", help="CSV of 0/1 values, full or quadrant")
    src.add_argument("--all-on", action="store_true")
    _spec_args(p)
    p.add_argument("--step", type=float, default=0.002, help="cut step in degrees")
    p.add_argument("-o", "--out", required=True, help="output prefix")
    return ap


# ---------------------------------------------------------------------------
# helpers

def _spec_from_args(a, s: Settings) -> BeamSpec:
    cfg = s.array
    n = a.n_elements
    eirp = a.eirp
    if n is None or eirp is None:
        neff = [min(cfg.n_ports, 0.886 * cfg.lambda0 / (math.radians(bw) * cfg.port_spacing))
                for bw in (a.bw_az, a.bw_el)]
        if n is None:
            n = int(min(cfg.n_ports ** 2, max(4, round(0.75 * neff[0] * neff[1]))))
        if eirp is None:
            area = neff[0] * neff[1] * cfg.port_spacing ** 2
            eirp = (10 * math.log10(n * cfg.p_element) + 10 * math.log10(4 * math.pi * area / cfg.lambda0 ** 2)
                    - 2.0)
    spec = BeamSpec(a.bw_az, a.bw_el, a.sll_az, a.sll_el, eirp, a.steer_az, a.steer_el, n)
    spec.validate(cfg.n_ports, cfg.fov_half_angle)
    return spec


def _read_matrix(path, steer_az: float, steer_el: float, n_ports: int) -> WeightMatrix:
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    if m.shape == (n_ports // 2, n_ports // 2):
        m = expand_quadrant(m.astype(np.uint8))
    return WeightMatrix(m, steer_az, steer_el)


def _metrics_dict(m: BeamMetrics) -> dict:
    return {k: (None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v)
            for k, v in asdict(m).items()}


def _load_dataset(path, fmt):
    return dstore.load(path, fmt)


def _require_splits(ds) -> None:
    if not ds.has_splits():
        raise dstore.DatasetError("dataset has no splits; run `satbeam split` first")


def _table(s: Settings):
    return SpectralTable.from_csv(s.link.spectral_table) if s.link.spectral_table else None


def _capacity(s: Settings, eirp_dbw: float, spec: BeamSpec, table) -> float:
    if not math.isfinite(eirp_dbw):
        return 0.0
    lk = s.link
    return beam_capacity(eirp_dbw, spec.steer_az, spec.steer_el, lk.bandwidth_hz, s.array,
                         lk.excess_loss_db, lk.g_rx_max_dbi, lk.rx_noise_temp_k, table)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(a, s: Settings) -> int:
    t0 = time.perf_counter()

    def progress(i, n, res):
        if (i + 1) % 50 == 0 or i + 1 == n:
            log.info("sample %d/%d cost %.4f (%.0f s)", i + 1, n, res.cost, time.perf_counter() - t0)

    ds = generate_dataset(s.sampler, a.n, s.array, s.cost, s.ga, rng_seed=a.seed,
                          quality_threshold=s.ga.accept_cost, workers=a.workers, progress=progress)
    dstore.save(ds, a.out, a.format)
    wall = time.perf_counter() - t0
    print(f"samples={len(ds)} accepted={ds.n_accepted} acceptance_rate={ds.n_accepted / len(ds):.4f} "
          f"wall_s={wall:.1f}")
    return EXIT_OK


def cmd_split(a, s: Settings) -> int:
    ds = dstore.split(_load_dataset(a.dataset, None), tuple(a.ratios), a.seed)
    dstore.save(ds, a.out, a.format)
    counts = {k: len(ds.indices(k)) for k in ("train", "test", "validation")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_train(a, s: Settings) -> int:
    ds = _load_dataset(a.dataset, None)
    _require_splits(ds)
    tc = replace(s.train, rng_seed=a.seed)
    watch = "validation" if len(ds.indices("validation")) else "test"
    iv = ds.indices(watch)
    if a.approach == 1:
        model, curve = train_mlp(ds, tc)
        sc = multilabel_metrics(approach1_predict_bits(model, ds.features[iv]), ds.bits[iv])
        print(f"approach=1 epochs={len(curve.rows)} best_epoch={curve.best_epoch} "
              f"{watch}_f1={sc.f1:.4f} precision={sc.precision:.4f} recall={sc.recall:.4f}")
    else:
        model, curve = train_approach2(ds, s.array, tc, s.cost, n_clusters=a.clusters)
        info = model.info
        print(f"approach=2 n_clusters={info['n_clusters']} {watch}_accuracy={info['val_accuracy']:.4f} "
              f"majority_baseline={info['majority_baseline']:.4f}")
        if "inertia_curve" in info:
            print("k,inertia")
            for k, v in zip(info["k_sweep"], info["inertia_curve"]):
                print(f"{k},{v:.6g}")
    save_model(model, a.out)
    curve.to_csv(str(a.out) + ".curve.csv")
    return EXIT_OK


def _evaluate(s: Settings, spec: BeamSpec, bits36) -> BeamMetrics:
    row = evaluate_batch(s.array, np.asarray(bits36)[None], spec.steer_az, spec.steer_el)[0]
    return BeamMetrics(*(float(x) for x in row))


def cmd_bench(a, s: Settings) -> int:
    ds = _load_dataset(a.dataset, None)
    _require_splits(ds)
    iv = ds.indices("validation")
    if a.limit:
        iv = iv[:a.limit]
    if not len(iv):
        raise dstore.DatasetError("validation split is empty")
    m1, m2 = load_model(a.model1), load_model(a.model2)
    m1.check(), m2.check()
    table = _table(s)
    runners = {
        "ga": None,
        "approach1": lambda spec: approach1_infer(m1, spec),
        "approach2": lambda spec: approach2_infer(m2, spec),
    }
    rows, per, times, bits = [], {k: [] for k in runners}, {k: [] for k in runners}, {k: [] for k in runners}
    for n, i in enumerate(iv):
        spec = BeamSpec.from_features(ds.features[i])
        demand = _capacity(s, spec.eirp_o, spec, table)
        for name, run in runners.items():
            if name == "ga":
                gp = replace(s.ga, rng_seed=sample_seed(a.seed, int(i)))
                res = ga_optimize(spec, s.array, s.cost, gp)
                w, dt = res.weights, res.wall_time
            else:
                # timed around the inference call only
                t0 = time.perf_counter()
                w = run(spec)
                dt = time.perf_counter() - t0
            m = _evaluate(s, spec, w.bits)
            cap = _capacity(s, m.eirp_dbw, spec, table)
            k = sample_kpis(spec, m, cap, demand)
            per[name].append(k)
            times[name].append(dt)
            bits[name].append(extract_quadrant(w.bits))
            c = float(cost(np.array([list(asdict(m).values())]), spec, s.cost)[0])
            rows.append([int(i), name, dt, c, *(getattr(k, f.name) for f in fields(k)),
                         m.bw_az_deg, m.bw_el_deg, m.sll_az_db, m.sll_el_db, m.eirp_dbw, cap, demand])
        if (n + 1) % 25 == 0:
            log.info("bench %d/%d", n + 1, len(iv))
    ref = statistics.fmean(times["ga"])
    summary = {}
    for name in runners:
        sc = multilabel_metrics(np.array(bits[name]), ds.bits[iv])
        rep = build_report(per[name], sc.precision, sc.recall, statistics.fmean(times[name]), ref)
        summary[name] = {
            "kpi": asdict(rep),
            "f1": sc.f1,
            "mean_wall_s": statistics.fmean(times[name]),
            "median_wall_s": statistics.median(times[name]),
            "n_samples": len(per[name]),
            "speedup_vs_ga": ref / statistics.fmean(times[name]),
        }
    result = {
        "schema": BENCH_SCHEMA,
        "approaches": summary,
        "seed": a.seed,
        "config_digest": s.digest(),
        "timing": "ML wall time covers only the inference call; GA wall time covers one full optimization",
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "machine": platform.machine(), "platform": platform.platform()},
    }
    out = Path(a.out)
    with open(str(out) + ".samples.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SAMPLE_COLUMNS)
        wr.writerows(rows)
    with open(str(out) + ".json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    print("approach,kpi1,kpi2,kpi3,kpi4,kpi5,kpi6,mean_wall_s")
    for name, r in summary.items():
        k = r["kpi"]
        print(f"{name},{k['kpi1']:.2f},{k['kpi2']:.2f},{k['kpi3']:.2f},{k['kpi4']:.2f},{k['kpi5']:.2f},"
              f"{k['kpi6']:.2f},{r['mean_wall_s']:.6f}")
    return EXIT_OK


def cmd_predict(a, s: Settings) -> int:
    spec = _spec_from_args(a, s)
    w = infer(load_model(a.model), spec)
    m = evaluate_beam(s.array, w)
    if a.out:
        np.savetxt(a.out, w.bits, fmt="%d", delimiter=",")
    print(json.dumps({"spec": asdict(spec), "n_active": w.n_active, "metrics": _metrics_dict(m)}, indent=2))
    return EXIT_OK


def cmd_pattern(a, s: Settings) -> int:
    cfg = s.array
    if a.all_on:
        w = WeightMatrix(np.ones((cfg.n_ports, cfg.n_ports), np.uint8), a.steer_az, a.steer_el)
    elif a.matrix:
        w = _read_matrix(a.matrix, a.steer_az, a.steer_el, cfg.n_ports)
    else:
        w = infer(load_model(a.model), _spec_from_args(a, s))
    m = evaluate_beam(cfg, w)
    half = 2 * cfg.fov_half_angle
    for plane, tag in (("azimuth", "az"), ("elevation", "el")):
        pattern_cut(cfg, w, plane, half, a.step).to_csv(f"{a.out}_{tag}.csv")
    with open(f"{a.out}_metrics.json", "w") as fh:
        json.dump({"schema": "satbeam.metrics/1", "n_active": w.n_active, **_metrics_dict(m)}, fh, indent=2)
    print(f"bw_az={m.bw_az_deg:.4f} bw_el={m.bw_el_deg:.4f} sll_az={m.sll_az_db} sll_el={m.sll_el_db} "
          f"eirp={m.eirp_dbw:.3f}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "split": cmd_split,
    "train": cmd_train,
    "bench": cmd_bench,
    "predict": cmd_predict,
    "pattern": cmd_pattern,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = load_settings(a.config)
        return COMMANDS[a.cmd](a, s)
    except (NumericError, FloatingPointError, QuadratureError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (dstore.DatasetError, ModelError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
