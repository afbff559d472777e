"""Beamforming cost function and the six benchmark KPIs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .array_model import BeamMetrics

REPORT_SCHEMA = "satbeam.kpi/1"


@dataclass
class BeamSpec:
    bw_az_o: float
    bw_el_o: float
    sll_az_o: float
    sll_el_o: float
    eirp_o: float
    steer_az: float = 0.0
    steer_el: float = 0.0
    n_elements_o: int = 1296

    def __post_init__(self):
        if self.bw_az_o <= 0 or self.bw_el_o <= 0:
            raise ValueError("beamwidth targets must be positive")
        if self.sll_az_o >= 0 or self.sll_el_o >= 0:
            raise ValueError("SLL targets must be negative (dB re peak)")
        if self.n_elements_o < 1:
            raise ValueError("n_elements_o must be >= 1")

    def validate(self, n_ports: int, fov_half_angle: float) -> None:
        if self.n_elements_o > n_ports ** 2:
            raise ValueError(f"n_elements_o {self.n_elements_o} exceeds {n_ports ** 2} ports")
        if abs(self.steer_az) > fov_half_angle or abs(self.steer_el) > fov_half_angle:
            raise ValueError("steering outside the field of view")

    def features(self) -> np.ndarray:
        """The eight model inputs in canonical order."""
        return np.array(
            [self.bw_az_o, self.bw_el_o, self.sll_az_o, self.sll_el_o,
             self.eirp_o, self.steer_az, self.steer_el, self.n_elements_o],
            dtype=float,
        )

    @classmethod
    def from_features(cls, x) -> "BeamSpec":
        x = [float(v) for v in x]
        return cls(*x[:7], n_elements_o=int(round(x[7])))

    @classmethod
    def from_metrics(cls, m: BeamMetrics, steer_az: float, steer_el: float, n_elements: int) -> "BeamSpec":
        return cls(m.bw_az_deg, m.bw_el_deg, m.sll_az_db, m.sll_el_db, m.eirp_dbw, steer_az, steer_el, n_elements)


FEATURE_NAMES = ("bw_az", "bw_el", "sll_az", "sll_el", "eirp", "steer_az", "steer_el", "n_elements")


@dataclass(frozen=True)
class CostWeights:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.k1 == self.k2 == self.k3 == 0:
            raise ValueError("at least one cost weight must be positive")


def _check_denominators(spec: BeamSpec) -> None:
    for name in ("bw_az_o", "bw_el_o", "sll_az_o", "sll_el_o", "eirp_o"):
        if getattr(spec, name) == 0:
            raise ZeroDivisionError(f"cost undefined: target {name} is zero")


def cost_terms(metrics, spec: BeamSpec, kw: CostWeights, signed_eirp: bool = False):
    """(Z1, Z2, Z3) for metrics given as a BeamMetrics or an (..., 8) metrics array.

    SLL and EIRP errors are taken relative to ``|target|``.  With
    ``signed_eirp`` the EIRP term keeps its sign, which makes the total
    unbounded below; the default uses the absolute error.
    """
    _check_denominators(spec)
    if isinstance(metrics, BeamMetrics):
        m = np.array([getattr(metrics, f.name) for f in fields(BeamMetrics)], dtype=float)
    else:
        m = np.asarray(metrics, dtype=float)
    z1 = kw.k1 * (np.abs(m[..., 0] - spec.bw_az_o) / spec.bw_az_o
                  + np.abs(m[..., 1] - spec.bw_el_o) / spec.bw_el_o)
    z2 = kw.k2 * (np.abs(m[..., 2] - spec.sll_az_o) / abs(spec.sll_az_o)
                  + np.abs(m[..., 3] - spec.sll_el_o) / abs(spec.sll_el_o))
    de = (m[..., 4] - spec.eirp_o) / abs(spec.eirp_o)
    z3 = kw.k3 * (de if signed_eirp else np.abs(de))
    return z1, z2, z3


def cost(metrics, spec: BeamSpec, kw: CostWeights = CostWeights(), signed_eirp: bool = False):
    """Z1 + Z2 + Z3 beamforming cost; scalar for BeamMetrics, array for metric arrays."""
    z1, z2, z3 = cost_terms(metrics, spec, kw, signed_eirp)
    total = z1 + z2 + z3
    return float(total) if np.ndim(total) == 0 else total


# ---------------------------------------------------------------------------
# KPIs

def kpi_matched_raw(x_target: float, y_achieved: float) -> float:
    if x_target == 0:
        raise ZeroDivisionError("matched-KPI target must be nonzero")
    return (1 - abs(y_achieved - x_target) / abs(x_target)) * 100


def kpi_matched(x_target: float, y_achieved: float) -> float:
    """Percentage match of an achieved value to its target, floored at 0."""
    return max(0.0, kpi_matched_raw(x_target, y_achieved))


def kpi5_f1(precision: float, recall: float, paper_form: bool = False) -> float:
    """F1 score in percent.

    ``paper_form=True`` returns (1 - F1) * 100, the expression as printed in
    the source, kept for comparison only.
    """
    if not (0 <= precision <= 1 and 0 <= recall <= 1):
        raise ValueError("precision and recall must lie in [0, 1]")
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return (1 - f1) * 100 if paper_form else f1 * 100


def kpi6_speed(execution_time: float, reference_time: float) -> float:
    if reference_time <= 0:
        raise ValueError("reference_time must be positive")
    return (1 - execution_time / reference_time) * 100


@dataclass
class KpiReport:
    kpi1: float
    kpi2: float
    kpi3: float
    kpi4: float
    kpi5: float
    kpi6: float
    precision: float
    recall: float
    execution_time_s: float
    reference_time_s: float
    n_samples: int = 1
    kpi1_raw: float = math.nan
    kpi2_raw: float = math.nan
    kpi3_raw: float = math.nan
    kpi4_raw: float = math.nan

    def to_json(self) -> str:
        return json.dumps({"schema": REPORT_SCHEMA, **asdict(self)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KpiReport":
        d = json.loads(text)
        if d.pop("schema", None) != REPORT_SCHEMA:
            raise ValueError("KPI report schema mismatch")
        return cls(**d)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(["schema"] + [f.name for f in fields(cls)])

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow([REPORT_SCHEMA] + [getattr(self, f.name) for f in fields(self)])
        return buf.getvalue()


@dataclass
class SampleKpis:
    """Per-sample KPI inputs and values (one validation case for one approach)."""
    kpi1: float
    kpi2: float
    kpi3: float
    kpi4: float
    kpi1_raw: float
    kpi2_raw: float
    kpi3_raw: float
    kpi4_raw: float


def sample_kpis(spec: BeamSpec, metrics: BeamMetrics, capacity_bps: float, demand_bps: float) -> SampleKpis:
    """KPI 1-4 of one achieved beam against its requested spec and demand.

    Beamwidth and SLL KPIs average the azimuth and elevation planes.
    """
    raw1 = kpi_matched_raw(spec.eirp_o, metrics.eirp_dbw)
    raw2 = 0.5 * (kpi_matched_raw(spec.bw_az_o, metrics.bw_az_deg) + kpi_matched_raw(spec.bw_el_o, metrics.bw_el_deg))
    raw3 = 0.5 * (kpi_matched_raw(spec.sll_az_o, _sll_or_zero(metrics.sll_az_db))
                  + kpi_matched_raw(spec.sll_el_o, _sll_or_zero(metrics.sll_el_db)))
    if demand_bps <= 0:
        raise ValueError("demand must be positive")
    raw4 = kpi_matched_raw(demand_bps, capacity_bps)
    k2 = 0.5 * (kpi_matched(spec.bw_az_o, metrics.bw_az_deg) + kpi_matched(spec.bw_el_o, metrics.bw_el_deg))
    k3 = 0.5 * (kpi_matched(spec.sll_az_o, _sll_or_zero(metrics.sll_az_db))
                + kpi_matched(spec.sll_el_o, _sll_or_zero(metrics.sll_el_db)))
    return SampleKpis(max(raw1, 0.0), k2, k3, max(raw4, 0.0), raw1, raw2, raw3, raw4)


def _sll_or_zero(x: float) -> float:
    # a missing sidelobe inside the FoV scores as a 0 dB sidelobe
    return 0.0 if x is None or not math.isfinite(x) else x


def build_report(per_sample: list[SampleKpis], precision: float, recall: float,
                 execution_time_s: float, reference_time_s: float) -> KpiReport:
    """Average per-sample KPI 1-4 and attach classifier and timing KPIs."""
    if not per_sample:
        raise ValueError("cannot build a KPI report from an empty sample set")
    mean = lambda name: float(np.mean([getattr(s, name) for s in per_sample]))  # noqa: E731
    return KpiReport(
        kpi1=mean("kpi1"), kpi2=mean("kpi2"), kpi3=mean("kpi3"), kpi4=mean("kpi4"),
        kpi5=kpi5_f1(precision, recall),
        kpi6=kpi6_speed(execution_time_s, reference_time_s),
        precision=precision, recall=recall,
        execution_time_s=execution_time_s, reference_time_s=reference_time_s,
        n_samples=len(per_sample),
        kpi1_raw=mean("kpi1_raw"), kpi2_raw=mean("kpi2_raw"),
        kpi3_raw=mean("kpi3_raw"), kpi4_raw=mean("kpi4_raw"),
    )
