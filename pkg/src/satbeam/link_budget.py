"""Forward-link budget: channel gain, CINR, spectral efficiency and offered capacity."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .array_model import ArrayConfig, WeightMatrix, array_factor, direction_cosines, _radiated_power
from .objective import BeamSpec, kpi_matched

K_BOLTZMANN = 1.380649e-23
EARTH_RADIUS_M = 6_378_137.0
GEO_ALTITUDE_M = 35_786_000.0
KAPPA_MAX = 5.9


def db(x):
    return 10 * np.log10(x)


def undb(x):
    return 10 ** (np.asarray(x, float) / 10)


@dataclass
class LinkGeometry:
    slant_distance_m: float = GEO_ALTITUDE_M
    wavelength_m: float = 299_792_458.0 / 19e9
    excess_loss_db: float = 3.0
    off_boresight_deg: float = 0.0
    g_rx_max_dbi: float = 30.0
    rx_noise_temp_k: float = 300.0
    bandwidth_hz: float = 500e6

    def __post_init__(self):
        if self.slant_distance_m <= 0:
            raise ValueError("slant distance must be positive")
        if self.excess_loss_db < 0:
            raise ValueError("excess loss must be >= 0 dB")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")


def slant_range(off_boresight_deg: float, altitude_m: float = GEO_ALTITUDE_M) -> float:
    """Satellite-to-ground distance for a nadir-referenced off-boresight angle."""
    rs = EARTH_RADIUS_M + altitude_m
    s = math.sin(math.radians(off_boresight_deg))
    disc = EARTH_RADIUS_M ** 2 - (rs * s) ** 2
    if disc < 0:
        raise ValueError(f"direction {off_boresight_deg} deg misses the Earth")
    return rs * math.cos(math.radians(off_boresight_deg)) - math.sqrt(disc)


def off_boresight(az_deg: float, el_deg: float) -> float:
    u, v = direction_cosines(az_deg, el_deg)
    return math.degrees(math.asin(min(1.0, math.hypot(u, v))))


def free_space_path_loss_db(distance_m: float, wavelength_m: float) -> float:
    return 20 * math.log10(4 * math.pi * distance_m / wavelength_m)


def channel_gain(geom: LinkGeometry, g_sat_dbi: float) -> float:
    """Linear |h|^2 = G_sat G_rx / ((4 pi d / lambda)^2 L)."""
    if geom.slant_distance_m == 0:
        raise ZeroDivisionError("distance must be nonzero")
    fspl = (4 * math.pi * geom.slant_distance_m / geom.wavelength_m) ** 2
    return float(undb(g_sat_dbi) * undb(geom.g_rx_max_dbi) / (fspl * undb(geom.excess_loss_db)))


def pattern_gain_dbi(cfg: ArrayConfig, w: WeightMatrix, az_deg: float, el_deg: float) -> float:
    """Satellite antenna gain (dBi) of weight matrix ``w`` toward (az, el)."""
    u0, v0 = direction_cosines(w.steer_az, w.steer_el)
    p = _radiated_power(cfg, w.bits, u0, v0, 700)[0]
    f = abs(array_factor(cfg, w, az_deg, el_deg))
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(f * f / p))


@dataclass
class PlannedBeam:
    center_az: float
    center_el: float
    bandwidth_hz: float
    demand_bps: float
    color: int = 0
    weights: WeightMatrix | None = None
    tx_power_w: float | None = None  # defaults to n_active * p_element
    spec: BeamSpec | None = None
    name: str = ""

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("beam bandwidth must be positive")
        if self.color < 0:
            raise ValueError("colors are nonnegative palette indices")


@dataclass
class BeamPlan:
    beams: list[PlannedBeam]
    cfg: ArrayConfig = field(default_factory=ArrayConfig)
    excess_loss_db: float = 3.0
    g_rx_max_dbi: float = 30.0
    rx_noise_temp_k: float = 300.0
    n_colors: int = 4

    def __post_init__(self):
        for b in self.beams:
            if b.color >= self.n_colors:
                raise ValueError(f"beam color {b.color} outside the {self.n_colors}-color palette")

    def tx_power(self, b: PlannedBeam) -> float:
        if b.tx_power_w is not None:
            return b.tx_power_w
        if b.weights is None:
            raise ValueError("beam has neither tx power nor weights")
        return b.weights.n_active * self.cfg.p_element

    def geometry(self, b: PlannedBeam) -> LinkGeometry:
        ob = off_boresight(b.center_az, b.center_el)
        return LinkGeometry(slant_range(ob), self.cfg.lambda0, self.excess_loss_db, ob,
                            self.g_rx_max_dbi, self.rx_noise_temp_k, b.bandwidth_hz)


GainFn = Callable[[PlannedBeam, float, float], float]


def _default_gain(plan: BeamPlan) -> GainFn:
    cache: dict = {}

    def gain(beam: PlannedBeam, az: float, el: float) -> float:
        key = (id(beam), az, el)
        if key not in cache:
            if beam.weights is None:
                raise ValueError("beam has no weight matrix to evaluate its pattern")
            cache[key] = pattern_gain_dbi(plan.cfg, beam.weights, az, el)
        return cache[key]

    return gain


def cinr_terms(plan: BeamPlan, b: int, gain: GainFn | None = None):
    """(carrier W, interference W, noise W) at the center of beam ``b``.

    Interference sums every other beam of the same color, each through its own
    transmit pattern evaluated toward beam ``b``'s center.
    """
    if not plan.beams:
        raise ValueError("empty beam plan")
    gain = gain or _default_gain(plan)
    victim = plan.beams[b]
    geom = plan.geometry(victim)
    carrier = plan.tx_power(victim) * channel_gain(geom, gain(victim, victim.center_az, victim.center_el))
    interference = 0.0
    for j, other in enumerate(plan.beams):
        if j == b or other.color != victim.color:
            continue
        interference += plan.tx_power(other) * channel_gain(geom, gain(other, victim.center_az, victim.center_el))
    noise = K_BOLTZMANN * geom.rx_noise_temp_k * victim.bandwidth_hz
    return carrier, interference, noise


def cinr(plan: BeamPlan, b: int, gain: GainFn | None = None) -> float:
    """Linear carrier-to-interference-plus-noise ratio of beam ``b``."""
    c, i, n = cinr_terms(plan, b, gain)
    return c / (i + n)


@dataclass
class SpectralTable:
    """Monotone step mapping from CINR threshold (dB) to spectral efficiency."""
    gamma_db: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        self.gamma_db = np.asarray(self.gamma_db, float)
        self.kappa = np.asarray(self.kappa, float)
        if len(self.gamma_db) == 0 or self.gamma_db.shape != self.kappa.shape:
            raise ValueError("spectral table needs matching, nonempty columns")
        if np.any(np.diff(self.gamma_db) <= 0) or np.any(np.diff(self.kappa) < 0):
            raise ValueError("spectral table must be strictly increasing in gamma and non-decreasing in kappa")

    def __call__(self, gamma_linear: float) -> float:
        if gamma_linear <= 0:
            return 0.0
        g = 10 * math.log10(gamma_linear)
        i = np.searchsorted(self.gamma_db, g, side="right") - 1
        return 0.0 if i < 0 else float(self.kappa[i])

    @classmethod
    def from_csv(cls, path) -> "SpectralTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"gamma_db", "kappa"}:
            raise ValueError("spectral table CSV needs the header gamma_db,kappa")
        return cls([float(r["gamma_db"]) for r in rows], [float(r["kappa"]) for r in rows])


def spectral_efficiency(gamma: float, table: SpectralTable | None = None, kappa_max: float = KAPPA_MAX) -> float:
    """bps/Hz for linear CINR ``gamma``: capped Shannon by default, or a step table."""
    if gamma < 0:
        raise ValueError("CINR must be nonnegative")
    if table is not None:
        return table(gamma)
    return min(math.log2(1 + gamma), kappa_max)


def offered_capacity(bandwidth_hz: float, kappa: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return bandwidth_hz * kappa


def demand_match(capacity_bps: float, demand_bps: float) -> float:
    """Percentage match of offered capacity to demand."""
    if demand_bps <= 0:
        raise ValueError("demand must be positive")
    return kpi_matched(demand_bps, capacity_bps)


def beam_capacity(eirp_dbw: float, center_az: float, center_el: float, bandwidth_hz: float,
                  cfg: ArrayConfig, excess_loss_db: float = 3.0, g_rx_max_dbi: float = 30.0,
                  rx_noise_temp_k: float = 300.0, table: SpectralTable | None = None) -> float:
    """Interference-free capacity of a beam delivering ``eirp_dbw`` toward its center."""
    ob = off_boresight(center_az, center_el)
    geom = LinkGeometry(slant_range(ob), cfg.lambda0, excess_loss_db, ob, g_rx_max_dbi, rx_noise_temp_k,
                        bandwidth_hz)
    # EIRP already folds tx power and antenna gain together
    c = channel_gain(geom, eirp_dbw)
    gamma = c / (K_BOLTZMANN * rx_noise_temp_k * bandwidth_hz)
    return offered_capacity(bandwidth_hz, spectral_efficiency(gamma, table))


# ---------------------------------------------------------------------------
# scenario files

SCENARIO_COLUMNS = ["name", "center_az_deg", "center_el_deg", "demand_bps", "bandwidth_hz", "color",
                    "bw_az_deg", "bw_el_deg", "sll_az_db", "sll_el_db", "eirp_dbw", "n_elements"]


def load_scenario(path) -> list[PlannedBeam]:
    """Beams from a CSV scenario file (see ``SCENARIO_COLUMNS``); lines starting with # are skipped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise ValueError("scenario has no beams")
    missing = [c for c in SCENARIO_COLUMNS if c not in rows[0]]
    if missing:
        raise ValueError(f"scenario missing column(s): {', '.join(missing)}")
    beams = []
    for r in rows:
        az, el = float(r["center_az_deg"]), float(r["center_el_deg"])
        spec = BeamSpec(float(r["bw_az_deg"]), float(r["bw_el_deg"]), float(r["sll_az_db"]), float(r["sll_el_db"]),
                        float(r["eirp_dbw"]), az, el, int(r["n_elements"]))
        beams.append(PlannedBeam(az, el, float(r["bandwidth_hz"]), float(r["demand_bps"]), int(r["color"]),
                                 spec=spec, name=r["name"]))
    return beams
