"""Genetic-algorithm thinning of the quadrant bits, and the dataset factory."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TextIO

import numpy as np

from .array_model import ArrayConfig, BeamMetrics, CutEvaluator, WeightMatrix, check_steering
from .objective import BeamSpec, CostWeights, cost

log = logging.getLogger(__name__)

NAN_PENALTY = 1e3


@dataclass(frozen=True)
class GaParams:
    population_size: int = 64
    max_generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 1 / 324
    elitism_count: int = 2
    tournament_size: int = 3
    convergence_patience: int = 25
    rng_seed: int = 0
    accept_cost: float = 0.3
    init_strategy: str = "taper"  # or "mixed"

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ValueError("elitism_count must lie in [0, population_size]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if self.max_generations < 0 or self.convergence_patience < 1:
            raise ValueError("max_generations >= 0 and convergence_patience >= 1 required")
        if self.init_strategy not in ("taper", "mixed"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")


def expand_quadrant(q, n_ports: int | None = None) -> np.ndarray:
    """Mirror an (N/2)^2 quadrant (row-major, q[0, 0] at the array corner) into N x N bits."""
    q = np.asarray(q, dtype=np.uint8)
    if q.ndim == 1:
        h = math.isqrt(q.size)
        if h * h != q.size:
            raise ValueError(f"quadrant length {q.size} is not a square")
        q = q.reshape(h, h)
    if n_ports is not None and q.shape != (n_ports // 2, n_ports // 2):
        raise ValueError(f"expected {(n_ports // 2) ** 2} quadrant bits, got {q.size}")
    if q.ndim == 2:
        top = np.concatenate([q, q[:, ::-1]], axis=1)
        return np.concatenate([top, top[::-1]], axis=0)
    top = np.concatenate([q, q[..., ::-1]], axis=-1)
    return np.concatenate([top, top[..., ::-1, :]], axis=-2)


def extract_quadrant(bits) -> np.ndarray:
    """Inverse of :func:`expand_quadrant` (flattened, row-major)."""
    b = np.asarray(bits, dtype=np.uint8)
    h = b.shape[-1] // 2
    return b[..., :h, :h].reshape(*b.shape[:-2], h * h)


@dataclass
class GaResult:
    weights: WeightMatrix
    cost: float
    generations_run: int
    wall_time: float
    metrics: BeamMetrics
    converged: bool
    history: list = field(default_factory=list)  # (gen, best, mean, wall_s)

    @property
    def unconverged(self) -> bool:
        return not self.converged


class _Fitness:
    """Cost of quadrant bit vectors under one spec, memoized by genotype."""

    def __init__(self, cfg: ArrayConfig, spec: BeamSpec, kw: CostWeights):
        self.cfg, self.spec, self.kw = cfg, spec, kw
        self.evaluator = CutEvaluator(cfg, spec.steer_az, spec.steer_el)
        self.cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        keys = [row.tobytes() for row in pop]
        todo = [i for i, k in enumerate(keys) if k not in self.cache]
        if todo:
            uniq = {}
            for i in todo:
                uniq.setdefault(keys[i], i)
            idx = list(uniq.values())
            bits = expand_quadrant(pop[idx].reshape(len(idx), self.cfg.n_quadrant, self.cfg.n_quadrant))
            empty = pop[idx].sum(axis=1) == 0
            bits[empty] = 0
            m = np.full((len(idx), 8), np.nan)
            if (~empty).any():
                m[~empty] = self.evaluator(bits[~empty])
            c = np.asarray(cost(m, self.spec, self.kw), dtype=float)
            c[~np.isfinite(c)] = NAN_PENALTY
            for j, i in enumerate(idx):
                self.cache[keys[i]] = (float(c[j]), m[j])
        return np.array([self.cache[k][0] for k in keys])

    def metrics(self, q: np.ndarray) -> np.ndarray:
        self(q[None])
        return self.cache[q.tobytes()][1]


def _rng(seed: int, gen: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, gen, index])


DITHER_SEED = 20240519


@lru_cache(maxsize=4)
def _dither(nq: int) -> np.ndarray:
    # one threshold matrix shared by every run, so labels for similar specs share structure
    return np.random.default_rng(DITHER_SEED).random(nq)


def initial_population(cfg: ArrayConfig, spec: BeamSpec, gp: GaParams) -> np.ndarray:
    if gp.init_strategy == "mixed":
        return _mixed_population(cfg, spec, gp)
    return _taper_population(cfg, spec, gp)


def _taper_population(cfg: ArrayConfig, spec: BeamSpec, gp: GaParams) -> np.ndarray:
    """Elliptical density tapers thresholded against a fixed dither matrix.

    Individual i uses aperture scale s and taper exponent a from a grid:
    port density is (1 - rho^2)^a inside an ellipse whose half-axes are
    s times half the uniform-aperture width for the requested beamwidths.
    The population is a deterministic function of the spec; the GA seed only
    drives selection, crossover and mutation.
    """
    h = cfg.n_quadrant
    nq = h * h
    x = np.arange(h) - (h - 0.5)  # port offsets from the array center
    half = [min(cfg.n_ports, 0.886 * cfg.lambda0 / (math.radians(bw) * cfg.port_spacing)) / 2
            for bw in (spec.bw_az_o, spec.bw_el_o)]
    n_scale = math.ceil(math.sqrt(gp.population_size))
    scales = np.linspace(0.85, 1.7, n_scale)
    exponents = np.linspace(0.0, 2.0, math.ceil(gp.population_size / n_scale))
    u = _dither(nq)
    pop = np.zeros((gp.population_size, nq), dtype=np.uint8)
    for i in range(gp.population_size):
        s, a = scales[i % n_scale], exponents[i // n_scale]
        rho2 = (x[:, None] / (s * half[0])) ** 2 + (x[None, :] / (s * half[1])) ** 2
        density = np.where(rho2 < 1, np.clip(1 - rho2, 0, 1) ** a, 0.0).ravel()
        pop[i] = density > u
        if not pop[i].any():
            pop[i, -1] = 1  # innermost port
    return pop


def _mixed_population(cfg: ArrayConfig, spec: BeamSpec, gp: GaParams) -> np.ndarray:
    """Half 50 % random fill, half center-weighted cores sized to the target count.

    The biased half switches on the ``n_elements_o / 4`` quadrant ports of
    lowest jittered elliptical radius; the ellipse axes scale inversely with
    the requested beamwidths.
    """
    h = cfg.n_quadrant
    nq = h * h
    idx = np.arange(h) - (h - 0.5)
    ax = 1.0 / spec.bw_az_o
    ay = 1.0 / spec.bw_el_o
    scale = math.sqrt(ax * ay)
    r = np.sqrt((idx[:, None] * scale / ax) ** 2 + (idx[None, :] * scale / ay) ** 2).ravel()
    r = r / r.max()
    k = int(np.clip(round(spec.n_elements_o / 4), 1, nq))
    pop = np.zeros((gp.population_size, nq), dtype=np.uint8)
    n_random = gp.population_size // 2
    for i in range(gp.population_size):
        rng = _rng(gp.rng_seed, 0, i)
        if i < n_random:
            pop[i] = rng.random(nq) < 0.5
        else:
            jitter = rng.uniform(0.02, 0.35)
            score = r + jitter * rng.standard_normal(nq)
            pop[i, np.argsort(score, kind="stable")[:k]] = 1
    return pop


def _tournament(costs: np.ndarray, rng: np.random.Generator, size: int) -> int:
    cand = rng.integers(0, len(costs), size)
    return int(cand[np.argmin(costs[cand])])


def _next_generation(pop, costs, gp: GaParams, gen: int) -> np.ndarray:
    P, nq = pop.shape
    order = np.argsort(costs, kind="stable")
    new = np.empty_like(pop)
    new[: gp.elitism_count] = pop[order[: gp.elitism_count]]
    for i in range(gp.elitism_count, P):
        rng = _rng(gp.rng_seed, gen, i)
        a = pop[_tournament(costs, rng, gp.tournament_size)]
        b = pop[_tournament(costs, rng, gp.tournament_size)]
        if rng.random() < gp.crossover_rate:
            child = np.where(rng.random(nq) < 0.5, a, b)
        else:
            child = a.copy()
        flips = rng.random(nq) < gp.mutation_rate
        new[i] = child ^ flips
    return new


def ga_optimize(
    spec: BeamSpec,
    cfg: ArrayConfig,
    kw: CostWeights = CostWeights(),
    gp: GaParams = GaParams(),
    progress: TextIO | None = None,
    initial: np.ndarray | None = None,
) -> GaResult:
    """Search quadrant thinning bits minimizing the beamforming cost for ``spec``.

    The best-ever individual is returned; elitism keeps the per-generation
    best cost non-increasing.  Runs stop after ``max_generations`` or
    ``convergence_patience`` generations without improvement.
    """
    spec.validate(cfg.n_ports, cfg.fov_half_angle)
    check_steering(cfg, spec.steer_az, spec.steer_el)
    t0 = time.perf_counter()
    fit = _Fitness(cfg, spec, kw)
    pop = initial_population(cfg, spec, gp) if initial is None else np.asarray(initial, np.uint8).copy()
    costs = fit(pop)
    ib = int(np.argmin(costs))
    best_q, best_c = pop[ib].copy(), float(costs[ib])
    history = [(0, best_c, float(costs.mean()), time.perf_counter() - t0)]
    if progress is not None:
        progress.write("gen,best_cost,mean_cost,wall_s\n")
        progress.write("%d,%.9g,%.9g,%.4f\n" % history[-1])
    stale = 0
    gen = 0
    for gen in range(1, gp.max_generations + 1):
        pop = _next_generation(pop, costs, gp, gen)
        costs = fit(pop)
        ib = int(np.argmin(costs))
        if costs[ib] < best_c - 1e-12:
            best_q, best_c = pop[ib].copy(), float(costs[ib])
            stale = 0
        else:
            stale += 1
        history.append((gen, best_c, float(costs.mean()), time.perf_counter() - t0))
        if progress is not None:
            progress.write("%d,%.9g,%.9g,%.4f\n" % history[-1])
        if best_c == 0.0 or stale >= gp.convergence_patience:
            break
    m = fit.metrics(best_q)
    bits = expand_quadrant(best_q.reshape(cfg.n_quadrant, cfg.n_quadrant))
    w = WeightMatrix(bits, spec.steer_az, spec.steer_el)
    metrics = BeamMetrics(*(float(x) for x in m))
    wall = time.perf_counter() - t0
    return GaResult(w, best_c, gen, wall, metrics, best_c <= gp.accept_cost, history)


# ---------------------------------------------------------------------------
# dataset factory

@dataclass(frozen=True)
class SamplerRanges:
    """Uniform draw ranges for requested beams.

    Beamwidths, sidelobe targets, steering and the aperture fill fraction are
    drawn independently.  The target port count and EIRP follow from them via
    a uniform-aperture estimate so that the requested beam is physically
    consistent; ``eirp_offset_db`` is drawn uniformly on top of that estimate.
    """
    bw_az: tuple = (0.42, 1.0)
    bw_el: tuple = (0.42, 1.0)
    sll_az: tuple = (-22.0, -13.0)
    sll_el: tuple = (-22.0, -13.0)
    steer_az: tuple = (-4.0, 4.0)
    steer_el: tuple = (-4.0, 4.0)
    fill: tuple = (0.55, 0.95)
    eirp_offset_db: tuple = (-3.0, -1.0)

    def validate(self, cfg: ArrayConfig) -> None:
        from .array_model import aperture_beamwidth_deg

        for name in ("bw_az", "bw_el", "sll_az", "sll_el", "steer_az", "steer_el", "fill", "eirp_offset_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range {name} has lo > hi")
        limit = aperture_beamwidth_deg(cfg)
        for name in ("bw_az", "bw_el"):
            lo, hi = getattr(self, name)
            if lo < limit or hi > 2 * cfg.fov_half_angle:
                raise ValueError(f"{name} range must lie within [{limit:.3f}, {2 * cfg.fov_half_angle:g}] deg")
        for name in ("sll_az", "sll_el"):
            lo, hi = getattr(self, name)
            if lo < -30 or hi > -10:
                raise ValueError(f"{name} range must lie within [-30, -10] dB")
        for name in ("steer_az", "steer_el"):
            lo, hi = getattr(self, name)
            if max(abs(lo), abs(hi)) > cfg.fov_half_angle:
                raise ValueError(f"{name} range exceeds the field of view")
        lo, hi = self.fill
        if lo <= 0 or hi > 1:
            raise ValueError("fill range must lie within (0, 1]")

    def draw(self, cfg: ArrayConfig, rng: np.random.Generator) -> BeamSpec:
        u = lambda r: float(rng.uniform(*r))  # noqa: E731
        bw_az, bw_el = u(self.bw_az), u(self.bw_el)
        sll_az, sll_el = u(self.sll_az), u(self.sll_el)
        steer_az, steer_el = u(self.steer_az), u(self.steer_el)
        fill, offset = u(self.fill), u(self.eirp_offset_db)
        n_eff = []
        for bw in (bw_az, bw_el):
            n_eff.append(min(cfg.n_ports, 0.886 * cfg.lambda0 / (math.radians(bw) * cfg.port_spacing)))
        n = int(np.clip(round(fill * n_eff[0] * n_eff[1]), 4, cfg.n_ports ** 2))
        area = n_eff[0] * n_eff[1] * cfg.port_spacing ** 2
        d_ap = 10 * math.log10(4 * math.pi * area / cfg.lambda0 ** 2)
        eirp = 10 * math.log10(n * cfg.p_element) + d_ap + offset
        return BeamSpec(bw_az, bw_el, sll_az, sll_el, eirp, steer_az, steer_el, n)


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _generate_one(args):
    i, ranges, cfg, kw, gp, seed = args
    spec = ranges.draw(cfg, np.random.default_rng([seed, i]))
    gpi = GaParams(**{**gp.__dict__, "rng_seed": sample_seed(seed, i)})
    res = ga_optimize(spec, cfg, kw, gpi)
    return spec, res


def generate_dataset(
    ranges: SamplerRanges,
    n_samples: int,
    cfg: ArrayConfig,
    kw: CostWeights = CostWeights(),
    gp: GaParams = GaParams(),
    rng_seed: int = 0,
    quality_threshold: float = 0.3,
    workers: int = 1,
    progress=None,
):
    """Draw ``n_samples`` specs, label each with a GA run, and gate on cost.

    Samples with cost above ``quality_threshold`` are kept with
    ``accepted = False``.  ``progress`` is called as ``progress(i, n, result)``.
    """
    from .dataset import Dataset, Sample

    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ranges.validate(cfg)
    jobs = [(i, ranges, cfg, kw, gp, rng_seed) for i in range(n_samples)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = ex.map(_generate_one, jobs, chunksize=4)
            results = list(results)
    else:
        results = []
        for job in jobs:
            results.append(_generate_one(job))
            if progress is not None:
                progress(job[0], n_samples, results[-1][1])
    samples = []
    for spec, res in results:
        samples.append(Sample(
            spec=spec,
            quadrant_bits=extract_quadrant(res.weights.bits),
            achieved=res.metrics,
            cost=res.cost,
            accepted=res.cost <= quality_threshold,
        ))
    ds = Dataset.from_samples(samples, meta={"seed": rng_seed, "quality_threshold": quality_threshold})
    if ds.n_accepted == 0:
        raise ValueError(f"no sample met the quality gate (cost <= {quality_threshold})")
    return ds
