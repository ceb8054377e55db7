"""Objective landscape over the overlap, phase classification and
phase-transition curves.

The scaled objective xi1(c1) is swept over a grid of overlaps with
warm-started stationary solves.  Its minima structure decides the phase
of a shape:

  single local minimum, global at small error  -> any descending
                                                  support-swap solver
                                                  reaches the optimum;
  multiple minima, global at small error       -> the optimum is good but
                                                  descent generically
                                                  misses it;
  global minimum at large error                -> the estimator itself is
                                                  useless at this shape.

"Small error" means the residual error delta = sqrt(2 - 2 c1)/sigma of
the globally minimising overlap is within a configurable factor
(default 10) of the known-support error sqrt(beta/(alpha - beta)).

The aPT curve (boundary of the small-error region) and dPT curve
(boundary of the descendable region) are traced by bisection over beta at
fixed alpha.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from .dual import (
    DEFAULT_QUADRATURE,
    LiftLevel,
    Signal,
    SystemShape,
    doubling_error,
)
from .errors import AmbiguousLandscapeError, ConfigurationError, DomainError, SweepError
from .stationary import SolverConfig, StationaryPoint, solve_level

__all__ = [
    "CurvePointSample",
    "CurveResult",
    "MinimaReport",
    "Landscape",
    "PhaseRegion",
    "PTPoint",
    "SweepConfig",
    "default_c1_grid",
    "objective_curve",
    "classify_curve",
    "phase_region",
    "pt_curve",
    "pt_map",
]


class Landscape(enum.Enum):
    SINGLE_MIN = "SingleMin"
    MULTI_MIN = "MultiMin"


class PhaseRegion(enum.Enum):
    SMALL_ERROR_DESCENDABLE = "SmallErrorDescendable"
    SMALL_ERROR_NOT_DESCENDABLE = "SmallErrorNotDescendable"
    LARGE_ERROR = "LargeError"


@dataclass(frozen=True)
class SweepConfig:
    """Sweep and classification settings."""

    grid_points: int = 60
    c1_min: float = 0.005
    c1_max: float = 0.999
    flatness_eps: float | None = None      # default: 1e-3 * curve range
    refine_rounds: int = 3
    refine_factor: int = 4
    small_error_factor: float = 10.0
    max_unconverged_fraction: float = 0.2
    doubling_tol: float = 1e-8
    run_selftest: bool = True
    pt_beta_tol: float = 1e-3
    solver: SolverConfig = SolverConfig()


@dataclass(frozen=True)
class CurvePointSample:
    c1: float
    xi1: float
    converged: bool


@dataclass(frozen=True)
class CurveResult:
    shape: SystemShape
    level: LiftLevel
    grid: tuple            # CurvePointSample, sorted by c1 strictly increasing
    refined: bool
    points: tuple = field(default=(), repr=False)   # StationaryPoint per sample

    def c1_values(self):
        return np.array([g.c1 for g in self.grid])

    def xi_values(self):
        return np.array([g.xi1 for g in self.grid])


@dataclass(frozen=True)
class MinimaReport:
    minima: tuple                 # (c1_location, xi1_value, delta) triples
    global_min_index: int
    inflection_zones: tuple       # (c1_lo, c1_hi) intervals
    landscape: Landscape
    ambiguous: bool = False


@dataclass(frozen=True)
class PTPoint:
    alpha: float
    beta: float
    kind: str                     # "aPT" or "dPT"
    bracket_width: float


def default_c1_grid(config: SweepConfig = SweepConfig()) -> np.ndarray:
    return np.linspace(config.c1_min, config.c1_max, config.grid_points)


def _solve_point(shape, level, c1, warm, solver):
    try:
        return solve_level(shape, c1, level, warm_start=warm, config=solver)
    except (DomainError, FloatingPointError):
        return None


def objective_curve(shape: SystemShape, level: LiftLevel, c1_grid,
                    config: SweepConfig = SweepConfig(),
                    warm_points: dict | None = None) -> CurveResult:
    """Per-point stationary solves over the overlap grid.

    Warm starts propagate along the grid; unconverged points are retried
    from a cold start before being marked.  ``warm_points`` may carry
    solutions from a neighbouring sweep keyed by grid index.
    """
    c1_grid = np.asarray(sorted(c1_grid), dtype=float)
    if c1_grid.size == 0:
        raise ConfigurationError("empty c1 grid")
    solver = config.solver
    points: list = []
    samples: list = []
    selftest_done = not config.run_selftest
    warm = None
    for i, c1 in enumerate(c1_grid):
        candidates = []
        if warm_points is not None and i in warm_points:
            candidates.append(warm_points[i])
        if warm is not None:
            candidates.append(warm)
        candidates.append(None)
        point = None
        for cand in candidates:
            point = _solve_point(shape, level, float(c1), cand, solver)
            if point is not None and point.converged:
                break
        if point is not None and not selftest_done:
            err = doubling_error(shape, float(c1), point.vars, solver.quad)
            if err > config.doubling_tol:
                raise ConfigurationError(
                    f"quadrature doubling self-test failed: relative change "
                    f"{err:.2e} > {config.doubling_tol:.0e}; raise the orders")
            selftest_done = True
        if point is None:
            samples.append(CurvePointSample(float(c1), math.nan, False))
            points.append(None)
        else:
            samples.append(CurvePointSample(float(c1), point.xi1, point.converged))
            points.append(point)
            if point.converged:
                warm = point
    bad = sum(1 for s in samples if not s.converged)
    if bad > config.max_unconverged_fraction * len(samples):
        raise SweepError(
            f"{bad}/{len(samples)} grid points failed to converge")
    return CurveResult(shape=shape, level=level, grid=tuple(samples),
                       refined=False, points=tuple(points))


def _default_refiner(curve: CurveResult, config: SweepConfig):
    solver = config.solver
    solved = [(s.c1, p) for s, p in zip(curve.grid, curve.points)
              if p is not None and s.converged]

    def refine(c1_new: float):
        if solved:
            _, warm = min(solved, key=lambda t: abs(t[0] - c1_new))
        else:
            warm = None
        point = _solve_point(curve.shape, curve.level, c1_new, warm, solver)
        if point is not None and point.converged:
            solved.append((c1_new, point))
            return point.xi1
        return math.nan

    return refine


def _detect_minima(c1, xi, prominence):
    """Indices of local minima of xi with at least the given prominence.

    Endpoints participate: the negated curve is padded with a deep floor,
    so a curve falling into a grid edge registers a minimum there."""
    y = -xi
    floor = y.min() - 10.0 * max(y.max() - y.min(), 1e-30)
    pad = np.concatenate([[floor], y, [floor]])
    peaks, props = find_peaks(pad, prominence=prominence)
    return peaks - 1, props["prominences"]


def classify_curve(curve: CurveResult, flatness_eps: float | None = None,
                   refiner=None,
                   config: SweepConfig = SweepConfig()) -> MinimaReport:
    """Extrema classification with plateau tolerance and local refinement.

    A dip only counts as a minimum if its prominence exceeds flatness_eps;
    shallower dips and near-zero-slope stretches are recorded as
    inflection zones.  Candidates are refined by local grid subdivision
    before the final verdict; a depth that stays within the noise band of
    flatness_eps after refinement sets the ambiguous flag.
    """
    mask = np.array([s.converged for s in curve.grid])
    c1 = curve.c1_values()[mask]
    xi = curve.xi_values()[mask]
    if c1.size < 5:
        raise SweepError("too few converged samples to classify")
    rng = float(xi.max() - xi.min())
    if rng == 0.0:
        raise AmbiguousLandscapeError("flat curve: no extremal structure")
    eps = flatness_eps if flatness_eps is not None else \
        (config.flatness_eps if config.flatness_eps is not None else 1e-3 * rng)
    if refiner is None:
        refiner = _default_refiner(curve, config)

    tiny = max(1e-12, 1e-6 * rng)
    for _ in range(config.refine_rounds):
        cand_idx, _ = _detect_minima(c1, xi, tiny)
        new_c1 = []
        for i in cand_idx:
            lo = c1[max(i - 1, 0)]
            hi = c1[min(i + 1, c1.size - 1)]
            step = (hi - lo) / (2 * config.refine_factor)
            if step <= 1e-7:
                continue
            new_c1.extend(float(x) for x in np.arange(lo + step, hi, step))
        new_c1 = [x for x in new_c1
                  if np.min(np.abs(c1 - x)) > 1e-9]
        if not new_c1:
            break
        new_xi = np.array([refiner(x) for x in new_c1])
        keep = np.isfinite(new_xi)
        c1 = np.concatenate([c1, np.array(new_c1)[keep]])
        xi = np.concatenate([xi, new_xi[keep]])
        order = np.argsort(c1)
        c1, xi = c1[order], xi[order]

    min_idx, prominences = _detect_minima(c1, xi, tiny)
    confirmed = [(int(i), float(p)) for i, p in zip(min_idx, prominences)
                 if p >= eps]
    shallow = [(int(i), float(p)) for i, p in zip(min_idx, prominences)
               if p < eps]
    ambiguous = any(0.5 * eps <= p <= 2.0 * eps for _, p in shallow) or \
        any(0.5 * eps <= p <= 2.0 * eps for _, p in confirmed)

    if not confirmed:
        # fall back: the smallest sample is the single minimum
        confirmed = [(int(np.argmin(xi)), rng)]
    sigma = curve.shape.sigma
    minima = tuple(
        (float(c1[i]), float(xi[i]), math.sqrt(max(2.0 - 2.0 * c1[i], 0.0)) / sigma)
        for i, _ in confirmed)
    gmin = int(np.argmin([m[1] for m in minima]))

    zones = []
    spacing = np.diff(c1)
    for i, _ in shallow:
        lo = c1[max(i - 1, 0)]
        hi = c1[min(i + 1, c1.size - 1)]
        zones.append((float(lo), float(hi)))
    # near-zero-slope stretches away from confirmed minima
    slopes = np.diff(xi) / spacing
    typical = rng / (c1[-1] - c1[0])
    flat = np.abs(slopes) < 0.02 * typical
    i = 0
    while i < flat.size:
        if flat[i]:
            j = i
            while j + 1 < flat.size and flat[j + 1]:
                j += 1
            lo, hi = float(c1[i]), float(c1[j + 1])
            if not any(lo - 1e-9 <= m[0] <= hi + 1e-9 for m in minima):
                zones.append((lo, hi))
            i = j + 1
        else:
            i += 1
    zones = tuple(sorted(set(zones)))

    landscape = Landscape.SINGLE_MIN if len(minima) == 1 else Landscape.MULTI_MIN
    return MinimaReport(minima=minima, global_min_index=gmin,
                        inflection_zones=zones, landscape=landscape,
                        ambiguous=bool(ambiguous))


def _small_error(shape: SystemShape, delta: float, factor: float) -> bool:
    if shape.beta >= shape.alpha:
        return False
    ideal = math.sqrt(shape.beta / (shape.alpha - shape.beta))
    return delta <= factor * ideal


def phase_region(shape: SystemShape, level: LiftLevel,
                 config: SweepConfig = SweepConfig(),
                 warm_points: dict | None = None,
                 _curve_out: list | None = None) -> PhaseRegion:
    """Classify a shape into one of the three problem phases."""
    if shape.beta >= shape.alpha:
        return PhaseRegion.LARGE_ERROR
    curve = objective_curve(shape, level, default_c1_grid(config), config,
                            warm_points=warm_points)
    if _curve_out is not None:
        _curve_out.append(curve)
    report = classify_curve(curve, config=config)
    if report.ambiguous:
        raise AmbiguousLandscapeError(
            f"landscape classification ambiguous at alpha={shape.alpha}, "
            f"beta={shape.beta}")
    c1_g, _, delta_g = report.minima[report.global_min_index]
    small = _small_error(shape, delta_g, config.small_error_factor)
    if not small:
        return PhaseRegion.LARGE_ERROR
    if report.landscape is Landscape.SINGLE_MIN:
        return PhaseRegion.SMALL_ERROR_DESCENDABLE
    return PhaseRegion.SMALL_ERROR_NOT_DESCENDABLE


class _RegionProbe:
    """Caches phase classifications along beta at fixed alpha and reuses
    each converged curve to warm-start the next probe."""

    def __init__(self, alpha, sigma, signal, level, config):
        self.alpha = alpha
        self.sigma = sigma
        self.signal = signal
        self.level = level
        self.config = config
        self.cache: dict = {}
        self.last_curve: CurveResult | None = None

    def region(self, beta: float) -> PhaseRegion:
        key = round(beta, 12)
        if key in self.cache:
            return self.cache[key]
        shape = SystemShape(alpha=self.alpha, beta=beta, sigma=self.sigma,
                            signal=self.signal)
        warm = None
        if self.last_curve is not None:
            warm = {i: p for i, p in enumerate(self.last_curve.points)
                    if p is not None}
        out: list = []
        try:
            reg = phase_region(shape, self.level, self.config,
                               warm_points=warm, _curve_out=out)
        except SweepError:
            reg = PhaseRegion.LARGE_ERROR
        if out:
            self.last_curve = out[0]
        self.cache[key] = reg
        return reg


def _bisect_boundary(probe: _RegionProbe, inside, lo, hi, tol):
    """Largest beta with inside(region(beta)) true, located to width tol."""
    events = []
    if not inside(probe.region(lo)):
        return None, [f"alpha={probe.alpha}: no inside region found at beta={lo}"]
    if inside(probe.region(hi)):
        return hi, [f"alpha={probe.alpha}: boundary above scanned range"]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if inside(probe.region(mid)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), events


def pt_curve(alpha_grid, sigma: float, kind: str, level: LiftLevel = LiftLevel.L2,
             signal: Signal = Signal.BINARY,
             config: SweepConfig = SweepConfig()) -> list:
    """Trace one phase-transition curve over the alpha grid.

    kind "a": boundary of the small-error region; kind "d": boundary of
    the descendable region.
    """
    points, _ = _trace(alpha_grid, sigma, kind, level, signal, config)
    return points


def _inside_fn(kind: str):
    if kind == "d":
        return lambda r: r is PhaseRegion.SMALL_ERROR_DESCENDABLE
    if kind == "a":
        return lambda r: r is not PhaseRegion.LARGE_ERROR
    raise ConfigurationError(f"unknown PT kind {kind!r}")


def _trace(alpha_grid, sigma, kind, level, signal, config):
    kind = "d" if str(kind).lower().startswith("d") else "a"
    inside = _inside_fn(kind)
    out = []
    findings = []
    for alpha in np.asarray(alpha_grid, dtype=float):
        probe = _RegionProbe(float(alpha), sigma, signal, level, config)
        lo = max(0.0025, 0.02 * alpha)
        hi = 0.995 * alpha
        beta, events = _bisect_boundary(probe, inside, lo, hi, config.pt_beta_tol)
        findings.extend(events)
        if beta is None:
            # no inside region even at tiny beta: fall back to a fine scan
            scan = np.linspace(lo, hi, 40)
            hits = [b for b in scan if inside(probe.region(float(b)))]
            findings.append(f"alpha={alpha}: bisection invalid, fine scan used")
            beta = max(hits) if hits else lo
        out.append(PTPoint(alpha=float(alpha), beta=float(beta),
                           kind="aPT" if kind == "a" else "dPT",
                           bracket_width=config.pt_beta_tol))
    betas = [p.beta for p in out]
    if any(b2 < b1 - 1e-9 for b1, b2 in zip(betas, betas[1:])):
        findings.append(f"{out[0].kind}: beta not monotone along alpha grid")
    return out, findings


def pt_map(alpha_grid, sigma: float, level: LiftLevel = LiftLevel.L2,
           signal: Signal = Signal.BINARY,
           config: SweepConfig = SweepConfig()):
    """Both PT curves over one alpha grid, sharing classification work.

    Returns (dpt_points, apt_points, findings)."""
    dpt = []
    apt = []
    findings = []
    for alpha in np.asarray(alpha_grid, dtype=float):
        probe = _RegionProbe(float(alpha), sigma, signal, level, config)
        lo = max(0.0025, 0.02 * alpha)
        hi = 0.995 * alpha
        beta_d, ev_d = _bisect_boundary(probe, _inside_fn("d"), lo, hi,
                                        config.pt_beta_tol)
        beta_a, ev_a = _bisect_boundary(probe, _inside_fn("a"),
                                        max(lo, (beta_d or lo) - config.pt_beta_tol),
                                        hi, config.pt_beta_tol)
        findings.extend(ev_d + ev_a)
        if beta_d is None or beta_a is None:
            scan = np.linspace(lo, hi, 40)
            regs = {float(b): probe.region(float(b)) for b in scan}
            if beta_d is None:
                hits = [b for b, r in regs.items()
                        if r is PhaseRegion.SMALL_ERROR_DESCENDABLE]
                beta_d = max(hits) if hits else lo
                findings.append(f"alpha={alpha}: dPT fine scan used")
            if beta_a is None:
                hits = [b for b, r in regs.items()
                        if r is not PhaseRegion.LARGE_ERROR]
                beta_a = max(hits) if hits else lo
                findings.append(f"alpha={alpha}: aPT fine scan used")
        beta_a = max(beta_a, beta_d)
        dpt.append(PTPoint(float(alpha), float(beta_d), "dPT", config.pt_beta_tol))
        apt.append(PTPoint(float(alpha), float(beta_a), "aPT", config.pt_beta_tol))
    for pts in (dpt, apt):
        betas = [p.beta for p in pts]
        if any(b2 < b1 - 1e-9 for b1, b2 in zip(betas, betas[1:])):
            findings.append(f"{pts[0].kind}: beta not monotone along alpha grid")
    return dpt, apt, findings
