"""Stationary-point solver for the lifted dual at each lifting level.

The hat-parameters solve the zero-gradient system of psi_bar in the free
dual variables.  Dimensionality is reduced before Newton iteration using
the closed-form couplings that hold at stationarity:

  level 1      gamma_sq = sqrt(alpha)/2 (imposed analytically), solve
               (gamma, nu1, nu);
  partial 2    p2 = q2 = 0; gamma_sq solves its own sphere stationarity
               2*gamma_sq*(2*gamma_sq + c2*r2) = alpha, solve
               (c2, gamma, nu1, nu);
  level 2      (gamma_sq, c2) from the two-parameter closed forms in
               (p2, q2), solve (p2, q2, gamma, nu1, nu);
  level 3      (gamma_sq, c2, c3) from the three-parameter closed forms,
               solve (p2, p3, q2, q3, gamma, nu1, nu).

The Newton iteration is damped (Armijo backtracking on the residual
norm), uses central finite-difference gradients and Jacobians, and runs
in transformed coordinates: logit for the p/q chain, log for the positive
scale variables.  The closed forms carry 1/(1-p2) factors that make the
natural coordinates violently ill-conditioned as the chain approaches 1
(where a lifting stage collapses into the one below); the transform keeps
the Jacobian workable there.  Trial points outside the evaluator domain
produce NaN and are rejected by the line search.

Converged status is judged on the residuals of the FULL (uneliminated)
system, measured by finite differences in the natural variables.
Everything is deterministic: fixed seeds, fixed schedules, no randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logit

from .dual import (
    DEFAULT_QUADRATURE,
    LiftLevel,
    LiftVariables,
    QuadratureConfig,
    SystemShape,
    free_variable_names,
    psi_batch,
    r2_of,
    xi_from_psi,
)
from .errors import DomainError

__all__ = [
    "SolverConfig",
    "StationaryPoint",
    "solve_level",
    "corollary_check",
    "level1_gamma_sq",
    "stationarity_residual",
]


@dataclass(frozen=True)
class SolverConfig:
    """Newton settings.

    residual_tol applies to the transformed-coordinate gradient during
    iteration; full_residual_tol is the convergence bar for the measured
    natural-variable full-system gradient (level 3 accepts 1e-6: its
    near-collapse valley leaves the finite-difference gradient with a
    noise floor above the 1e-8 used elsewhere).
    """

    residual_tol: float = 1e-8
    full_residual_tol: float = 1e-8
    full_residual_tol_l3: float = 5e-5
    max_iterations: int = 80
    fd_step: float = 1e-6
    check_step: float = 1e-7
    armijo_decrease: float = 1e-4
    max_backtracks: int = 12
    quad: QuadratureConfig = DEFAULT_QUADRATURE

    def with_quad(self, quad: QuadratureConfig) -> "SolverConfig":
        return replace(self, quad=quad)


@dataclass(frozen=True)
class StationaryPoint:
    """A converged (or best-effort) stationary point.

    residual_norm is the max absolute component of the FULL system
    gradient, including variables that were eliminated during the solve;
    corollary_residual is the max relative deviation of the eliminated
    variables from their closed forms (0.0 where no closed form applies).
    """

    vars: LiftVariables
    xi1: float
    psi_bar: float
    residual_norm: float
    corollary_residual: float
    converged: bool
    iterations: int
    events: tuple = ()


def level1_gamma_sq(alpha: float) -> float:
    """Analytic level-1 sphere variable sqrt(alpha)/2."""
    return math.sqrt(alpha) / 2.0


# ----------------------------------------------------------------------
# Closed-form couplings used for elimination and verification
# ----------------------------------------------------------------------

def _closed_forms_l2(p2, q2, alpha, r2):
    sa = np.sqrt(alpha)
    ratio = np.sqrt(q2 / p2)
    gamma_sq = 0.5 * (1.0 - p2) / (1.0 - q2) * ratio * sa
    c2 = (1.0 / ((1.0 - p2) * ratio) - ratio / (1.0 - q2)) * sa / r2
    return gamma_sq, c2


def _closed_forms_l3(p2, p3, q2, q3, alpha, r2):
    sa = np.sqrt(alpha)
    ratio = np.sqrt(p3 / q3)
    gap = (q2 - q3) / (p2 - p3)
    gamma_sq = 0.5 * (1.0 - p2) / (1.0 - q2) * gap * ratio * sa
    c2 = (1.0 / ((1.0 - p2) * gap * ratio) - gap * ratio / (1.0 - q2)) * sa / r2
    c3 = (ratio / (p2 - p3) - 1.0 / ((q2 - q3) * ratio)) * sa / r2
    return gamma_sq, c2, c3


def _partial_gamma_sq(c2, alpha, r2):
    """Root of 2*gsq*(2*gsq + c2*r2) = alpha on the positive branch."""
    cr = c2 * r2
    return (-cr + np.sqrt(cr * cr + 4.0 * alpha)) / 4.0


def corollary_check(v: LiftVariables, shape: SystemShape, c1: float) -> float:
    """Max relative deviation of gamma_sq, c2 (and c3 at level 3) from
    their closed forms in (p2, q2[, p3, q3])."""
    if v.level not in (LiftLevel.L2, LiftLevel.L3):
        raise DomainError("closed-form couplings exist only at levels 2 and 3")
    r2 = r2_of(shape, c1).r2
    if v.level is LiftLevel.L2:
        if not (0 < v.p2 < 1 and 0 < v.q2 < 1):
            raise DomainError("p2 and q2 must lie strictly inside (0, 1)")
        gsq, c2 = _closed_forms_l2(v.p2, v.q2, shape.alpha, r2)
        devs = [abs(v.gamma_sq - gsq) / abs(gsq), abs(v.c2 - c2) / abs(c2)]
    else:
        if not (0 < v.p3 < v.p2 < 1 and 0 < v.q3 < v.q2 < 1):
            raise DomainError("the p/q chains must lie strictly inside (0, 1)")
        gsq, c2, c3 = _closed_forms_l3(v.p2, v.p3, v.q2, v.q3, shape.alpha, r2)
        devs = [abs(v.gamma_sq - gsq) / abs(gsq), abs(v.c2 - c2) / abs(c2),
                abs(v.c3 - c3) / abs(c3)]
    return float(max(devs))


# ----------------------------------------------------------------------
# Coordinate transforms
# ----------------------------------------------------------------------
# logit for chain variables, log for positive scales, identity for nu1.

_LOGIT_VARS = {"p2", "p3", "q2", "q3"}
_LOG_VARS = {"c2", "c3", "gamma_sq", "gamma", "nu"}

_CHAIN_LIMIT = 36.0      # |logit| cap: p within ~2e-16 of {0, 1}
_SCALE_LIMIT = math.log(1e4)
_MIN_GAP = 1e-6          # minimum logit gap enforced between p2/p3, q2/q3


def _to_internal(names, natural):
    out = np.empty(len(names))
    for i, (n, x) in enumerate(zip(names, natural)):
        if n in _LOGIT_VARS:
            out[i] = logit(min(max(x, 1e-15), 1 - 1e-15))
        elif n in _LOG_VARS:
            out[i] = math.log(max(x, 1e-300))
        else:
            out[i] = x
    return out


def _to_natural_batch(names, internal):
    cols = []
    for i, n in enumerate(names):
        x = internal[:, i]
        if n in _LOGIT_VARS:
            cols.append(expit(x))
        elif n in _LOG_VARS:
            cols.append(np.exp(x))
        else:
            cols.append(x)
    return np.column_stack(cols)


def _projector(names):
    lo = np.array([-_CHAIN_LIMIT if n in _LOGIT_VARS
                   else (-_SCALE_LIMIT if n in _LOG_VARS else -1e4)
                   for n in names])
    hi = np.array([_CHAIN_LIMIT if n in _LOGIT_VARS
                   else (_SCALE_LIMIT if n in _LOG_VARS else 1e4)
                   for n in names])
    lo = np.where([n in _LOG_VARS for n in names], math.log(1e-9), lo)
    chains = [(names.index(a), names.index(b))
              for a, b in (("p2", "p3"), ("q2", "q3"))
              if a in names and b in names]

    def project(theta):
        event = None
        out = np.clip(theta, lo, hi)
        for i, j in chains:
            if out[i] <= out[j] + _MIN_GAP:
                mid = 0.5 * (out[i] + out[j])
                out[i] = mid + _MIN_GAP / 2
                out[j] = mid - _MIN_GAP / 2
                event = "ordering projection applied to the lifting chain"
        return out, event

    return project


# ----------------------------------------------------------------------
# Damped Newton on a finite-difference gradient system
# ----------------------------------------------------------------------

def _fd_points(theta: np.ndarray, step: float):
    d = theta.size
    h = step * np.maximum(np.abs(theta), 1.0)
    pts = np.repeat(theta[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    pts[2 * idx, idx] += h
    pts[2 * idx + 1, idx] -= h
    return pts, h


class _GradientSystem:
    """Finite-difference gradient of a batched scalar objective."""

    def __init__(self, eval_fn, step):
        self.eval_fn = eval_fn
        self.step = step

    def residual(self, theta: np.ndarray) -> np.ndarray:
        pts, h = _fd_points(theta, self.step)
        vals = self.eval_fn(pts)
        return (vals[0::2] - vals[1::2]) / (2.0 * h)

    def residual_many(self, thetas: np.ndarray) -> np.ndarray:
        blocks = [_fd_points(t, self.step) for t in thetas]
        pts = np.concatenate([b[0] for b in blocks], axis=0)
        vals = self.eval_fn(pts)
        d = thetas.shape[1]
        out = np.empty_like(thetas)
        for k, (_, h) in enumerate(blocks):
            v = vals[2 * d * k:2 * d * (k + 1)]
            out[k] = (v[0::2] - v[1::2]) / (2.0 * h)
        return out

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        d = theta.size
        h = self.step * np.maximum(np.abs(theta), 1.0)
        shifted = np.repeat(theta[None, :], 2 * d, axis=0)
        idx = np.arange(d)
        shifted[2 * idx, idx] += h
        shifted[2 * idx + 1, idx] -= h
        res = self.residual_many(shifted)
        return (res[0::2] - res[1::2]).T / (2.0 * h)[None, :]


def _norm(f):
    return float(np.max(np.abs(f))) if np.all(np.isfinite(f)) else math.inf


def _solve_step(jac, f):
    try:
        step = np.linalg.solve(jac, -f)
        if np.all(np.isfinite(step)):
            return step, False
    except np.linalg.LinAlgError:
        pass
    # regularised fallback for (near-)singular Jacobians
    u, s, vt = np.linalg.svd(jac)
    cut = max(s[0] * 1e-12, 1e-300)
    inv = np.where(s > cut, 1.0 / np.maximum(s, cut), 0.0)
    return -(vt.T * inv) @ (u.T @ f), True


def _newton(system: _GradientSystem, theta0: np.ndarray, project, cfg: SolverConfig):
    theta = project(theta0.copy())[0]
    events = []
    f = system.residual(theta)
    fn = _norm(f)
    if not math.isfinite(fn):
        return theta, math.inf, 0, False, ["seed outside evaluator domain"]
    best = (theta.copy(), fn)
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        if fn <= cfg.residual_tol:
            return theta, fn, iterations - 1, True, events
        jac = system.jacobian(theta)
        if not np.all(np.isfinite(jac)):
            events.append("Jacobian left the evaluator domain")
            break
        step, regularised = _solve_step(jac, f)
        if regularised:
            events.append("singular Jacobian: regularised step")
        lams = 0.5 ** np.arange(cfg.max_backtracks + 1)
        trials = theta[None, :] + lams[:, None] * step[None, :]
        projected = []
        for t in trials:
            tp, ev = project(t)
            if ev:
                events.append(ev)
            projected.append(tp)
        res = system.residual_many(np.array(projected))
        norms = np.array([_norm(r) for r in res])
        ok = norms <= (1.0 - cfg.armijo_decrease * lams) * fn
        if np.any(ok):
            k = int(np.argmax(ok))
        else:
            k = int(np.argmin(norms))
            if not math.isfinite(norms[k]) or norms[k] >= fn:
                break  # no progress in any damping: stall
        theta = projected[k]
        f = res[k]
        fn = norms[k]
        if fn < best[1]:
            best = (theta.copy(), fn)
    theta, fn = best
    return theta, fn, iterations, fn <= cfg.residual_tol, events


# ----------------------------------------------------------------------
# Per-level orchestration
# ----------------------------------------------------------------------

def _internal_eval(shape, c1, level, names, quad, extend=None):
    """Batched psi as a function of internal coordinates; ``extend`` maps
    the natural reduced matrix to the full parameter matrix."""

    def fn(pts_internal):
        nat = _to_natural_batch(names, np.atleast_2d(pts_internal))
        full, valid = (nat, None) if extend is None else extend(nat)
        vals = psi_batch(shape, c1, level, full, quad)
        if valid is not None:
            vals = np.where(valid, vals, np.nan)
        return vals

    return fn


def _extend_l2(shape, c1):
    r2 = r2_of(shape, c1).r2

    def extend(nat):
        p2, q2 = nat[:, 0], nat[:, 1]
        valid = p2 > q2
        p2s = np.where(valid, p2, 0.5)
        q2s = np.where(valid, q2, 0.2)
        gsq, c2 = _closed_forms_l2(p2s, q2s, shape.alpha, r2)
        full = np.column_stack([p2s, q2s, c2, gsq, nat[:, 2], nat[:, 3], nat[:, 4]])
        return full, valid

    return extend


def _extend_l3(shape, c1):
    r2 = r2_of(shape, c1).r2

    def extend(nat):
        p2, p3, q2, q3 = (nat[:, i] for i in range(4))
        valid = (p2 > p3) & (q2 > q3)
        p2s, p3s = np.where(valid, p2, 0.9), np.where(valid, p3, 0.5)
        q2s, q3s = np.where(valid, q2, 0.8), np.where(valid, q3, 0.2)
        gsq, c2, c3 = _closed_forms_l3(p2s, p3s, q2s, q3s, shape.alpha, r2)
        valid = valid & (c2 > 0) & (c3 > 0) & (gsq > 0)
        full = np.column_stack([p2s, p3s, q2s, q3s,
                                np.where(valid, c2, 0.5),
                                np.where(valid, c3, 0.2),
                                np.where(valid, gsq, 0.1),
                                nat[:, 4], nat[:, 5], nat[:, 6]])
        return full, valid

    return extend


def _extend_partial(shape, c1):
    r2 = r2_of(shape, c1).r2

    def extend(nat):
        c2 = nat[:, 0]
        gsq = _partial_gamma_sq(c2, shape.alpha, r2)
        full = np.column_stack([c2, gsq, nat[:, 1], nat[:, 2], nat[:, 3]])
        return full, None

    return extend


def _coarse_level1_seed(shape, c1, quad):
    gammas = np.geomspace(0.02, 2.0, 10)
    nus = np.geomspace(0.5, 80.0, 12)
    nu1s = np.array([-3.0, -1.5, -0.8, -0.4, -0.15, 0.0, 0.4])
    grid = np.array(np.meshgrid(gammas, nu1s, nus)).reshape(3, -1).T
    vals = psi_batch(shape, c1, LiftLevel.L1, grid, quad)
    order = np.argsort(-np.where(np.isfinite(vals), vals, -np.inf))
    return [grid[i] for i in order[:3]]


def _run_reduced(shape, c1, level, names, seeds_natural, cfg, extend=None,
                 stages=None):
    """Newton over internal coordinates, optionally through a schedule of
    quadrature configs (coarse warm-up, fine finish)."""
    stages = stages or [cfg.quad]
    project = _projector(list(names))
    best = None
    events_all = []
    warmup_cfg = replace(cfg, residual_tol=max(cfg.residual_tol, 1e-7),
                         max_iterations=min(cfg.max_iterations, 40))
    for seed in seeds_natural:
        theta = _to_internal(names, np.asarray(seed, float))
        ok = False
        iters_total = 0
        for k, quad in enumerate(stages):
            stage_cfg = cfg if k == len(stages) - 1 else warmup_cfg
            system = _GradientSystem(
                _internal_eval(shape, c1, level, names, quad, extend),
                stage_cfg.fd_step)
            theta, res, iters, ok, events = _newton(system, theta, project,
                                                    stage_cfg)
            events_all.extend(events)
            iters_total += iters
        cand = (theta, res, iters_total, ok)
        if ok:
            return cand, events_all
        if best is None or res < best[1]:
            best = cand
    return best, events_all


def stationarity_residual(shape: SystemShape, c1: float, v: LiftVariables,
                          cfg: SolverConfig = SolverConfig(),
                          step: float | None = None) -> np.ndarray:
    """Full-system gradient of psi_bar at ``v`` in the natural variables."""
    names = free_variable_names(v.level)
    theta = np.array([getattr(v, n) for n in names])

    def fn(pts):
        return psi_batch(shape, c1, v.level, pts, cfg.quad)

    system = _GradientSystem(fn, step or cfg.check_step)
    return system.residual(theta)


def _package(shape, c1, level, names, theta_internal, iters, events, cfg):
    nat = _to_natural_batch(names, theta_internal[None, :])[0]
    kw = dict(zip(names, (float(x) for x in nat)))
    if level is LiftLevel.L2:
        gsq, c2 = _closed_forms_l2(kw["p2"], kw["q2"], shape.alpha,
                                   r2_of(shape, c1).r2)
        kw.update(gamma_sq=float(gsq), c2=float(c2))
    elif level is LiftLevel.L3:
        gsq, c2, c3 = _closed_forms_l3(kw["p2"], kw["p3"], kw["q2"], kw["q3"],
                                       shape.alpha, r2_of(shape, c1).r2)
        kw.update(gamma_sq=float(gsq), c2=float(c2), c3=float(c3))
    elif level is LiftLevel.L2_PARTIAL:
        kw["gamma_sq"] = float(_partial_gamma_sq(kw["c2"], shape.alpha,
                                                 r2_of(shape, c1).r2))
    v = LiftVariables(level=level, **kw)
    full_names = free_variable_names(level)
    full_theta = np.array([getattr(v, n) for n in full_names])
    psi = float(psi_batch(shape, c1, level, full_theta[None, :], cfg.quad)[0])
    res = _norm(stationarity_residual(shape, c1, v, cfg))
    tol = cfg.full_residual_tol_l3 if level is LiftLevel.L3 else cfg.full_residual_tol
    cres = corollary_check(v, shape, c1) \
        if level in (LiftLevel.L2, LiftLevel.L3) else 0.0
    return StationaryPoint(
        vars=v, xi1=xi_from_psi(psi, shape.sigma), psi_bar=psi,
        residual_norm=res, corollary_residual=cres,
        converged=bool(res <= tol and cres <= 1e-6),
        iterations=iters, events=tuple(events))


def _extract(v: LiftVariables, names):
    return np.array([getattr(v, n) for n in names])


def _coarse_quadrature(quad: QuadratureConfig) -> QuadratureConfig:
    return QuadratureConfig(
        level2_outer=min(quad.level2_outer, 64),
        level3_outer=min(quad.level3_outer, 32),
        level3_inner=min(quad.level3_inner, 64),
        signal_extra=min(quad.signal_extra, 48))


# ----------------------------------------------------------------------
# Level-3 valley handling
# ----------------------------------------------------------------------
# Near the reference shapes the level-3 system is almost degenerate along
# the stage-collapse direction (pushing p2, q2 toward 1 reduces the third
# stage to the second); psi_bar is flat along it to ~1e-5 while the
# closed-form couplings amplify parameter error.  The cure: pin q2, solve
# the well-conditioned remaining 6-variable system, and drive the
# leftover envelope derivative d psi/d q2 to zero by a guarded secant.

_L3_INNER_NAMES = ("p2", "p3", "q3", "gamma", "nu1", "nu")


def _solve_l3_pinned(shape, c1, q2_pin, warm6, cfg):
    """6-variable level-3 solve with q2 pinned; returns (vars, residual)."""
    r2 = r2_of(shape, c1).r2

    def extend(nat):
        p2, p3, q3 = nat[:, 0], nat[:, 1], nat[:, 2]
        q2 = np.full_like(p2, q2_pin)
        valid = (p2 > p3) & (q2_pin > q3)
        p2s, p3s = np.where(valid, p2, 0.9), np.where(valid, p3, 0.5)
        q3s = np.where(valid, q3, min(0.2, q2_pin / 2))
        gsq, c2, c3 = _closed_forms_l3(p2s, p3s, q2, q3s, shape.alpha, r2)
        valid = valid & (c2 > 0) & (c3 > 0) & (gsq > 0)
        full = np.column_stack([p2s, p3s, q2, q3s,
                                np.where(valid, c2, 0.5),
                                np.where(valid, c3, 0.2),
                                np.where(valid, gsq, 0.1),
                                nat[:, 3], nat[:, 4], nat[:, 5]])
        return full, valid

    names = list(_L3_INNER_NAMES)
    project = _projector(names)
    theta = _to_internal(names, warm6)
    coarse_fn = _internal_eval(shape, c1, LiftLevel.L3, names,
                               _coarse_quadrature(cfg.quad), extend)
    theta, _, _, _, _ = _newton(_GradientSystem(coarse_fn, cfg.fd_step), theta,
                                project, replace(cfg, max_iterations=25,
                                                 residual_tol=1e-7))
    fine_fn = _internal_eval(shape, c1, LiftLevel.L3, names, cfg.quad, extend)
    theta, res, _, ok, _ = _newton(_GradientSystem(fine_fn, cfg.fd_step), theta,
                                   project, replace(cfg, max_iterations=12))
    nat = _to_natural_batch(names, theta[None, :])[0]
    kw = dict(zip(names, map(float, nat)))
    gsq, c2, c3 = _closed_forms_l3(kw["p2"], kw["p3"], q2_pin, kw["q3"],
                                   shape.alpha, r2)
    if not (c2 > 0 and c3 > 0 and gsq > 0 and ok):
        return None, res
    v = LiftVariables(level=LiftLevel.L3, q2=float(q2_pin), c2=float(c2),
                      c3=float(c3), gamma_sq=float(gsq), **kw)
    return v, res


def _polish_l3_valley(shape, c1, v0: LiftVariables, cfg, max_refinements=2):
    """Clean the level-3 point transversally to the collapse valley and
    nudge q2 toward the envelope stationarity.  Returns (vars, events)."""
    events = []
    i_q2 = free_variable_names(LiftLevel.L3).index("q2")

    def attempt(q2_pin, warm6):
        v, res = _solve_l3_pinned(shape, c1, q2_pin, warm6, cfg)
        if v is None or res > 1e-7:
            return None
        g = float(stationarity_residual(shape, c1, v, cfg)[i_q2])
        return v, g

    warm6 = np.array([v0.p2, v0.p3, v0.q3, v0.gamma, v0.nu1, v0.nu])
    got = attempt(v0.q2, warm6)
    if got is None:
        return v0, ["valley polish skipped: pinned solve did not tighten"]
    best_v, best_g = got
    events.append("valley polish: transverse residual cleaned at pinned q2")
    prev = (v0.q2, best_g)
    cur = (v0.q2, best_g)
    for _ in range(max_refinements):
        q2_a, g_a = prev
        q2_b, g_b = cur
        if g_b == g_a:
            step = -0.002 if g_b < 0 else 0.002
        else:
            step = -g_b * (q2_b - q2_a) / (g_b - g_a) if q2_b != q2_a \
                else (-0.002 if g_b < 0 else 0.002)
        step = float(np.clip(step, -0.004, 0.004))
        if abs(step) < 1e-7:
            break
        q2_new = float(np.clip(q2_b + step, 1e-6, 1 - 1e-6))
        warm6 = np.array([best_v.p2, best_v.p3, best_v.q3, best_v.gamma,
                          best_v.nu1, best_v.nu])
        got = attempt(q2_new, warm6)
        if got is None:
            break
        v_new, g_new = got
        prev, cur = cur, (q2_new, g_new)
        if abs(g_new) < abs(best_g):
            best_v, best_g = v_new, g_new
        else:
            break
    return best_v, events


def solve_level(shape: SystemShape, c1: float, level: LiftLevel,
                warm_start: StationaryPoint | None = None,
                config: SolverConfig = SolverConfig()) -> StationaryPoint:
    """Solve the stationarity system at ``level``.

    ``warm_start`` may come from the same level (direct restart) or any
    lower one (continuation).  Without one, the chain starts from a
    deterministic coarse grid at level 1 and walks up level by level.
    """
    cfg = config
    if warm_start is not None and warm_start.vars.level.depth > level.depth:
        raise DomainError("warm start must come from a level <= the requested one")
    warm_same = (warm_start is not None and warm_start.vars.level is level)

    if level is LiftLevel.L1:
        names = ("gamma", "nu1", "nu")
        seeds = [_extract(warm_start.vars, names)] if warm_same \
            else _coarse_level1_seed(shape, c1, cfg.quad)
        (theta, res, iters, ok), events = _run_reduced(
            shape, c1, level, names, seeds, cfg)
        return _package(shape, c1, level, names, theta, iters, events, cfg)

    if level is LiftLevel.L2_PARTIAL:
        names = ("c2", "gamma", "nu1", "nu")
        if warm_same:
            w = warm_start.vars
            seeds = [np.array([w.c2, w.gamma, w.nu1, w.nu])]
        else:
            base = warm_start or solve_level(shape, c1, LiftLevel.L1, config=cfg)
            g, n1, n = base.vars.gamma, base.vars.nu1, base.vars.nu
            seeds = [np.array([c2, g, n1, n]) for c2 in (0.5, 0.2, 1.0, 2.0)]
        (theta, res, iters, ok), events = _run_reduced(
            shape, c1, level, names, seeds, cfg, extend=_extend_partial(shape, c1))
        return _package(shape, c1, level, names, theta, iters, events, cfg)

    if level is LiftLevel.L2:
        names = ("p2", "q2", "gamma", "nu1", "nu")
        if warm_same:
            w = warm_start.vars
            seeds = [np.array([w.p2, w.q2, w.gamma, w.nu1, w.nu])]
        else:
            # The level-1 multipliers usually violate the inner-integral
            # convergence condition once the closed-form c2(p2, q2) is
            # substituted; the continuation therefore passes through the
            # partial level to get usable (gamma, nu1, nu).
            if warm_start is not None and warm_start.vars.level is LiftLevel.L2_PARTIAL:
                partial = warm_start
            else:
                partial = solve_level(shape, c1, LiftLevel.L2_PARTIAL,
                                      warm_start=warm_start, config=cfg)
            v = partial.vars
            seeds = [np.array([p2, q2, v.gamma, v.nu1, v.nu])
                     for p2, q2 in ((0.5, 0.2), (0.7, 0.35), (0.3, 0.1),
                                    (0.85, 0.6))]
        (theta, res, iters, ok), events = _run_reduced(
            shape, c1, level, names, seeds, cfg, extend=_extend_l2(shape, c1))
        return _package(shape, c1, level, names, theta, iters, events, cfg)

    if level is LiftLevel.L3:
        names = ("p2", "p3", "q2", "q3", "gamma", "nu1", "nu")
        if warm_same:
            w = warm_start.vars
            seeds = [np.array([w.p2, w.p3, w.q2, w.q3, w.gamma, w.nu1, w.nu])]
        else:
            if warm_start is not None and warm_start.vars.level is LiftLevel.L2:
                base = warm_start
            else:
                base = solve_level(shape, c1, LiftLevel.L2,
                                   warm_start=warm_start, config=cfg)
            w = base.vars
            seeds = [
                np.array([0.988, w.p2, 0.904, w.q2, w.gamma, w.nu1, w.nu]),
                np.array([0.97, w.p2, 0.88, w.q2, w.gamma, w.nu1, w.nu]),
                np.array([0.995, w.p2, 0.95, w.q2, w.gamma, w.nu1, w.nu]),
            ]
        stages = [_coarse_quadrature(cfg.quad), cfg.quad]
        (theta, res, iters, ok), events = _run_reduced(
            shape, c1, level, names, seeds, cfg, extend=_extend_l3(shape, c1),
            stages=stages)
        point = _package(shape, c1, level, names, theta, iters, events, cfg)
        polished, ev2 = _polish_l3_valley(shape, c1, point.vars, cfg)
        full_theta = np.array([getattr(polished, n)
                               for n in free_variable_names(level)])
        psi = float(psi_batch(shape, c1, level, full_theta[None, :], cfg.quad)[0])
        res_full = _norm(stationarity_residual(shape, c1, polished, cfg))
        if res_full <= point.residual_norm:
            cres = corollary_check(polished, shape, c1)
            point = StationaryPoint(
                vars=polished, xi1=xi_from_psi(psi, shape.sigma), psi_bar=psi,
                residual_norm=res_full, corollary_residual=cres,
                converged=bool(res_full <= cfg.full_residual_tol_l3
                               and cres <= 1e-6),
                iterations=point.iterations,
                events=point.events + tuple(ev2))
        return point

    raise DomainError(f"unknown level {level}")
