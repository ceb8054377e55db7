"""Evaluation of the lifted random-dual objective at lifting levels 1-3.

The object computed here is the scalar dual value psi_bar for a fixed
problem shape (under-sampling alpha, sparsity beta, noise sigma, signal
model), overlap c1 and a set of dual variables; the scaled objective is
xi1 = psi_bar / sigma.

Structure shared by all levels:

  psi_bar =   radius terms    (r2^2/2) sum (p_{k-1} q_{k-1} - p_k q_k) c_k
            - noise terms     (sigma^2/2) sum (q_{k-1} - q_k) c_k
            - linear terms    nu1*c1 + gamma*r1^2 + nu*beta
            - zero-coordinate log-expectation block, weight (1-beta)
            - nonzero-coordinate log-expectation block, weight beta
            + sphere block in gamma_sq.

The per-coordinate blocks reduce to closed-form Gaussian integrals
(erf/erfc with exponential prefactors); the remaining one or two outer
Gaussian expectations are evaluated with Gauss-Hermite quadrature.  All
erfc-times-exponential products are assembled in log space, since the
exponents reach several hundreds in the operating range.

Level-1 eliminates gamma_sq analytically: the sphere block
gamma_sq*r2 + alpha*r2/(4*gamma_sq) is minimised at gamma_sq = sqrt(alpha)/2,
leaving sqrt(alpha)*r2.

Binary signals put all nonzero signal entries at 1/sqrt(k), making the
rescaled nonzero amplitude d = 1/sqrt(beta) deterministic; Gaussian
signals replace d by g/sqrt(beta) with g standard normal and one extra
quadrature dimension.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergentIntegralError, DomainError
from .special import QuadratureRule, gauss_hermite, log_erfc, logdiffexp, logmeanexp_weighted

__all__ = [
    "Signal",
    "LiftLevel",
    "SystemShape",
    "OverlapPoint",
    "LiftVariables",
    "DualEvaluation",
    "QuadratureConfig",
    "r2_of",
    "xi_from_psi",
    "inner_zero_l2",
    "inner_one_l2",
    "log_inner_zero_l2",
    "log_inner_one_l2",
    "psi_level1",
    "psi_level2",
    "psi_level3",
    "evaluate",
    "psi_batch",
    "free_variable_names",
    "doubling_error",
]

_LOG_HALF = math.log(0.5)
_SQRT2 = math.sqrt(2.0)


class Signal(enum.Enum):
    BINARY = "binary"
    GAUSSIAN = "gaussian"


class LiftLevel(enum.Enum):
    L1 = 1
    L2_PARTIAL = 2
    L2 = 3
    L3 = 4

    @property
    def depth(self) -> int:
        return {LiftLevel.L1: 1, LiftLevel.L2_PARTIAL: 2,
                LiftLevel.L2: 2, LiftLevel.L3: 3}[self]


@dataclass(frozen=True)
class SystemShape:
    """Problem ensemble: under-sampling alpha, sparsity beta, noise sigma,
    estimate norm r1 (1 in all reference evaluations) and signal model."""

    alpha: float
    beta: float
    sigma: float
    r1: float = 1.0
    signal: Signal = Signal.BINARY

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0 < self.beta < 1):
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.r1 <= 0:
            raise DomainError(f"r1 must be positive, got {self.r1}")

    @property
    def in_standard_regime(self) -> bool:
        """beta < alpha <= 1: the meaningful recovery regime."""
        return self.beta < self.alpha


@dataclass(frozen=True)
class OverlapPoint:
    """Overlap c1 together with the composite radius r2 derived from it."""

    c1: float
    r2: float


@dataclass(frozen=True)
class LiftVariables:
    """Free dual variables of one lifting level.

    Fields unused at a level are zero: L1 forces p2 = q2 = c2 = 0 (the
    c2 -> 0 limit is taken analytically), L2_PARTIAL forces p2 = q2 = 0
    with c2 free, L3 requires the chain 1 > p2 > p3 >= 0, 1 > q2 > q3 >= 0.
    """

    level: LiftLevel
    gamma: float
    nu1: float
    nu: float
    gamma_sq: float = 0.0
    p2: float = 0.0
    q2: float = 0.0
    c2: float = 0.0
    p3: float = 0.0
    q3: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0 or self.nu <= 0:
            raise DomainError("gamma and nu must be positive")
        lv = self.level
        if lv is LiftLevel.L1:
            if self.p2 or self.q2 or self.c2 or self.p3 or self.q3 or self.c3:
                raise DomainError("level-1 variables must have p2=q2=c2=p3=q3=c3=0")
        elif lv is LiftLevel.L2_PARTIAL:
            if self.p2 or self.q2 or self.p3 or self.q3 or self.c3:
                raise DomainError("partial level-2 forces p2=q2=0 and no third stage")
            if self.c2 <= 0:
                raise DomainError("partial level-2 requires c2 > 0")
        elif lv is LiftLevel.L2:
            if self.p3 or self.q3 or self.c3:
                raise DomainError("level-2 variables must have p3=q3=c3=0")
            if not (0 <= self.p2 < 1 and 0 <= self.q2 < 1):
                raise DomainError("level-2 requires p2, q2 in [0, 1)")
            if self.c2 <= 0 or self.gamma_sq <= 0:
                raise DomainError("level-2 requires c2 > 0 and gamma_sq > 0")
        elif lv is LiftLevel.L3:
            if not (1 > self.p2 > self.p3 >= 0 and 1 > self.q2 > self.q3 >= 0):
                raise DomainError("level-3 requires 1 > p2 > p3 >= 0 and 1 > q2 > q3 >= 0")
            if self.c2 <= 0 or self.c3 <= 0 or self.gamma_sq <= 0:
                raise DomainError("level-3 requires c2, c3, gamma_sq > 0")

    def coupling_b(self) -> tuple:
        """Stage couplings sqrt(p_{k-1} - p_k), computed on demand."""
        if self.level is LiftLevel.L3:
            return (math.sqrt(1 - self.p2), math.sqrt(self.p2 - self.p3),
                    math.sqrt(self.p3))
        return (math.sqrt(1 - self.p2), math.sqrt(self.p2))

    def coupling_c(self) -> tuple:
        """Stage couplings sqrt(q_{k-1} - q_k), computed on demand."""
        if self.level is LiftLevel.L3:
            return (math.sqrt(1 - self.q2), math.sqrt(self.q2 - self.q3),
                    math.sqrt(self.q3))
        return (math.sqrt(1 - self.q2), math.sqrt(self.q2))


@dataclass(frozen=True)
class DualEvaluation:
    """One dual value: psi_bar, the scaled objective xi1 = psi_bar/sigma,
    a doubling-based quadrature error estimate (0.0 when not requested)
    and the lifting level."""

    psi_bar: float
    xi1: float
    quadrature_error_estimate: float
    level: LiftLevel


@dataclass(frozen=True)
class QuadratureConfig:
    """Gauss-Hermite orders used by the evaluators.

    Defaults pass the doubling self-test (1e-8 relative) in the reference
    noise regime sigma^2 = 2.5e-4; the level-3 middle expectation needs
    the finer inner rule because its integrand is recentred around the
    stage drift.
    """

    level2_outer: int = 96
    level3_outer: int = 64
    level3_inner: int = 128
    signal_extra: int = 64

    def doubled(self) -> "QuadratureConfig":
        return QuadratureConfig(2 * self.level2_outer, 2 * self.level3_outer,
                                2 * self.level3_inner, 2 * self.signal_extra)


DEFAULT_QUADRATURE = QuadratureConfig()

_FREE_NAMES = {
    LiftLevel.L1: ("gamma", "nu1", "nu"),
    LiftLevel.L2_PARTIAL: ("c2", "gamma_sq", "gamma", "nu1", "nu"),
    LiftLevel.L2: ("p2", "q2", "c2", "gamma_sq", "gamma", "nu1", "nu"),
    LiftLevel.L3: ("p2", "p3", "q2", "q3", "c2", "c3",
                   "gamma_sq", "gamma", "nu1", "nu"),
}


def free_variable_names(level: LiftLevel) -> tuple:
    """Ordering of the free dual variables in batch/vector form."""
    return _FREE_NAMES[level]


def r2_of(shape: SystemShape, c1: float) -> OverlapPoint:
    """Composite radius r2 = sqrt(sigma^2 + 1 - 2 c1 + r1^2)."""
    arg = shape.sigma ** 2 + 1.0 - 2.0 * c1 + shape.r1 ** 2
    if arg <= 0:
        raise DomainError(
            f"composite radius undefined: sigma^2 + 1 - 2 c1 + r1^2 = {arg} <= 0")
    return OverlapPoint(c1=c1, r2=math.sqrt(arg))


def xi_from_psi(psi_bar: float, sigma: float) -> float:
    """Scaled objective xi1 = psi_bar / sigma."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return psi_bar / sigma


# ----------------------------------------------------------------------
# Closed-form inner Gaussian integrals (per-coordinate blocks)
# ----------------------------------------------------------------------

def _log_ix1(c2_nu, extra, a, b, c, d, e, den):
    """log of the tail contribution: prefactor * e^{-c2 nu + extra + B^2/den}
    * (erfc(t_E) + erfc(-t_D)), assembled in log space."""
    scale = np.sqrt(2.0 * c * den)
    t_hi = (e * den - 2.0 * a * b) / scale
    t_lo = (d * den - 2.0 * a * b) / scale
    base = _LOG_HALF + 0.5 * (np.log(c) - np.log(den)) - c2_nu + extra + b * b / den
    return np.logaddexp(base + log_erfc(t_hi), base + log_erfc(-t_lo))


def _log_ix2(d, e, drift=0.0):
    """log of the central contribution e^{drift^2/2} (Phi(E-drift) - Phi(D-drift))."""
    lo = log_erfc((d - drift) / _SQRT2)
    hi = log_erfc((e - drift) / _SQRT2)
    return drift * drift / 2.0 + _LOG_HALF + logdiffexp(lo, hi)


def _log_inner_zero_grid(c2, q2, gamma, nu, t):
    """log E_{h} Z0 on a grid of outer Gaussian combinations t.

    Z0 is the zero-coordinate factor e^{-c2 min(-(s h + t)^2/(4 gamma) + nu, 0)}
    with s = sqrt(1 - q2) and h standard normal.
    """
    root = 2.0 * np.sqrt(gamma * nu)
    s = np.sqrt(1.0 - q2)
    d = (-t - root) / s
    e = (-t + root) / s
    a2 = c2 * (1.0 - q2)
    c = 4.0 * gamma
    den = c - 2.0 * a2
    b = np.sqrt(c2) * t
    ix1 = _log_ix1(c2 * nu, 0.0, np.sqrt(a2), b, c, d, e, den)
    return np.logaddexp(ix1, _log_ix2(d, e))


def _log_inner_one_grid(c2, q2, gamma, nu, nu1, dbar, t):
    """log E_{h} Z1~ on a grid; Z1~ is the nonzero-coordinate factor with
    its inner drift c2 * s * h * dbar (the outer-measurable drift factor
    e^{c2 dbar t} is NOT included here; callers add it where it matters)."""
    root = 2.0 * np.sqrt(gamma * nu)
    s = np.sqrt(1.0 - q2)
    shift = t + dbar * nu1
    d = (-shift - root) / s
    e = (-shift + root) / s
    a = np.sqrt(c2 * (1.0 - q2))
    c = 4.0 * gamma
    den = c - 2.0 * a * a
    b1 = np.sqrt(c2) * shift
    drift = c2 * dbar * s
    b = drift * c / (2.0 * a) + b1
    extra = (b1 * b1 - b * b) / c
    ix1 = _log_ix1(c2 * nu, extra, a, b, c, d, e, den)
    return np.logaddexp(ix1, _log_ix2(d, e, drift=drift))


def _check_divergence(c2, q2, gamma):
    den = 4.0 * gamma - 2.0 * c2 * (1.0 - q2)
    if np.any(den <= 0):
        raise DivergentIntegralError(
            "inner Gaussian integral diverges: 4*gamma - 2*c2*(1-q2) <= 0 "
            f"(min value {float(np.min(den))}); c2*(1-q2) too large vs 4*gamma")


def log_inner_zero_l2(a, b, c, d, e, c2_nu):
    """log of inner_zero_l2; usable where the linear value overflows."""
    a, b, c, d, e = (np.asarray(v, dtype=float) for v in (a, b, c, d, e))
    den = c - 2.0 * a * a
    if np.any(den <= 0):
        raise DivergentIntegralError("C - 2 A^2 must be positive")
    ix1 = _log_ix1(c2_nu, 0.0, a, b, c, d, e, den)
    out = np.logaddexp(ix1, _log_ix2(d, e))
    return out if out.ndim else float(out)


def inner_zero_l2(a, b, c, d, e, c2_nu):
    """Closed form of the inner expectation of the zero-coordinate factor.

    Arguments follow the tail/threshold parametrisation: a = coupling of
    the inner normal, b = outer offset, c = curvature 4*gamma, (d, e) =
    inactive-window endpoints; c2_nu is the exponent c2 * nu of the
    constant penalty.  Requires c - 2 a^2 > 0.
    """
    return math.exp(log_inner_zero_l2(a, b, c, d, e, c2_nu)) \
        if np.isscalar(a) or np.asarray(a).ndim == 0 \
        else np.exp(log_inner_zero_l2(a, b, c, d, e, c2_nu))


def log_inner_one_l2(a, b, b1, c, d, e, f, g, c2_nu):
    """log of inner_one_l2."""
    a, b, b1, c, d, e, f, g = (np.asarray(v, dtype=float)
                               for v in (a, b, b1, c, d, e, f, g))
    den = c - 2.0 * a * a
    if np.any(den <= 0):
        raise DivergentIntegralError("C - 2 A^2 must be positive")
    ix1 = _log_ix1(c2_nu, g, a, b, c, d, e, den)
    out = np.logaddexp(ix1, _log_ix2(d, e, drift=f))
    return out if out.ndim else float(out)


def inner_one_l2(a, b, b1, c, d, e, f, g, c2_nu):
    """Closed form of the inner expectation of the nonzero-coordinate
    factor (drift-centred form: the factor measurable in the outer
    variable is excluded).  b1 is the raw outer offset, b the
    drift-completed one, f the inner drift, g the completion correction.
    Requires c - 2 a^2 > 0.
    """
    out = log_inner_one_l2(a, b, b1, c, d, e, f, g, c2_nu)
    return math.exp(out) if np.isscalar(out) else np.exp(out)


# ----------------------------------------------------------------------
# Level evaluators (batched over parameter rows)
# ----------------------------------------------------------------------

def _phi_std(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _erfc_half(x):
    from scipy.special import erfc
    return 0.5 * erfc(x / _SQRT2)


def _level1_nonzero_term(gamma, nu, nu1, dbar):
    """E min(-(h + nu1*dbar)^2/(4 gamma) + nu, 0) over standard normal h,
    split at the two activation thresholds."""
    root = 2.0 * np.sqrt(gamma * nu)
    b = nu1 * dbar
    a1 = root - b
    a2 = -root - b
    f_hi = (-(1.0 / (4.0 * gamma)) * ((a1 + 2.0 * b) * _phi_std(a1)
                                      + (b * b + 1.0) * _erfc_half(a1))
            + nu * _erfc_half(a1))
    f_lo = (-(1.0 / (4.0 * gamma)) * (-(a2 + 2.0 * b) * _phi_std(a2)
                                      + (b * b + 1.0) * _erfc_half(-a2))
            + nu * _erfc_half(-a2))
    return f_hi + f_lo


def _psi1_batch(shape: SystemShape, c1: float, theta: np.ndarray,
                quad: QuadratureConfig) -> np.ndarray:
    """theta rows: (gamma, nu1, nu)."""
    gamma, nu1, nu = theta[:, 0], theta[:, 1], theta[:, 2]
    bad = (gamma <= 0) | (nu <= 0)
    gamma = np.where(bad, 1.0, gamma)
    nu = np.where(bad, 1.0, nu)
    beta = shape.beta
    r2 = r2_of(shape, c1).r2
    root = 2.0 * np.sqrt(gamma * nu)
    zero_term = 2.0 * (-(1.0 / (4.0 * gamma)) * (root * _phi_std(root)
                                                 + _erfc_half(root))
                       + nu * _erfc_half(root))
    if shape.signal is Signal.BINARY:
        nz = _level1_nonzero_term(gamma, nu, nu1, 1.0 / math.sqrt(beta))
    else:
        rule = gauss_hermite(quad.signal_extra)
        dbar = rule.nodes[None, :] / math.sqrt(beta)
        vals = _level1_nonzero_term(gamma[:, None], nu[:, None],
                                    nu1[:, None], dbar)
        nz = vals @ rule.weights
    psi = (-nu1 * c1 - gamma * shape.r1 ** 2 - nu * beta
           + (1.0 - beta) * zero_term + beta * nz
           + math.sqrt(shape.alpha) * r2)
    return np.where(bad, np.nan, psi)


def _sphere_block(alpha, r2, gamma_sq, c2, p2, c3=None, p3=None):
    """Sphere contribution: gamma_sq*r2 plus the staged log/ratio terms."""
    u = 2.0 * gamma_sq
    w2 = u + c2 * r2 * (1.0 - p2)
    if c3 is None:
        return gamma_sq * r2 + alpha * r2 * (
            np.log(w2 / u) / (2.0 * c2 * r2) + p2 / (2.0 * w2))
    w3 = w2 + c3 * r2 * (p2 - p3)
    return gamma_sq * r2 + alpha * r2 * (
        np.log(w2 / u) / (2.0 * c2 * r2)
        + np.log(w3 / w2) / (2.0 * c3 * r2)
        + p3 / (2.0 * w3))


def _psi2_batch(shape: SystemShape, c1: float, theta: np.ndarray,
                quad: QuadratureConfig) -> np.ndarray:
    """theta rows: (p2, q2, c2, gamma_sq, gamma, nu1, nu)."""
    p2, q2, c2, gsq, gamma, nu1, nu = (theta[:, i] for i in range(7))
    bad = ((gamma <= 0) | (nu <= 0) | (c2 <= 0) | (gsq <= 0)
           | (q2 < 0) | (q2 >= 1) | (p2 < 0) | (p2 >= 1)
           | (4.0 * gamma - 2.0 * c2 * (1.0 - q2) <= 0))
    p2 = np.where(bad, 0.5, p2)
    q2 = np.where(bad, 0.5, q2)
    c2 = np.where(bad, 0.1, c2)
    gsq = np.where(bad, 0.1, gsq)
    gamma = np.where(bad, 1.0, gamma)
    nu = np.where(bad, 1.0, nu)

    beta = shape.beta
    sigma = shape.sigma
    r2 = r2_of(shape, c1).r2
    rule = gauss_hermite(quad.level2_outer)
    h3 = rule.nodes[None, :]
    w3 = rule.weights

    col = lambda v: v[:, None]
    t = np.sqrt(col(q2)) * h3
    lz = _log_inner_zero_grid(col(c2), col(q2), col(gamma), col(nu), t)
    e_zero = lz @ w3

    if shape.signal is Signal.BINARY:
        dbar = 1.0 / math.sqrt(beta)
        lo = _log_inner_one_grid(col(c2), col(q2), col(gamma), col(nu),
                                 col(nu1), dbar, t)
        e_one = lo @ w3
    else:
        g_rule = gauss_hermite(quad.signal_extra)
        dbar = g_rule.nodes[None, :, None] / math.sqrt(beta)
        cube = lambda v: v[:, None, None]
        lo = _log_inner_one_grid(cube(c2), cube(q2), cube(gamma), cube(nu),
                                 cube(nu1), dbar, t[:, None, :])
        e_one = (lo @ w3) @ g_rule.weights

    psi = ((r2 ** 2 / 2.0) * (1.0 - p2 * q2) * c2
           - (sigma ** 2 / 2.0) * (1.0 - q2) * c2
           - nu1 * c1 - gamma * shape.r1 ** 2 - nu * beta
           - (1.0 - beta) / c2 * e_zero
           - beta / c2 * e_one
           + _sphere_block(shape.alpha, r2, gsq, c2, p2))
    return np.where(bad, np.nan, psi)


def _psi3_batch(shape: SystemShape, c1: float, theta: np.ndarray,
                quad: QuadratureConfig) -> np.ndarray:
    """theta rows: (p2, p3, q2, q3, c2, c3, gamma_sq, gamma, nu1, nu).

    The nonzero-coordinate block keeps the stage drift
    e^{c3 * dbar * sqrt(q2 - q3) * h3} inside the middle expectation;
    only the outermost drift factor has zero mean and drops out.
    """
    # chunk large batches: the (rows, outer, inner) work arrays get big
    max_rows = max(1, 6_000_000 // (quad.level3_outer * quad.level3_inner))
    if theta.shape[0] > max_rows:
        return np.concatenate([
            _psi3_batch(shape, c1, theta[i:i + max_rows], quad)
            for i in range(0, theta.shape[0], max_rows)])
    p2, p3, q2, q3, c2, c3, gsq, gamma, nu1, nu = (theta[:, i] for i in range(10))
    bad = ((gamma <= 0) | (nu <= 0) | (c2 <= 0) | (c3 <= 0) | (gsq <= 0)
           | ~(p2 < 1) | ~(p2 > p3) | ~(p3 >= 0)
           | ~(q2 < 1) | ~(q2 > q3) | ~(q3 >= 0)
           | (4.0 * gamma - 2.0 * c2 * (1.0 - q2) <= 0))
    fix = lambda v, d: np.where(bad, d, v)
    p2, p3, q2, q3 = fix(p2, 0.6), fix(p3, 0.3), fix(q2, 0.6), fix(q3, 0.3)
    c2, c3, gsq = fix(c2, 0.2), fix(c3, 0.1), fix(gsq, 0.1)
    gamma, nu = fix(gamma, 1.0), fix(nu, 1.0)

    beta = shape.beta
    sigma = shape.sigma
    r2 = r2_of(shape, c1).r2
    inner = gauss_hermite(quad.level3_inner)
    outer = gauss_hermite(quad.level3_outer)
    h3 = inner.nodes[None, None, :]
    h4 = outer.nodes[None, :, None]

    cube = lambda v: v[:, None, None]
    t = np.sqrt(cube(q2 - q3)) * h3 + np.sqrt(cube(q3)) * h4
    power = cube(c3 / c2)

    lz = _log_inner_zero_grid(cube(c2), cube(q2), cube(gamma), cube(nu), t)
    m_zero = logmeanexp_weighted(power * lz, inner.weights, axis=2)
    e_zero = m_zero @ outer.weights

    def one_block(dbar):
        # The middle expectation carries the stage drift e^{a h3} with
        # a = c3 * dbar * sqrt(q2 - q3).  Recentre it exactly via
        # E[e^{a h} g(h)] = e^{a^2/2} E[g(h + a)] so the quadrature sees a
        # centred integrand again.
        a = c3 * dbar * np.sqrt(q2 - q3)
        t_shift = np.sqrt(cube(q2 - q3)) * (h3 + cube(a)) + np.sqrt(cube(q3)) * h4
        lo = _log_inner_one_grid(cube(c2), cube(q2), cube(gamma), cube(nu),
                                 cube(nu1), dbar, t_shift)
        m_one = (a * a / 2.0)[:, None] \
            + logmeanexp_weighted(power * lo, inner.weights, axis=2)
        return m_one @ outer.weights

    if shape.signal is Signal.BINARY:
        e_one = one_block(1.0 / math.sqrt(beta))
    else:
        g_rule = gauss_hermite(quad.signal_extra)
        vals = np.stack([one_block(g / math.sqrt(beta)) for g in g_rule.nodes],
                        axis=1)
        e_one = vals @ g_rule.weights

    psi = ((r2 ** 2 / 2.0) * ((1.0 - p2 * q2) * c2 + (p2 * q2 - p3 * q3) * c3)
           - (sigma ** 2 / 2.0) * ((1.0 - q2) * c2 + (q2 - q3) * c3)
           - nu1 * c1 - gamma * shape.r1 ** 2 - nu * beta
           - (1.0 - beta) / c3 * e_zero
           - beta / c3 * e_one
           + _sphere_block(shape.alpha, r2, gsq, c2, p2, c3, p3))
    return np.where(bad, np.nan, psi)


def psi_batch(shape: SystemShape, c1: float, level: LiftLevel,
              theta: np.ndarray,
              quad: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Vectorised dual evaluation: one psi_bar per row of theta.

    Row layout follows :func:`free_variable_names`.  Rows violating a
    domain constraint evaluate to NaN (solvers treat NaN as a rejected
    step); use the scalar entry points for strict domain errors.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if level is LiftLevel.L1:
        return _psi1_batch(shape, c1, theta, quad)
    if level is LiftLevel.L2_PARTIAL:
        full = np.zeros((theta.shape[0], 7))
        full[:, 2:] = theta  # (c2, gamma_sq, gamma, nu1, nu) with p2 = q2 = 0
        return _psi2_batch(shape, c1, full, quad)
    if level is LiftLevel.L2:
        return _psi2_batch(shape, c1, theta, quad)
    if level is LiftLevel.L3:
        return _psi3_batch(shape, c1, theta, quad)
    raise DomainError(f"unknown level {level}")


def _vars_to_theta(v: LiftVariables) -> np.ndarray:
    names = free_variable_names(v.level)
    return np.array([[getattr(v, n) for n in names]])


def evaluate(shape: SystemShape, c1: float, v: LiftVariables,
             quad: QuadratureConfig = DEFAULT_QUADRATURE,
             estimate_error: bool = False) -> DualEvaluation:
    """Evaluate the dual at one point, with optional doubling-based
    quadrature error estimate."""
    psi = float(psi_batch(shape, c1, v.level, _vars_to_theta(v), quad)[0])
    if math.isnan(psi):
        raise DivergentIntegralError(
            "dual evaluation left its domain (likely 4*gamma <= 2*c2*(1-q2))")
    err = 0.0
    if estimate_error:
        psi_d = float(psi_batch(shape, c1, v.level, _vars_to_theta(v),
                                quad.doubled())[0])
        err = abs(psi_d - psi) / max(abs(psi), 1e-300)
    return DualEvaluation(psi_bar=psi, xi1=xi_from_psi(psi, shape.sigma),
                          quadrature_error_estimate=err, level=v.level)


def psi_level1(shape: SystemShape, c1: float, v: LiftVariables,
               quad: QuadratureConfig = DEFAULT_QUADRATURE,
               estimate_error: bool = False) -> DualEvaluation:
    """Level-1 dual: gamma_sq eliminated analytically (sqrt(alpha)/2)."""
    if v.level is not LiftLevel.L1:
        raise DomainError("psi_level1 requires level-1 variables")
    if v.gamma * v.nu < 0:
        raise DomainError("gamma * nu must be nonnegative")
    return evaluate(shape, c1, v, quad, estimate_error)


def psi_level2(shape: SystemShape, c1: float, v: LiftVariables,
               partial: bool = False,
               quad: QuadratureConfig = DEFAULT_QUADRATURE,
               estimate_error: bool = False) -> DualEvaluation:
    """Level-2 dual; ``partial`` asserts the p2 = q2 = 0 restriction."""
    if partial and v.level is not LiftLevel.L2_PARTIAL:
        raise DomainError("partial evaluation requires L2_PARTIAL variables")
    if not partial and v.level not in (LiftLevel.L2, LiftLevel.L2_PARTIAL):
        raise DomainError("psi_level2 requires level-2 variables")
    if v.c2 <= 0:
        raise DomainError("c2 must be positive")
    _check_divergence(v.c2, v.q2, v.gamma)
    return evaluate(shape, c1, v, quad, estimate_error)


def psi_level3(shape: SystemShape, c1: float, v: LiftVariables,
               quad: QuadratureConfig = DEFAULT_QUADRATURE,
               estimate_error: bool = False) -> DualEvaluation:
    """Level-3 dual with the nested (inner-power c3/c2) expectation blocks."""
    if v.level is not LiftLevel.L3:
        raise DomainError("psi_level3 requires level-3 variables")
    _check_divergence(v.c2, v.q2, v.gamma)
    return evaluate(shape, c1, v, quad, estimate_error)


def doubling_error(shape: SystemShape, c1: float, v: LiftVariables,
                   quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Relative change of psi_bar when all quadrature orders double."""
    return evaluate(shape, c1, v, quad, estimate_error=True).quadrature_error_estimate
