"""Special functions and Gaussian-quadrature primitives.

Every dual evaluator in this package reduces to expectations over iid
standard normal scalars,

    E f(h),    h ~ N(0, 1),

possibly nested as  E_outer log( E_inner [ . ]^exponent ).  Gauss-Hermite
quadrature in its probabilists' normalisation provides nodes/weights with

    E f(h) ~= sum_i w_i f(x_i),    sum_i w_i = 1,

and the nested form is evaluated on the tensor grid with log-sum-exp
stabilisation: the integrands contain exponentials of order c*nu ~ 10, so
factoring out the maximum exponent is mandatory, not cosmetic.

The complementary error function appears both bare and inside products
with growing exponentials e^{B^2/(C-2A^2)}; for that use the scaled
variant erfcx(x) = e^{x^2} erfc(x) and the log-space helper keep results
representable long after erfc itself underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special as sps

from .errors import ConfigurationError, DomainError, NumericalDomainError

__all__ = [
    "QuadratureRule",
    "erfc_val",
    "erfcx_val",
    "log_erfc",
    "logdiffexp",
    "gauss_hermite",
    "nested_expectation",
]

_MAX_ORDER = 512
_LOG_HALF = math.log(0.5)


def erfc_val(x: float) -> float:
    """Complementary error function.

    Rejects non-finite input; underflows gracefully to 0.0 for large
    positive arguments (use :func:`log_erfc` when the log-scale value is
    needed inside exponential products).
    """
    if not np.all(np.isfinite(x)):
        raise DomainError(f"erfc_val requires finite input, got {x!r}")
    return sps.erfc(x)


def erfcx_val(x: float) -> float:
    """Scaled complementary error function e^{x^2} erfc(x).

    Finite for all finite x >= 0; overflows for large negative x, where
    plain erfc (~2) should be used instead.
    """
    if not np.all(np.isfinite(x)):
        raise DomainError(f"erfcx_val requires finite input, got {x!r}")
    return sps.erfcx(x)


def log_erfc(x):
    """log(erfc(x)), valid for all finite x including x >> 26 where erfc
    itself underflows.  Vectorised."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("log_erfc requires finite input")
    out = np.empty_like(x)
    big = x > 8.0
    small = ~big
    # erfc(x) for x <= 8 is >= 1.1e-29: a plain log is exact enough.
    if np.any(small):
        out[small] = np.log(sps.erfc(x[small]))
    if np.any(big):
        xb = x[big]
        out[big] = np.log(sps.erfcx(xb)) - xb * xb
    return out if out.ndim else float(out)


def logdiffexp(log_a, log_b):
    """log(e^log_a - e^log_b) for log_a > log_b, stable near equality.

    Entries with log_a <= log_b (an empty or negative difference) map to
    -inf; callers that treat that as an error must check explicitly.
    """
    log_a = np.asarray(log_a, dtype=float)
    log_b = np.asarray(log_b, dtype=float)
    x = log_b - log_a
    out = np.full(np.broadcast(log_a, log_b).shape, -np.inf)
    safe = x < 0.0
    if np.any(safe):
        xs = np.where(safe, x, -1.0)
        tiny = xs > -1e-8
        # log(1 - e^x) ~= log(-x) + x/2 as x -> 0-
        approx = np.log(np.where(tiny, -xs, 1.0)) + xs / 2.0
        exact = np.log1p(-np.exp(np.maximum(xs, -745.0)))
        out = np.where(safe, np.broadcast_to(log_a, out.shape)
                       + np.where(tiny, approx, exact), out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for the expectation over a standard normal scalar.

    nodes are strictly increasing and symmetric about 0; weights are
    positive and sum to 1, so ``sum(w * f(x))`` approximates E f(h).
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        n = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if n.ndim != 1 or w.shape != n.shape:
            raise ConfigurationError("nodes/weights must be matching 1-D arrays")
        if np.any(np.diff(n) <= 0):
            raise ConfigurationError("quadrature nodes must be strictly increasing")
        if np.max(np.abs(n + n[::-1])) > 1e-12 * max(1.0, float(np.max(np.abs(n)))):
            raise ConfigurationError("quadrature nodes must be symmetric about 0")
        if np.any(w <= 0):
            raise ConfigurationError("quadrature weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ConfigurationError("normalised weights must sum to 1")
        object.__setattr__(self, "nodes", n)
        object.__setattr__(self, "weights", w)

    def expect(self, f: Callable) -> float:
        """E f(h) for vectorised f."""
        return float(np.sum(self.weights * f(self.nodes)))


@lru_cache(maxsize=64)
def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule transformed to the standard-normal measure.

    Exact for polynomials up to degree 2*order - 1.
    """
    if order < 1:
        raise ConfigurationError(f"order must be >= 1, got {order}")
    if order > _MAX_ORDER:
        raise ConfigurationError(f"order {order} exceeds cap {_MAX_ORDER}")
    if order == 1:
        return QuadratureRule(np.array([0.0]), np.array([1.0]), 1)
    x, w = sps.roots_hermitenorm(order)
    w = w / w.sum()
    # enforce exact symmetry against roundoff in the recurrence
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    # extreme nodes of very high order rules carry weights that underflow
    # to zero; they contribute nothing and would violate positivity
    keep = w > 0.0
    return QuadratureRule(x[keep], w[keep], order)


def nested_expectation(inner: Callable, exponent: float,
                       outer_rule: QuadratureRule,
                       inner_rule: QuadratureRule) -> float:
    """E_outer log( E_inner [ inner(h_outer, h_inner)^exponent ] ).

    ``inner`` must be positive on the tensor grid and vectorised over
    broadcastable arrays; the log of the inner average is formed in
    log-space (max exponent factored out) so that values of order
    e^{+-700} survive.
    """
    if exponent <= 0:
        raise DomainError(f"exponent must be > 0, got {exponent}")
    h_out = outer_rule.nodes[:, None]
    h_in = inner_rule.nodes[None, :]
    vals = np.asarray(inner(h_out, h_in), dtype=float)
    vals = np.broadcast_to(vals, (outer_rule.order, inner_rule.order))
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0.0):
        bad = np.argwhere(~np.isfinite(vals) | (vals <= 0.0))[0]
        node = (float(outer_rule.nodes[bad[0]]), float(inner_rule.nodes[bad[1]]))
        raise NumericalDomainError(
            f"inner function non-positive or non-finite at node pair {node}",
            node=node)
    log_vals = exponent * np.log(vals)
    inner_log_mean = logmeanexp_weighted(log_vals, inner_rule.weights, axis=1)
    return float(np.sum(outer_rule.weights * inner_log_mean))


def logmeanexp_weighted(log_vals: np.ndarray, weights: np.ndarray,
                        axis: int = -1) -> np.ndarray:
    """log( sum_i w_i e^{log_vals_i} ) along ``axis`` with max factored out."""
    m = np.max(log_vals, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(weights * np.exp(log_vals - m), axis=axis)
    return np.squeeze(m, axis=axis) + np.log(s)
