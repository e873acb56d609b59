"""Brute-force reference computations used by the test suite.

Nothing in the production code calls this module. Everything here is built on
QUADPACK (through ``scipy.integrate.quad``) and plain finite differences, so it
shares no formulas with the closed forms it is used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "SingularKernel",
    "quad2d_singular",
    "quad1d_endpoint",
    "beta_density_energy",
    "finite_diff",
]


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    limit: int = 200

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.limit < 1:
            raise ValueError("limit must be at least 1")


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class SingularKernel:
    """``k(t) = c * V_a(t) + smooth(t)`` with the singular part handled by weights.

    ``V_a(t) = |t|^-a`` for ``a > 0`` and ``-log|t|`` for ``a = 0``.
    """

    a: float
    smooth: Optional[Callable[[float], float]] = None
    coefficient: float = 1.0

    def singular(self, t):
        t = abs(t)
        return self.coefficient * (-math.log(t) if self.a == 0.0 else t ** (-self.a))

    def __call__(self, t):
        extra = self.smooth(abs(t)) if self.smooth is not None else 0.0
        return self.singular(t) + extra


def _quad(f, lo, hi, spec, **kw):
    val, err, *rest = integrate.quad(
        f, lo, hi, epsabs=0.0, epsrel=spec.rtol, limit=spec.limit, full_output=1, **kw
    )
    info = rest[1] if len(rest) > 1 else ""
    failed = len(rest) > 1 and isinstance(info, str) and "roundoff" not in info
    return val, err, failed


def _singular_piece(kernel: SingularKernel, x, lo, hi, left_is_diag, spec):
    """``int_lo^hi c V_a(x - y) dy`` where the singular point ``y = x`` is one end."""
    weight_exp = -kernel.a
    c = kernel.coefficient
    if kernel.a == 0.0:
        # -log|x - y| with the logarithm carried by the weight.
        wname = "alg-loga" if left_is_diag else "alg-logb"
        val, err, bad = _quad(lambda y: -c, lo, hi, spec, weight=wname, wvar=(0.0, 0.0))
    else:
        wvar = (weight_exp, 0.0) if left_is_diag else (0.0, weight_exp)
        val, err, bad = _quad(lambda y: c, lo, hi, spec, weight="alg", wvar=wvar)
    return val, err, bad


def _inner(kernel, x, r, s, spec):
    """``int_r^s k(x - y) dy`` for fixed ``x``."""
    total = 0.0
    err_total = 0.0
    failed = False
    smooth = None
    if isinstance(kernel, SingularKernel):
        if kernel.smooth is not None:
            sm = kernel.smooth
            smooth = lambda y: sm(abs(x - y))  # noqa: E731
        if r < x < s:
            pieces = [(r, x, False), (x, s, True)]
        elif x <= r:
            pieces = [(r, s, True)] if x == r else [(r, s, None)]
        else:
            pieces = [(r, s, False)] if x == s else [(r, s, None)]
        for lo, hi, diag_left in pieces:
            if diag_left is None:
                val, err, bad = _quad(lambda y: kernel.singular(x - y), lo, hi, spec)
            else:
                val, err, bad = _singular_piece(kernel, x, lo, hi, diag_left, spec)
            total += val
            err_total += err
            failed |= bad
    else:
        smooth = lambda y: kernel(x - y)  # noqa: E731
    if smooth is not None:
        pts = [x] if r < x < s else None
        val, err, bad = _quad(smooth, r, s, spec, points=pts)
        total += val
        err_total += err
        failed |= bad
    return total, err_total, failed


def quad2d_singular(kernel, rectangle, spec: QuadratureSpec | None = None) -> float:
    """``int_p^q int_r^s kernel(x - y) dy dx`` by nested adaptive quadrature.

    ``kernel`` is either a :class:`SingularKernel` (singular on ``x = y``) or a
    bounded callable of ``x - y``. The inner integral is split at ``y = x`` and
    the singular factor is integrated exactly by algebraic-logarithmic weights;
    the outer integral is split where the inner one loses smoothness.
    """
    spec = spec or QuadratureSpec()
    (p, q), (r, s) = rectangle
    if not (p < q and r < s):
        raise ValueError("rectangle sides must have positive length")
    inner_spec = QuadratureSpec(rtol=max(spec.rtol * 1e-2, 1e-13), limit=spec.limit)
    failures = []

    def outer(x):
        val, _, bad = _inner(kernel, x, r, s, inner_spec)
        if bad:
            failures.append(x)
        return val

    cuts = sorted({p, q, *(c for c in (r, s) if p < c < q)})
    total = 0.0
    err_total = 0.0
    outer_failed = False
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, err, bad = _quad(outer, lo, hi, spec)
        total += val
        err_total += err
        outer_failed |= bad
    if outer_failed or failures or err_total > 10 * spec.rtol * max(abs(total), 1e-300):
        raise QuadratureError(
            f"quadrature budget exhausted (error estimate {err_total:.2e})", total
        )
    return total


def quad1d_endpoint(f, interval, alpha: float = 0.0, beta: float = 0.0,
                    spec: QuadratureSpec | None = None) -> float:
    """``int_lo^hi f(x) (x - lo)^alpha (hi - x)^beta dx`` with the end singularities as weights."""
    spec = spec or QuadratureSpec()
    lo, hi = interval
    if alpha == 0.0 and beta == 0.0:
        val, err, bad = _quad(f, lo, hi, spec)
    else:
        val, err, bad = _quad(f, lo, hi, spec, weight="alg", wvar=(alpha, beta))
    if bad:
        raise QuadratureError("endpoint quadrature did not converge", val)
    return val


def beta_density_energy(a: float, beta: float, normalisation: float, U=None,
                        spec: QuadratureSpec | None = None) -> float:
    """``(1/2) int int V_a(x - y) rho(x) rho(y) + int U rho`` for ``rho = c [x(1-x)]^beta``.

    The potential ``(V_a * rho)(x)`` is computed with weights absorbing both the
    density's endpoint behaviour and the kernel singularity at ``y = x``.
    """
    spec = spec or QuadratureSpec(rtol=1e-11)
    c = normalisation

    def potential(x):
        if a == 0.0:
            left, *_ = _quad(lambda y: -(1.0 - y) ** beta, 0.0, x, spec,
                             weight="alg-logb", wvar=(beta, 0.0))
            right, *_ = _quad(lambda y: -(y**beta), x, 1.0, spec,
                              weight="alg-loga", wvar=(0.0, beta))
        else:
            left, *_ = _quad(lambda y: (1.0 - y) ** beta, 0.0, x, spec,
                             weight="alg", wvar=(beta, -a))
            right, *_ = _quad(lambda y: y**beta, x, 1.0, spec,
                              weight="alg", wvar=(-a, beta))
        return c * (left + right)

    def integrand(x):
        val = 0.5 * potential(x)
        if U is not None:
            val += float(U(x))
        return c * val

    # x = (1 - cos t) / 2 turns [x(1-x)]^beta dx into (sin(t)/2)^(2 beta + 1) dt,
    # which is bounded; the weighted routines cannot be nested, so the outer
    # integral is plain adaptive quadrature.
    def outer(t):
        x = 0.5 * (1.0 - math.cos(t))
        return integrand(x) * (0.5 * math.sin(t)) ** (2.0 * beta + 1.0)

    total = 0.0
    for lo, hi in ((0.0, 0.5 * math.pi), (0.5 * math.pi, math.pi)):
        val, err, bad = _quad(outer, lo, hi, spec)
        if bad:
            raise QuadratureError("outer quadrature did not converge", val)
        total += val
    return total


def finite_diff(function, point, order: int = 1, step: float = 1e-3, index: int | None = None):
    """Central difference of order 1 or 2 with two levels of Richardson extrapolation.

    With ``index`` given, ``point`` is a vector and the derivative is taken
    along that coordinate.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x0 = np.array(point, dtype=float)

    def f_at(h):
        if index is None:
            y = float(function(x0 + h))
        else:
            xp = x0.copy()
            xp[index] += h
            y = float(function(xp))
        if not math.isfinite(y):
            raise ValueError(f"non-finite sample at offset {h!r}")
        return y

    f0 = f_at(0.0) if order == 2 else None

    def D(h):
        if order == 1:
            return (f_at(h) - f_at(-h)) / (2.0 * h)
        return (f_at(h) - 2.0 * f0 + f_at(-h)) / (h * h)

    d1, d2, d3 = D(step), D(step / 2), D(step / 4)
    r1 = (4.0 * d2 - d1) / 3.0
    r2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0
