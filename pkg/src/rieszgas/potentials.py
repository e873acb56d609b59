"""Interaction and confining potentials.

The interaction potential is split as ``V = V_a + V_reg`` where ``V_a`` is the
Riesz kernel ``|x|^-a`` (or ``-log|x|`` for ``a = 0``) and ``V_reg`` is an even,
twice differentiable correction supplied as a :class:`SmoothKernel`.

All evaluators are vectorised over numpy arrays and return plain floats for
scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import special

__all__ = [
    "SmoothKernel",
    "InteractionPotential",
    "RenormalizedPotential",
    "ConfiningPotential",
    "eval_Va",
    "eval_V",
    "eval_Vn",
    "eval_U",
    "truncate_tails",
    "plasticity_kernel",
    "tanhlog_kernel",
    "REGULAR_PARTS",
    "riesz",
    "confining_from_spec",
    "potential_from_spec",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _out(x, val):
    """Return a Python float for scalar input, an array otherwise."""
    if np.ndim(x) == 0:
        return float(val)
    return val


def _check_exponent(a: float) -> float:
    a = float(a)
    if not (0.0 <= a < 1.0):
        raise ValueError(f"Riesz exponent must satisfy 0 <= a < 1, got {a}")
    return a


# ---------------------------------------------------------------------------
# Riesz part
# ---------------------------------------------------------------------------

def eval_Va(a: float, x):
    """Singular part ``-log|x|`` (a = 0) or ``|x|^-a``; ``+inf`` at ``x = 0``."""
    a = _check_exponent(a)
    t = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        val = -np.log(t) if a == 0.0 else t ** (-a)
    return _out(x, val)


def _dVa(a: float, x: np.ndarray) -> np.ndarray:
    t = np.abs(x)
    if a == 0.0:
        return -1.0 / x
    return -a * np.sign(x) * t ** (-a - 1.0)


def _d2Va(a: float, x: np.ndarray) -> np.ndarray:
    if a == 0.0:
        return 1.0 / (x * x)
    return a * (a + 1.0) * np.abs(x) ** (-a - 2.0)


# ---------------------------------------------------------------------------
# Regular parts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothKernel:
    """An even C^2 function given by its value and first two derivatives."""

    name: str
    value: ArrayFn
    deriv1: ArrayFn
    deriv2: ArrayFn

    def __call__(self, x, order: int = 0):
        fn = (self.value, self.deriv1, self.deriv2)[order]
        return _out(x, fn(np.asarray(x, dtype=float)))


# Below this threshold the closed forms cancel badly and the even Taylor series
# (built from Bernoulli numbers, radius of convergence pi/2 or larger) take over.
_SERIES_CUT = 0.5
_SERIES_TERMS = 24


def _even_series_coeffs(kind):
    """Coefficients ``c_k`` of ``sum_k c_k x^(2k)`` for the two regular parts."""
    b = special.bernoulli(2 * _SERIES_TERMS)
    c = np.zeros(_SERIES_TERMS)
    for k in range(1, _SERIES_TERMS):
        base = 4.0**k * b[2 * k] / math.factorial(2 * k)
        if kind == "plasticity":
            # x coth x - log(sinh x / x)
            c[k] = base * (1.0 - 1.0 / (2 * k))
        else:
            # log cosh x - log(sinh x / x)
            c[k] = base * (4.0**k - 1.0) / (2 * k) - base / (2 * k)
    if kind == "plasticity":
        c[0] = 1.0 - math.log(2.0)
    return c


def _series_evaluator(c):
    k = np.arange(len(c))
    d1 = (2 * k * c)[1:]
    d2 = (2 * k * (2 * k - 1) * c)[1:]

    def value(t):
        return P.polyval(t * t, c)

    def first(t):
        return t * P.polyval(t * t, d1)

    def second(t):
        return P.polyval(t * t, d2)

    return value, first, second


_PLAST_SERIES = _series_evaluator(_even_series_coeffs("plasticity"))
_TANH_SERIES = _series_evaluator(_even_series_coeffs("tanhlog"))


def _plast_value(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _PLAST_SERIES[0](t[s])
    tl = t[~s]
    e = np.exp(-2.0 * tl)
    # x coth x - log(2 sinh x) + log x, overflow-free
    out[~s] = tl * (1.0 + e) / (1.0 - e) - tl - np.log1p(-e) + np.log(tl)
    return out


def _plast_d1(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _PLAST_SERIES[1](t[s])
    tl = t[~s]
    e = np.exp(-2.0 * tl)
    out[~s] = 1.0 / tl - 4.0 * tl * e / (1.0 - e) ** 2
    return np.sign(x) * out


def _plast_d2(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _PLAST_SERIES[2](t[s])
    tl = t[~s]
    e = np.exp(-2.0 * tl)
    inv_sh2 = 4.0 * e / (1.0 - e) ** 2
    coth = (1.0 + e) / (1.0 - e)
    out[~s] = -1.0 / tl**2 - inv_sh2 + 2.0 * tl * coth * inv_sh2
    return out


def _tanh_value(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _TANH_SERIES[0](t[s])
    tl = t[~s]
    e = np.exp(-2.0 * tl)
    # -log(tanh x) + log x
    out[~s] = np.log1p(e) - np.log1p(-e) + np.log(tl)
    return out


def _tanh_d1(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _TANH_SERIES[1](t[s])
    tl = t[~s]
    e = np.exp(-4.0 * tl)
    # 1/x - 2/sinh(2x)
    out[~s] = 1.0 / tl - 4.0 * np.exp(-2.0 * tl) / (1.0 - e)
    return np.sign(x) * out


def _tanh_d2(x):
    t = np.abs(x)
    out = np.empty_like(t)
    s = t < _SERIES_CUT
    out[s] = _TANH_SERIES[2](t[s])
    tl = t[~s]
    e = np.exp(-4.0 * tl)
    # -1/x^2 + 4 cosh(2x)/sinh(2x)^2
    out[~s] = -1.0 / tl**2 + 8.0 * np.exp(-2.0 * tl) * (1.0 + e) / (1.0 - e) ** 2
    return out


plasticity_kernel = SmoothKernel("plasticity", _plast_value, _plast_d1, _plast_d2)
"""Regular part of ``x coth x - log(2|sinh x|)`` relative to ``-log|x|``."""

tanhlog_kernel = SmoothKernel("tanhlog", _tanh_value, _tanh_d1, _tanh_d2)
"""Regular part of ``-log|tanh x|`` relative to ``-log|x|``."""

REGULAR_PARTS = {"none": None, "plasticity": plasticity_kernel, "tanhlog": tanhlog_kernel}


# ---------------------------------------------------------------------------
# Interaction potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionPotential:
    """``V = V_a + V_reg`` with Riesz exponent ``a`` in [0, 1)."""

    a: float = 0.0
    regular_part: Optional[SmoothKernel] = None

    def __post_init__(self):
        object.__setattr__(self, "a", _check_exponent(self.a))

    @property
    def is_pure(self) -> bool:
        return self.regular_part is None

    @property
    def name(self) -> str:
        return "none" if self.regular_part is None else self.regular_part.name

    def __call__(self, x, order: int = 0):
        return eval_V(self, x, order)


def eval_V(p: InteractionPotential, x, derivative_order: int = 0):
    """Evaluate ``V``, ``V'`` or ``V''`` at ``x``.

    Order 0 returns ``+inf`` at the origin; higher orders raise ``ValueError``
    there.
    """
    if derivative_order not in (0, 1, 2):
        raise ValueError(f"derivative_order must be 0, 1 or 2, got {derivative_order}")
    arr = np.asarray(x, dtype=float)
    if derivative_order == 0:
        val = np.asarray(eval_Va(p.a, arr), dtype=float)
        if p.regular_part is not None:
            val = val + p.regular_part.value(np.atleast_1d(arr)).reshape(arr.shape)
        return _out(x, val)
    if np.any(arr == 0.0):
        raise ValueError("derivatives of V are undefined at x = 0")
    if derivative_order == 1:
        val = _dVa(p.a, arr)
        if p.regular_part is not None:
            val = val + p.regular_part.deriv1(np.atleast_1d(arr)).reshape(arr.shape)
    else:
        val = _d2Va(p.a, arr)
        if p.regular_part is not None:
            val = val + p.regular_part.deriv2(np.atleast_1d(arr)).reshape(arr.shape)
    return _out(x, val)


# ---------------------------------------------------------------------------
# Renormalised potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenormalizedPotential:
    """``V`` with its singularity replaced by the tangent line at ``1/n``."""

    base: InteractionPotential
    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be a positive integer")

    def __call__(self, x):
        return eval_Vn(self, x)


def eval_Vn(v: RenormalizedPotential, x):
    r = np.abs(np.asarray(x, dtype=float))
    h = 1.0 / v.n
    v_h = eval_V(v.base, h, 0)
    dv_h = eval_V(v.base, h, 1)
    out = np.where(r <= h, v_h + (r - h) * dv_h, 0.0)
    far = r > h
    if np.any(far):
        out = np.array(out, dtype=float)
        out[far] = np.asarray(eval_V(v.base, r[far], 0))
    return _out(x, out)


# ---------------------------------------------------------------------------
# Tail truncation
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _smoothstep(s):
    """C^2 step from 1 at s <= 0 to 0 at s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _smoothstep_d1(s):
    inside = (s > 0.0) & (s < 1.0)
    sc = np.clip(s, 0.0, 1.0)
    return np.where(inside, -30.0 * sc**2 * (1.0 - sc) ** 2, 0.0)


def truncate_tails(p: InteractionPotential, R: float) -> InteractionPotential:
    """Return a potential equal to ``p`` on ``(0, R]`` and constant beyond ``R + 1``.

    ``V'`` is multiplied by a C^2 cut-off on ``[R, R + 1]`` and integrated, so
    the result stays even, convex on ``(0, inf)`` and C^2 away from the origin.
    """
    R = float(R)
    if not R > 0.0:
        raise ValueError("truncation radius must be positive")
    a = p.a
    v_R = float(eval_V(p, R, 0))

    def dv_tilde(t):
        return np.asarray(eval_V(p, t, 1)) * _smoothstep(t - R)

    def blend_integral(t):
        # int_R^t V'(s) chi(s) ds for R <= t <= R + 1, vectorised Gauss-Legendre
        t = np.atleast_1d(t)
        half = 0.5 * (t - R)
        nodes = R + half[:, None] * (1.0 + _GL_NODES[None, :])
        return half * (dv_tilde(nodes) @ _GL_WEIGHTS)

    v_inf = v_R + float(blend_integral(np.array([R + 1.0]))[0])

    def full_value(t):
        t = np.abs(t)
        out = np.empty_like(t)
        inner = t <= R
        mid = (t > R) & (t < R + 1.0)
        outer = t >= R + 1.0
        out[inner] = np.asarray(eval_V(p, t[inner], 0))
        out[mid] = v_R + blend_integral(t[mid])
        out[outer] = v_inf
        return out

    def full_d1(t):
        return np.sign(t) * dv_tilde(np.abs(t))

    def full_d2(t):
        t = np.abs(t)
        return np.asarray(eval_V(p, t, 2)) * _smoothstep(t - R) + np.asarray(
            eval_V(p, t, 1)
        ) * _smoothstep_d1(t - R)

    # Express the truncated potential as V_a plus a new regular part. Near the
    # origin the regular part of the input is reused to avoid 0 * inf.
    reg = p.regular_part

    def reg_value(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t) if reg is None else reg.value(t)
        far = np.abs(t) > R
        if np.any(far):
            out = np.array(out)
            out[far] = full_value(t[far]) - np.asarray(eval_Va(a, t[far]))
        return out

    def reg_d1(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t) if reg is None else reg.deriv1(t)
        far = np.abs(t) > R
        if np.any(far):
            out = np.array(out)
            out[far] = full_d1(t[far]) - _dVa(a, t[far])
        return out

    def reg_d2(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t) if reg is None else reg.deriv2(t)
        far = np.abs(t) > R
        if np.any(far):
            out = np.array(out)
            out[far] = full_d2(t[far]) - _d2Va(a, t[far])
        return out

    kernel = SmoothKernel(f"{p.name}|R={R:g}", reg_value, reg_d1, reg_d2)
    return InteractionPotential(a=a, regular_part=kernel)


# ---------------------------------------------------------------------------
# Confining potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfiningPotential:
    """Polynomial ``U`` on ``[z1, z2]``, ``+inf`` outside.

    Coefficients are in increasing degree. Non-negativity, convexity and
    ``min U = 0`` are checked at construction.
    """

    coefficients: tuple = (0.0,)
    domain: tuple = (-math.inf, math.inf)
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        z1, z2 = (float(z) for z in self.domain)
        if not z1 < z2:
            raise ValueError("confining domain must satisfy z1 < z2")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "domain", (z1, z2))
        if self.check:
            self._validate()

    @property
    def bounded_below(self) -> bool:
        return math.isfinite(self.domain[0])

    @property
    def bounded_above(self) -> bool:
        return math.isfinite(self.domain[1])

    def _probe_interval(self):
        z1, z2 = self.domain
        lo = z1 if math.isfinite(z1) else (min(z2, 0.0) - 100.0 if math.isfinite(z2) else -100.0)
        hi = z2 if math.isfinite(z2) else (max(z1, 0.0) + 100.0 if math.isfinite(z1) else 100.0)
        return lo, hi

    def minimum(self) -> float:
        c = np.array(self.coefficients)
        lo, hi = self._probe_interval()
        cand = [lo, hi]
        if len(c) > 2:
            for r in P.polyroots(P.polyder(c)):
                if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                    cand.append(r.real)
        elif len(c) == 2 and c[1] == 0.0:
            cand.append(0.5 * (lo + hi))
        return float(min(P.polyval(np.array(cand), c)))

    def _validate(self):
        c = np.array(self.coefficients)
        z1, z2 = self.domain
        if not (math.isfinite(z1) and math.isfinite(z2)):
            # A constant is allowed (the free particle system); otherwise U has
            # to stay bounded below on every unbounded end.
            deg = len(np.trim_zeros(c, "b")) - 1
            if deg >= 1:
                lead = c[deg]
                up_ok = math.isfinite(z2) or lead > 0
                down_ok = math.isfinite(z1) or (lead > 0 if deg % 2 == 0 else lead < 0)
                if not (up_ok and down_ok):
                    raise ValueError("U must tend to +inf on unbounded ends of its domain")
        lo, hi = self._probe_interval()
        grid = np.linspace(lo, hi, 2001)
        scale = max(1.0, float(np.max(np.abs(P.polyval(grid, c)))))
        d2 = P.polyval(grid, P.polyder(c, 2)) if len(c) > 2 else np.zeros_like(grid)
        if np.min(d2) < -1e-10 * scale:
            raise ValueError("U must be convex on its domain")
        m = self.minimum()
        if abs(m) > 1e-10 * scale:
            raise ValueError(f"min U must be 0, got {m:.3e}")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.domain[0]) & (x <= self.domain[1])

    def __call__(self, x, order: int = 0):
        return eval_U(self, x, order)

    def cell_averages(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Mean of ``U`` over each ``[lo_i, hi_i]``, exact for the polynomial."""
        c = np.array(self.coefficients)
        k = max(1, (len(c) + 1) // 2)
        nodes, weights = np.polynomial.legendre.leggauss(k)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        pts = mid[..., None] + half[..., None] * nodes
        return 0.5 * (P.polyval(pts, c) @ weights)


def eval_U(u: ConfiningPotential, x, order: int = 0):
    """``U`` (or its derivatives) inside the domain, ``+inf`` outside for order 0."""
    xa = np.asarray(x, dtype=float)
    c = np.array(u.coefficients)
    if order:
        c = P.polyder(c, order) if len(c) > order else np.zeros(1)
    val = P.polyval(xa, c)
    if order == 0:
        val = np.where(u.contains(xa), val, np.inf)
    return _out(x, val)


def riesz(a: float, reg: str = "none") -> InteractionPotential:
    """Convenience constructor from an exponent and a built-in regular part name."""
    try:
        kernel = REGULAR_PARTS[reg]
    except KeyError:
        raise ValueError(f"unknown regular part {reg!r}") from None
    return InteractionPotential(a=a, regular_part=kernel)


def confining_from_spec(spec: dict) -> ConfiningPotential:
    dom = spec.get("domain", [None, None])
    z1 = -math.inf if dom[0] is None else float(dom[0])
    z2 = math.inf if dom[1] is None else float(dom[1])
    return ConfiningPotential(tuple(spec.get("coeffs", [0.0])), (z1, z2))


def potential_from_spec(spec: dict) -> tuple[InteractionPotential, ConfiningPotential]:
    """Build ``(V, U)`` from the JSON potential description used by the CLI."""
    V = riesz(float(spec.get("a", 0.0)), spec.get("reg", "none"))
    U = confining_from_spec(spec.get("U", {"coeffs": [0.0], "domain": [None, None]}))
    return V, U
