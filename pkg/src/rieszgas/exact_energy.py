"""Exact continuum energies of piecewise-constant densities.

For a kernel ``g`` depending on ``x - y`` and any ``F`` with ``F'' = g``,

    int_p^q int_r^s g(x - y) dy dx = F(q - r) - F(q - s) - F(p - r) + F(p - s),

which covers disjoint, touching, overlapping and coincident rectangles with a
single formula. For the Riesz kernel ``F`` is known in closed form and is C^1
at the origin, so no case analysis is needed.
"""

from __future__ import annotations

import math

import numpy as np

from .configuration import PiecewiseConstantDensity
from .potentials import ConfiningPotential, InteractionPotential, SmoothKernel

__all__ = [
    "second_antiderivative_Va",
    "rect_integral_Va",
    "rect_integral_Vreg",
    "rect_integral_V",
    "diagonal_block_integrals",
    "interaction_energy_of_density",
    "confinement_energy_of_density",
    "continuum_energy_of_density",
]

# Cell-pair matrices are processed in row blocks of at most this many entries.
_BLOCK_ENTRIES = 1 << 22


def second_antiderivative_Va(a: float, t):
    """``F`` with ``F'' = V_a`` and ``F(0) = F'(0) = 0`` (even in ``t``)."""
    t = np.abs(np.asarray(t, dtype=float))
    if a == 0.0:
        out = np.zeros_like(t)
        pos = t > 0.0
        tp = t[pos]
        out[pos] = tp * tp * (3.0 - 2.0 * np.log(tp)) / 4.0
    else:
        out = t ** (2.0 - a) / ((1.0 - a) * (2.0 - a))
    return float(out) if out.ndim == 0 else out


def _check_interval(iv):
    lo, hi = float(iv[0]), float(iv[1])
    if not lo < hi:
        raise ValueError(f"degenerate interval [{lo}, {hi}]")
    return lo, hi


def rect_integral_Va(a: float, xint, yint) -> float:
    """Exact ``int_xint int_yint V_a(x - y) dy dx``."""
    if not 0.0 <= a < 1.0:
        raise ValueError("a must lie in [0, 1)")
    p, q = _check_interval(xint)
    r, s = _check_interval(yint)
    F = second_antiderivative_Va
    corners = [F(a, q - r), -F(a, q - s), -F(a, p - r), F(a, p - s)]
    return math.fsum(corners)


# ---------------------------------------------------------------------------
# Regular part by quadrature
# ---------------------------------------------------------------------------

def _gauss(order: int):
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _tensor(kernel, p, q, r, s, order):
    u, w = _gauss(order)
    xs = p + (q - p) * u
    ys = r + (s - r) * u
    vals = kernel(xs[:, None] - ys[None, :])
    return (q - p) * (s - r) * float(w @ vals @ w)


def _duffy_square(kernel, c, d, order):
    """Integral over ``[c, d]^2``, each triangle mapped so the diagonal is a side."""
    u, w = _gauss(order)
    h = d - c
    diff = h * u[:, None] * (1.0 - u[None, :])
    vals = (kernel(diff) + kernel(-diff)) * u[:, None]
    return h * h * float(w @ vals @ w)


def _breaks(lo, hi, others):
    pts = {lo, hi}
    pts.update(o for o in others if lo < o < hi)
    return sorted(pts)


def rect_integral_Vreg(kernel: SmoothKernel, xint, yint, order: int = 16) -> float:
    """Gauss-Legendre ``int int kernel(x - y)`` over a rectangle.

    The rectangle is cut at the projections of the other interval's ends;
    sub-squares on the diagonal are integrated with a Duffy map.
    """
    p, q = _check_interval(xint)
    r, s = _check_interval(yint)
    _gauss(order)
    kfun = kernel.value if isinstance(kernel, SmoothKernel) else kernel
    xb = _breaks(p, q, (r, s))
    yb = _breaks(r, s, (p, q))
    parts = []
    for x0, x1 in zip(xb[:-1], xb[1:]):
        for y0, y1 in zip(yb[:-1], yb[1:]):
            if x0 == y0 and x1 == y1:
                parts.append(_duffy_square(kfun, x0, x1, order))
            else:
                parts.append(_tensor(kfun, x0, x1, y0, y1, order))
    return math.fsum(parts)


def rect_integral_V(V: InteractionPotential, xint, yint, order: int = 16) -> float:
    val = rect_integral_Va(V.a, xint, yint)
    if V.regular_part is not None:
        val += rect_integral_Vreg(V.regular_part, xint, yint, order)
    return val


def diagonal_block_integrals(V: InteractionPotential, widths, order: int = 16) -> np.ndarray:
    """``int_(0,l)^2 V(x - y)`` for each width ``l``."""
    ell = np.asarray(widths, dtype=float)
    out = 2.0 * second_antiderivative_Va(V.a, ell)
    out = np.atleast_1d(out)
    if V.regular_part is not None:
        out = out + _duffy_diagonal(V.regular_part.value, np.atleast_1d(ell), order)
    return out


def _duffy_diagonal(kfun, widths, order):
    u, w = _gauss(order)
    base = u[:, None] * (1.0 - u[None, :])
    diff = widths[:, None, None] * base[None, :, :]
    vals = (kfun(diff) + kfun(-diff)) * u[None, :, None]
    return widths * widths * np.einsum("ikl,k,l->i", vals, w, w)


# ---------------------------------------------------------------------------
# Energies of densities
# ---------------------------------------------------------------------------

def _pair_blocks(m: int):
    rows = max(1, _BLOCK_ENTRIES // max(m, 1))
    for start in range(0, m, rows):
        yield slice(start, min(m, start + rows))


def interaction_energy_of_density(
    phi: PiecewiseConstantDensity, V: InteractionPotential, order: int = 8
) -> float:
    """``(1/2) int int V(x - y) phi(x) phi(y)`` summed over all cell pairs."""
    b = phi.breakpoints
    h = phi.heights
    lo, hi = b[:-1], b[1:]
    m = h.size
    F = second_antiderivative_Va
    a = V.a
    partials = []
    for blk in _pair_blocks(m):
        P = lo[blk, None]
        Q = hi[blk, None]
        R = lo[None, :]
        S = hi[None, :]
        block = F(a, Q - R) - F(a, Q - S) - F(a, P - R) + F(a, P - S)
        block *= h[blk, None] * h[None, :]
        partials.append(math.fsum(block.ravel()))
    total = math.fsum(partials)
    if V.regular_part is not None:
        total += _vreg_double_sum(phi, V.regular_part, order)
    return 0.5 * total


def _vreg_double_sum(phi, kernel: SmoothKernel, order: int) -> float:
    b = phi.breakpoints
    h = phi.heights
    lo, width = b[:-1], np.diff(b)
    m = h.size
    u, w = _gauss(order)
    nodes = lo[:, None] + width[:, None] * u[None, :]  # (m, k)
    partials = []
    rows = max(1, _BLOCK_ENTRIES // max(1, m * order * order))
    for start in range(0, m, rows):
        sl = slice(start, min(m, start + rows))
        diff = nodes[sl, None, :, None] - nodes[None, :, None, :]
        vals = kernel.value(diff)
        blk = np.einsum("ijkl,k,l->ij", vals, w, w)
        blk *= (width[sl, None] * width[None, :]) * (h[sl, None] * h[None, :])
        idx = np.arange(sl.start, sl.stop)
        blk[idx - sl.start, idx] = 0.0  # diagonal cells are redone below
        partials.append(math.fsum(blk.ravel()))
    diag = _duffy_diagonal(kernel.value, width, max(order, 16))
    partials.append(math.fsum(h * h * diag))
    return math.fsum(partials)


def confinement_energy_of_density(phi: PiecewiseConstantDensity, U: ConfiningPotential) -> float:
    """``int U phi``; ``+inf`` if the support leaves the domain of ``U``."""
    b = phi.breakpoints
    z1, z2 = U.domain
    if b[0] < z1 or b[-1] > z2:
        return math.inf
    avg = U.cell_averages(b[:-1], b[1:])
    return math.fsum(phi.cell_masses * avg)


def continuum_energy_of_density(
    phi: PiecewiseConstantDensity,
    V: InteractionPotential,
    U: ConfiningPotential,
    order: int = 8,
) -> float:
    conf = confinement_energy_of_density(phi, U)
    if math.isinf(conf):
        return math.inf
    return interaction_energy_of_density(phi, V, order) + conf
