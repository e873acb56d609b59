"""Discrete particle energy, its derivatives and the auxiliary functionals.

    E_n(x) = (1/n^2) sum_{i>j} V(x_i - x_j) + (1/n) sum_i U(x_i)

Pair sums run over row blocks of the difference matrix so memory stays bounded
for large ``n``; every block is reduced with ``math.fsum`` and the block totals
are reduced again, which makes results independent of how work is split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configuration import Configuration
from .exact_energy import diagonal_block_integrals
from .potentials import ConfiningPotential, InteractionPotential, eval_U, eval_V

__all__ = [
    "EnergyBreakdown",
    "energy",
    "interaction_energy",
    "confinement_energy",
    "gradient",
    "hessian",
    "hessian_apply",
    "Derivatives",
    "derivatives",
    "nearest_neighbour_energy",
    "diagonal_block_energy",
    "DENSE_HESSIAN_LIMIT",
]

# Above this many particles the Hessian is only available matrix-free.
DENSE_HESSIAN_LIMIT = 4096
_BLOCK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    interaction: float
    confinement: float
    nearest_neighbour: float
    diagonal_block: float

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "interaction": self.interaction,
            "confinement": self.confinement,
            "nearest_neighbour": self.nearest_neighbour,
            "diagonal_block": self.diagonal_block,
        }


def _positions(c) -> np.ndarray:
    if isinstance(c, Configuration):
        return c.positions
    return np.asarray(c, dtype=float).ravel()


def _row_blocks(m: int, cols: int):
    rows = max(1, _BLOCK_ENTRIES // max(cols, 1))
    for start in range(0, m, rows):
        yield start, min(m, start + rows)


def interaction_energy(c, V: InteractionPotential) -> float:
    """``(1/n^2) sum_{i>j} V(x_i - x_j)``; ``+inf`` if the points are not strictly ordered."""
    x = _positions(c)
    n = x.size - 1
    if n < 1:
        raise ValueError("need at least two particles")
    if np.any(np.diff(x) <= 0.0):
        return math.inf
    partials = []
    cols = np.arange(x.size)
    for start, stop in _row_blocks(x.size, x.size):
        rows = np.arange(start, stop)
        mask = cols[None, :] < rows[:, None]
        if not mask.any():
            continue
        d = x[start:stop, None] - x[None, :]
        vals = np.asarray(eval_V(V, d[mask], 0))
        partials.append(math.fsum(vals))
    return math.fsum(partials) / (n * n)


def confinement_energy(c, U: ConfiningPotential) -> float:
    x = _positions(c)
    n = x.size - 1
    if not np.all(U.contains(x)):
        return math.inf
    return math.fsum(np.asarray(eval_U(U, x, 0))) / n


def nearest_neighbour_energy(c, V: InteractionPotential) -> float:
    """``(1/n^2) sum_i V(l_i)`` over neighbour gaps; ``+inf`` on collision."""
    x = _positions(c)
    n = x.size - 1
    ell = np.diff(x)
    if np.any(ell <= 0.0):
        return math.inf
    return math.fsum(np.atleast_1d(eval_V(V, ell, 0))) / (n * n)


def diagonal_block_energy(c, V: InteractionPotential, order: int = 16) -> float:
    """``(1/(2n^2)) sum_i l_i^-2 int_(0,l_i)^2 V``: self-interaction of the cells of ``phi``."""
    x = _positions(c)
    n = x.size - 1
    ell = np.diff(x)
    if np.any(ell <= 0.0):
        return math.inf
    blocks = diagonal_block_integrals(V, ell, order)
    return math.fsum(blocks / (ell * ell)) / (2.0 * n * n)


def energy(c, V: InteractionPotential, U: ConfiningPotential) -> EnergyBreakdown:
    """Total energy together with its parts; ``total`` is ``+inf`` outside ``D(U)``."""
    inter = interaction_energy(c, V)
    conf = confinement_energy(c, U)
    total = inter + conf if math.isfinite(inter) and math.isfinite(conf) else math.inf
    return EnergyBreakdown(
        total=total,
        interaction=inter,
        confinement=conf,
        nearest_neighbour=nearest_neighbour_energy(c, V),
        diagonal_block=diagonal_block_energy(c, V),
    )


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------

def _check_ordered(x: np.ndarray):
    if np.any(np.diff(x) <= 0.0):
        raise ValueError("collision or misordering: derivatives are undefined")


def _pair_derivative_blocks(x: np.ndarray, V: InteractionPotential, orders):
    """Yield ``(start, stop, [V^(k)(x_i - x_j) for k in orders])`` with zeroed diagonals."""
    m = x.size
    for start, stop in _row_blocks(m, m):
        d = x[start:stop, None] - x[None, :]
        idx = np.arange(start, stop)
        d[idx - start, idx] = 1.0  # placeholder, zeroed below
        out = []
        for k in orders:
            vals = np.asarray(eval_V(V, d, k))
            vals[idx - start, idx] = 0.0
            out.append(vals)
        yield start, stop, out


@dataclass(frozen=True)
class Derivatives:
    """First and second order information of ``E_n`` at one configuration.

    ``gradient_abs`` and ``hessian_row_abs`` hold ``sum_j |term_kj|`` for the
    gradient and Hessian rows; they bound the rounding error of each entry.
    """

    gradient: np.ndarray
    gradient_abs: np.ndarray
    hessian_diagonal: np.ndarray
    hessian_row_abs: np.ndarray
    hessian: np.ndarray | None


def derivatives(c, V: InteractionPotential, U: ConfiningPotential, with_hessian: bool = True):
    x = _positions(c)
    _check_ordered(x)
    m = x.size
    n = m - 1
    inv = 1.0 / (n * n)
    g = np.empty(m)
    gabs = np.empty(m)
    hdiag = np.empty(m)
    habs = np.empty(m)
    H = np.empty((m, m)) if with_hessian else None
    for start, stop, (v1, v2) in _pair_derivative_blocks(x, V, (1, 2)):
        g[start:stop] = v1.sum(axis=1) * inv
        gabs[start:stop] = np.abs(v1).sum(axis=1) * inv
        hdiag[start:stop] = v2.sum(axis=1) * inv
        habs[start:stop] = np.abs(v2).sum(axis=1) * inv
        if with_hessian:
            blk = -v2 * inv
            idx = np.arange(start, stop)
            blk[idx - start, idx] = hdiag[start:stop]
            H[start:stop] = blk
    du = np.asarray(eval_U(U, x, 1)) / n
    d2u = np.asarray(eval_U(U, x, 2)) / n
    g += du
    gabs += np.abs(du)
    habs = 2.0 * habs + np.abs(d2u)
    hdiag += d2u
    if with_hessian:
        H[np.diag_indices(m)] += d2u
    return Derivatives(g, gabs, hdiag, habs, H)


def gradient(c, V: InteractionPotential, U: ConfiningPotential) -> np.ndarray:
    """``dE_n/dx_k = (1/n^2) sum_{j != k} V'(x_k - x_j) + (1/n) U'(x_k)``."""
    return derivatives(c, V, U, with_hessian=False).gradient


def hessian(c, V: InteractionPotential, U: ConfiningPotential) -> np.ndarray:
    """Dense symmetric Hessian of ``E_n``."""
    x = _positions(c)
    if x.size > DENSE_HESSIAN_LIMIT + 1:
        raise ValueError(
            f"dense Hessian limited to n <= {DENSE_HESSIAN_LIMIT}; use hessian_apply"
        )
    H = derivatives(c, V, U, with_hessian=True).hessian
    return 0.5 * (H + H.T)


def hessian_apply(c, V: InteractionPotential, U: ConfiningPotential, v) -> np.ndarray:
    """Matrix-free ``H v`` with ``(Hv)_k = (1/n^2) sum_j V''(x_k - x_j)(v_k - v_j) + U''(x_k) v_k / n``."""
    x = _positions(c)
    _check_ordered(x)
    v = np.asarray(v, dtype=float)
    n = x.size - 1
    out = np.empty_like(v)
    for start, stop, (v2,) in _pair_derivative_blocks(x, V, (2,)):
        out[start:stop] = (v2 * (v[start:stop, None] - v[None, :])).sum(axis=1)
    out /= n * n
    out += np.asarray(eval_U(U, x, 2)) * v / n
    return out
