"""Explicit equilibrium measures for the two benchmark problems.

Both benchmarks use the pure Riesz kernel and have ``supp rho = [0, 1]``:

* ``BOX``: ``U = 0`` on ``[0, 1]``, ``+inf`` outside; ``rho ~ [x(1-x)]^-(1-a)/2``.
* ``QUADRATIC``: ``U = gamma_a (x - 1/2)^2`` on the real line;
  ``rho ~ [x(1-x)]^(1+a)/2``.

Both densities are symmetric Beta laws, so the CDF is a regularised incomplete
beta function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import betainc

from .configuration import Configuration, PiecewiseConstantDensity
from .potentials import ConfiningPotential, InteractionPotential

__all__ = [
    "CaseId",
    "EquilibriumCase",
    "equilibrium_density",
    "equilibrium_cdf",
    "continuum_minimum_energy",
    "gamma_a",
    "quantile",
    "quantile_configuration",
    "discretize_equilibrium",
]


class CaseId(enum.Enum):
    BOX = "box"
    QUADRATIC = "quadratic"

    @classmethod
    def parse(cls, value) -> "CaseId":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "1": cls.BOX, "case1": cls.BOX, "boundedbox": cls.BOX,
            "2": cls.QUADRATIC, "case2": cls.QUADRATIC, "quadraticconfinement": cls.QUADRATIC,
        }
        if v in aliases:
            return aliases[v]
        return cls(v)


def _gamma_ratio(a: float) -> float:
    """``a Gamma(a) / Gamma((1+a)/2)^2`` written as ``Gamma(1+a)/...`` (finite at 0)."""
    return math.gamma(1.0 + a) / math.gamma(0.5 * (1.0 + a)) ** 2


def gamma_a(a: float) -> float:
    """Strength of the quadratic confinement giving ``supp rho = [0, 1]``."""
    if a == 0.0:
        return 4.0
    return 2.0 * math.pi * a * (2.0 + a) * _gamma_ratio(a) / math.cos(0.5 * math.pi * a)


@dataclass(frozen=True)
class EquilibriumCase:
    case_id: CaseId
    a: float

    def __post_init__(self):
        object.__setattr__(self, "case_id", CaseId.parse(self.case_id))
        a = float(self.a)
        if not 0.0 <= a < 1.0:
            raise ValueError(f"a must lie in [0, 1), got {a}")
        object.__setattr__(self, "a", a)

    @property
    def beta(self) -> float:
        """Exponent of ``[x(1-x)]`` in the density."""
        if self.case_id is CaseId.BOX:
            return -0.5 * (1.0 - self.a)
        return 0.5 * (1.0 + self.a)

    @property
    def shape(self) -> float:
        """Both Beta parameters of the symmetric Beta law."""
        return self.beta + 1.0

    @cached_property
    def normalisation(self) -> float:
        a = self.a
        if self.case_id is CaseId.BOX:
            return 1.0 / math.pi if a == 0.0 else _gamma_ratio(a)
        if a == 0.0:
            return 8.0 / math.pi
        return 4.0 * (2.0 + a) * _gamma_ratio(a) / (1.0 + a)

    @cached_property
    def energy(self) -> float:
        return continuum_minimum_energy(self)

    @property
    def gamma(self) -> float | None:
        return gamma_a(self.a) if self.case_id is CaseId.QUADRATIC else None

    @property
    def V(self) -> InteractionPotential:
        return InteractionPotential(self.a)

    @cached_property
    def U(self) -> ConfiningPotential:
        if self.case_id is CaseId.BOX:
            return ConfiningPotential((0.0,), (0.0, 1.0))
        g = gamma_a(self.a)
        return ConfiningPotential((0.25 * g, -g, g), (-math.inf, math.inf))

    def density(self, x):
        return equilibrium_density(self, x)

    def cdf(self, x):
        return equilibrium_cdf(self, x)

    def quantile(self, u):
        return quantile(self, u)


def equilibrium_density(case: EquilibriumCase, x):
    """Density on ``(0, 1)``, zero outside; the box density is ``+inf`` at 0 and 1."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    w = np.where(inside, x * (1.0 - x), 1.0)
    with np.errstate(divide="ignore"):
        val = case.normalisation * w**case.beta
    if case.case_id is CaseId.BOX:
        val = np.where((x == 0.0) | (x == 1.0), np.inf, val)
    val = np.where(inside | np.isinf(val), val, 0.0)
    return float(val) if val.ndim == 0 else val


def equilibrium_cdf(case: EquilibriumCase, x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    val = betainc(case.shape, case.shape, x)
    return float(val) if val.ndim == 0 else val


def continuum_minimum_energy(case: EquilibriumCase) -> float:
    """Minimal continuum energy.

    For the quadratic case at ``a = 0`` this is ``log 2 + 3/8``: the semicircle
    of radius 1/2 has logarithmic energy ``log 4 + 1/4`` and
    ``int U drho = gamma_0 * Var = 1/4``.
    """
    a = case.a
    if a == 0.0:
        if case.case_id is CaseId.BOX:
            return math.log(2.0)
        return math.log(2.0) + 0.375
    base = math.pi * _gamma_ratio(a) / (2.0 * math.cos(0.5 * math.pi * a))
    if case.case_id is CaseId.BOX:
        return base
    return base * (2.0 + a) ** 2 / (4.0 + a)


# ---------------------------------------------------------------------------
# Quantiles
# ---------------------------------------------------------------------------

_QUANTILE_TOL = 1e-14
_MAX_SLOPE = 1e12


def _quantile_lower(case: EquilibriumCase, u: np.ndarray) -> np.ndarray:
    """Safeguarded Newton for ``u <= 1/2``; the answer lies in ``[0, 1/2]``."""
    lo = np.zeros_like(u)
    hi = np.full_like(u, 0.5)
    # Start from the endpoint asymptotics CDF(x) ~ c x^shape / shape.
    s = case.shape
    x = np.clip((u * s / case.normalisation) ** (1.0 / s), 1e-300, 0.5)
    for _ in range(200):
        f = equilibrium_cdf(case, x) - u
        done = np.abs(f) <= _QUANTILE_TOL * np.maximum(u, 1e-300) + 1e-300
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        if np.all(done | (hi - lo <= 4 * np.spacing(hi))):
            break
        dens = equilibrium_density(case, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / dens
        xn = x - step
        bad = (~np.isfinite(xn)) | (xn <= lo) | (xn >= hi) | (dens > _MAX_SLOPE)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(done, x, xn)
    return x


def quantile(case: EquilibriumCase, u):
    """Inverse CDF; symmetric by construction, ``quantile(0) = 0``, ``quantile(1) = 1``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0.0) | (u_arr > 1.0)):
        raise ValueError("u must lie in [0, 1]")
    flat = np.atleast_1d(u_arr).ravel()
    out = np.empty_like(flat)
    upper = flat > 0.5
    w = np.where(upper, 1.0 - flat, flat)
    res = np.zeros_like(w)
    mid = (w > 0.0) & (w < 0.5)
    if np.any(mid):
        res[mid] = _quantile_lower(case, w[mid])
    res[w == 0.5] = 0.5
    out[:] = np.where(upper, 1.0 - res, res)
    out[flat == 0.0] = 0.0
    out[flat == 1.0] = 1.0
    out = out.reshape(np.shape(u_arr))
    return float(out) if out.ndim == 0 else out


def quantile_configuration(case: EquilibriumCase, n: int) -> Configuration:
    """``x_i = quantile(i/n)`` so each neighbour cell carries mass ``1/n``."""
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    n = int(n)
    x = quantile(case, np.arange(n + 1) / n)
    x = np.atleast_1d(x)
    x[0], x[-1] = 0.0, 1.0
    return Configuration(x)


def discretize_equilibrium(case: EquilibriumCase, N: int) -> PiecewiseConstantDensity:
    """Piecewise-constant proxy of the equilibrium density on its ``N``-quantile grid."""
    b = quantile_configuration(case, N).positions
    return PiecewiseConstantDensity(b, (1.0 / N) / np.diff(b))
