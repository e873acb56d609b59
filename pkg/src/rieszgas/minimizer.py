"""Damped projected Newton method for the discrete energy.

Only the outermost particles can touch the ends of ``D(U)`` (the iterates stay
ordered), so the feasible set is handled by an active set on ``x_0`` and
``x_n``. Each iteration solves the Newton system on the free coordinates, caps
the step so no gap shrinks by more than half, projects the end particles back
onto the domain and backtracks until the Armijo condition holds.

Stopping rule
-------------
The gradient entries are sums of ``n`` terms that can be much larger than the
sum itself, and the iterate is only known to one ulp per coordinate. The
smallest projected-gradient norm that can be certified is therefore about

    floor = n * max_k ( sum_j |H_kj| ulp(x) + eps * sum_j |g_kj| ) * safety

and a solve counts as converged once the scaled projected gradient is below
``max(gradient_tolerance, floor)``. The effective tolerance is reported.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .configuration import Configuration
from .continuum import EquilibriumCase, quantile_configuration
from .discrete_energy import (
    DENSE_HESSIAN_LIMIT,
    EnergyBreakdown,
    derivatives,
    energy,
    hessian_apply,
    interaction_energy,
    confinement_energy,
)
from .potentials import ConfiningPotential, InteractionPotential

__all__ = [
    "Initializer",
    "HessianMode",
    "SolverOptions",
    "SolveReport",
    "SolverError",
    "KKTResidual",
    "minimize",
    "verify_kkt",
    "projected_gradient",
]

_EPS = np.finfo(float).eps


class Initializer(enum.Enum):
    QUANTILE = "quantile"
    EQUISPACED = "equispaced"


class HessianMode(enum.Enum):
    DENSE = "dense"
    CG = "cg"


@dataclass(frozen=True)
class SolverOptions:
    gradient_tolerance: float = 1e-12
    max_iterations: int = 200
    initializer: Initializer = Initializer.QUANTILE
    hessian_mode: HessianMode = HessianMode.DENSE
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    gap_cap: float = 0.5
    roundoff_safety: float = 16.0
    cg_rtol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "initializer", Initializer(self.initializer))
        object.__setattr__(self, "hessian_mode", HessianMode(self.hessian_mode))
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.shrink < 1 or not 0 < self.sufficient_decrease < 1:
            raise ValueError("backtracking parameters must lie in (0, 1)")
        if not 0 < self.gap_cap < 1:
            raise ValueError("gap_cap must lie in (0, 1)")

    def as_dict(self) -> dict:
        return {
            "gradient_tolerance": self.gradient_tolerance,
            "max_iterations": self.max_iterations,
            "initializer": self.initializer.value,
            "hessian_mode": self.hessian_mode.value,
            "shrink": self.shrink,
            "sufficient_decrease": self.sufficient_decrease,
            "gap_cap": self.gap_cap,
            "roundoff_safety": self.roundoff_safety,
            "cg_rtol": self.cg_rtol,
        }


@dataclass(frozen=True)
class SolveReport:
    minimizer: Configuration
    iterations: int
    final_projected_gradient_norm: float
    active_bounds: frozenset
    energy: EnergyBreakdown
    all_in_support: bool | None
    converged: bool = True
    effective_tolerance: float = 0.0
    roundoff_floor: float = 0.0
    energy_history: tuple = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "minimizer": [float(v) for v in self.minimizer.positions],
            "iterations": self.iterations,
            "final_projected_gradient_norm": self.final_projected_gradient_norm,
            "effective_tolerance": self.effective_tolerance,
            "roundoff_floor": self.roundoff_floor,
            "active_bounds": sorted(self.active_bounds),
            "energy": self.energy.as_dict(),
            "all_in_support": self.all_in_support,
            "converged": self.converged,
        }


class SolverError(RuntimeError):
    """Raised when the iteration fails; ``report`` holds the last iterate."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _initial_positions(n, U: ConfiningPotential, options, case):
    if options.initializer is Initializer.QUANTILE and case is not None:
        return quantile_configuration(case, n).positions.copy()
    z1, z2 = U.domain
    if math.isfinite(z1) and math.isfinite(z2):
        lo, hi = z1, z2
    elif case is not None:
        lo, hi = 0.0, 1.0
    else:
        centre = _argmin_U(U)
        lo = max(z1, centre - 0.5)
        hi = min(z2, lo + 1.0)
    return np.linspace(lo, hi, n + 1)


def _argmin_U(U: ConfiningPotential) -> float:
    lo, hi = U._probe_interval()
    grid = np.linspace(lo, hi, 4001)
    return float(grid[np.argmin(np.asarray(U(grid)))])


def _active_set(x, g, U: ConfiningPotential):
    """Indices held at a bound: at ``z1`` with ``g >= 0`` or at ``z2`` with ``g <= 0``."""
    z1, z2 = U.domain
    active = set()
    if x[0] <= z1 and g[0] >= 0.0:
        active.add(0)
    if x[-1] >= z2 and g[-1] <= 0.0:
        active.add(x.size - 1)
    return active


def projected_gradient(x, g, U: ConfiningPotential) -> np.ndarray:
    """Gradient with components that only push into a bound removed."""
    z1, z2 = U.domain
    pg = np.array(g, dtype=float)
    if x[0] <= z1:
        pg[0] = min(pg[0], 0.0)
    if x[-1] >= z2:
        pg[-1] = max(pg[-1], 0.0)
    return pg


def _roundoff_floor(x, der, free, safety):
    n = x.size - 1
    ulp = np.spacing(np.max(np.abs(x)) or 1.0)
    levels = math.log2(x.size) + 1.0
    per = der.hessian_row_abs * ulp + _EPS * levels * der.gradient_abs
    return safety * n * float(np.max(per[free])) if free.any() else 0.0


def _total_energy(x, V, U):
    inter = interaction_energy(x, V)
    if not math.isfinite(inter):
        return math.inf, math.inf
    conf = confinement_energy(x, U)
    if not math.isfinite(conf):
        return math.inf, math.inf
    # Magnitude scale of the sum, used to judge rounding in energy differences.
    return inter + conf, abs(inter) + abs(conf)


def _newton_direction(x, der, free, V, U, options):
    g = der.gradient
    idx = np.flatnonzero(free)
    d = np.zeros_like(x)
    if options.hessian_mode is HessianMode.DENSE and der.hessian is not None:
        H = der.hessian[np.ix_(idx, idx)]
        H = 0.5 * (H + H.T)
        rhs = -g[idx]
        lam = 0.0
        scale = max(float(np.trace(H)) / max(idx.size, 1), 1e-300)
        for _ in range(30):
            try:
                fac = scipy.linalg.cho_factor(
                    H + lam * np.eye(idx.size), lower=True, check_finite=False
                )
                d[idx] = scipy.linalg.cho_solve(fac, rhs, check_finite=False)
                break
            except np.linalg.LinAlgError:
                lam = 1e-12 * scale if lam == 0.0 else 10.0 * lam
        else:
            d[idx] = rhs / np.maximum(der.hessian_diagonal[idx], 1e-300)
        return d

    def matvec(v):
        full = np.zeros_like(x)
        full[idx] = v
        return hessian_apply(x, V, U, full)[idx]

    op = LinearOperator((idx.size, idx.size), matvec=matvec, dtype=float)
    diag = np.maximum(der.hessian_diagonal[idx], 1e-300)
    prec = LinearOperator((idx.size, idx.size), matvec=lambda v: v / diag, dtype=float)
    sol, _ = cg(op, -g[idx], rtol=options.cg_rtol, atol=0.0, M=prec, maxiter=10 * idx.size)
    d[idx] = sol
    return d


def _max_step(x, d, cap):
    """Largest ``t <= 1`` keeping every gap above ``(1 - cap)`` of its value."""
    ell = np.diff(x)
    dl = np.diff(d)
    shrinking = dl < 0.0
    if not shrinking.any():
        return 1.0
    return min(1.0, cap * float(np.min(ell[shrinking] / -dl[shrinking])))


def _project(x, U):
    z1, z2 = U.domain
    y = x.copy()
    y[0] = max(y[0], z1)
    y[-1] = min(y[-1], z2)
    return y


def _in_support(x, case):
    if case is None:
        return None
    return bool(np.all((x >= 0.0) & (x <= 1.0)))


# ---------------------------------------------------------------------------
# Main entry points
# ---------------------------------------------------------------------------

def minimize(
    n: int,
    V: InteractionPotential,
    U: ConfiningPotential,
    options: SolverOptions | None = None,
    case: EquilibriumCase | None = None,
    initial=None,
) -> SolveReport:
    """Minimise ``E_n`` over ordered configurations in ``D(U)``.

    ``case`` enables the quantile initializer and the support check; a custom
    starting configuration may be passed as ``initial``.
    """
    options = options or SolverOptions()
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    mode = options.hessian_mode
    if mode is HessianMode.DENSE and n > DENSE_HESSIAN_LIMIT:
        options = replace(options, hessian_mode=HessianMode.CG)
        mode = HessianMode.CG

    if initial is not None:
        x = np.array(
            initial.positions if isinstance(initial, Configuration) else initial, dtype=float
        )
        if x.size != n + 1:
            raise ValueError("initial configuration has the wrong size")
    else:
        x = _initial_positions(n, U, options, case)
    x = _project(x, U)
    E, E_scale = _total_energy(x, V, U)
    if not math.isfinite(E):
        raise ValueError("initial configuration has infinite energy")

    history = [E]
    pg_norm = math.inf
    floor = 0.0
    converged = False
    iterations = 0
    for iterations in range(options.max_iterations + 1):
        der = derivatives(x, V, U, with_hessian=mode is HessianMode.DENSE)
        g = der.gradient
        active = _active_set(x, g, U)
        free = np.ones(x.size, dtype=bool)
        free[list(active)] = False
        pg = projected_gradient(x, g, U)
        pg_norm = n * float(np.max(np.abs(pg)))
        floor = _roundoff_floor(x, der, free, options.roundoff_safety)
        if pg_norm <= max(options.gradient_tolerance, floor):
            converged = True
            break
        if iterations == options.max_iterations:
            break

        d = _newton_direction(x, der, free, V, U, options)
        t = _max_step(x, d, options.gap_cap)
        slope = float(g @ d)
        if slope >= 0.0:
            d = -np.where(free, g, 0.0) / np.maximum(np.abs(der.hessian_diagonal), 1e-300)
            t = _max_step(x, d, options.gap_cap)
            slope = float(g @ d)
        noise = 64.0 * _EPS * E_scale
        accepted = None
        while t > 1e-20:
            trial = _project(x + t * d, U)
            E_trial, scale_trial = _total_energy(trial, V, U)
            if math.isfinite(E_trial):
                decrease_ok = E_trial <= E + options.sufficient_decrease * t * slope
                # Below the rounding level of E the Armijo test is meaningless;
                # the step is then accepted on the strength of the gradient.
                at_noise = -t * slope <= noise and E_trial <= E + noise
                if decrease_ok or at_noise:
                    accepted = (trial, E_trial, scale_trial)
                    break
            t *= options.shrink
        if accepted is None or np.array_equal(accepted[0], x):
            # No representable progress: the iterate is as good as it gets.
            converged = pg_norm <= 4.0 * max(options.gradient_tolerance, floor)
            break
        x, E, E_scale = accepted
        history.append(E)

    config = Configuration(x)
    report = SolveReport(
        minimizer=config,
        iterations=iterations,
        final_projected_gradient_norm=pg_norm,
        active_bounds=frozenset(int(i) for i in _active_set(x, derivatives(x, V, U, False).gradient, U)),
        energy=energy(config, V, U),
        all_in_support=_in_support(x, case),
        converged=converged,
        effective_tolerance=max(options.gradient_tolerance, floor),
        roundoff_floor=floor,
        energy_history=tuple(history),
    )
    if not converged:
        raise SolverError(
            f"projected Newton did not converge in {iterations} iterations "
            f"(scaled projected gradient {pg_norm:.3e})",
            report,
        )
    return report


@dataclass(frozen=True)
class KKTResidual:
    max_residual: float
    scaled_residual: float
    lower_bound_sign_ok: bool | None
    upper_bound_sign_ok: bool | None


def verify_kkt(report_or_config, V: InteractionPotential, U: ConfiningPotential) -> KKTResidual:
    """Recompute the gradient and measure the KKT violation.

    ``max_residual`` is the largest violation in the raw gradient,
    ``scaled_residual`` the same times ``n`` (the solver's norm). The sign
    flags say whether particles sitting on a bound are pushed into it.
    """
    c = report_or_config.minimizer if isinstance(report_or_config, SolveReport) else report_or_config
    x = c.positions if isinstance(c, Configuration) else np.asarray(c, dtype=float)
    g = derivatives(x, V, U, with_hessian=False).gradient
    pg = projected_gradient(x, g, U)
    z1, z2 = U.domain
    lower = bool(g[0] >= 0.0) if x[0] <= z1 else None
    upper = bool(g[-1] <= 0.0) if x[-1] >= z2 else None
    r = float(np.max(np.abs(pg)))
    return KKTResidual(r, (x.size - 1) * r, lower, upper)
