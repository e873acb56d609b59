"""Error measures, rate estimates and residual checks for computed minimisers."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import sici

from .configuration import Configuration, PiecewiseConstantDensity, density_from_configuration
from .continuum import CaseId, EquilibriumCase
from .discrete_energy import energy
from .exact_energy import continuum_energy_of_density
from .minimizer import SolveReport
from .potentials import ConfiningPotential, InteractionPotential, eval_U

__all__ = [
    "SupportWarning",
    "ConvergenceRecord",
    "compute_en",
    "convergence_record",
    "rate_estimate",
    "attach_rates",
    "last_four_average",
    "signed_difference",
    "spectral_vnorm",
    "spectral_weight_constant",
    "check_sandwich",
    "check_lower_bound_residual",
    "records_to_csv",
    "records_from_csv",
    "CSV_COLUMNS",
]


class SupportWarning(UserWarning):
    """Some particles lie outside ``supp rho``; ``e_n`` is then only a bound."""


@dataclass(frozen=True)
class ConvergenceRecord:
    case_id: str
    a: float
    n: int
    e_n: float
    E_n: float
    E_phi: float
    E_rho: float
    all_in_support: bool = True
    p: float | None = None
    lower_gap: float | None = None
    residual: float | None = None

    @property
    def exact(self) -> bool:
        """``e_n`` equals the squared energy norm only when all particles are in the support."""
        return self.all_in_support


def compute_en(report: SolveReport, case: EquilibriumCase, order: int = 8) -> float:
    """``e_n = 2 (E(phi*) - E(rho))`` with ``phi*`` built from the minimiser."""
    phi = density_from_configuration(report.minimizer)
    e_phi = continuum_energy_of_density(phi, case.V, case.U, order)
    if report.all_in_support is False:
        warnings.warn(
            "minimiser leaves [0, 1]; e_n is an upper bound, not a squared norm",
            SupportWarning,
            stacklevel=2,
        )
    return 2.0 * (e_phi - case.energy)


def convergence_record(report: SolveReport, case: EquilibriumCase) -> ConvergenceRecord:
    """Full record for one solve, including the sandwich and residual diagnostics."""
    c = report.minimizer
    phi = density_from_configuration(c)
    e_phi = continuum_energy_of_density(phi, case.V, case.U)
    lower_gap, _ = check_sandwich(c, case.V, case.U, e_phi=e_phi, breakdown=report.energy)
    residual = (
        check_lower_bound_residual(c, case, case.V, breakdown=report.energy) if c.n >= 2 else None
    )
    in_support = bool(report.all_in_support) if report.all_in_support is not None else True
    return ConvergenceRecord(
        case_id=case.case_id.value,
        a=case.a,
        n=c.n,
        e_n=2.0 * (e_phi - case.energy),
        E_n=report.energy.total,
        E_phi=e_phi,
        E_rho=case.energy,
        all_in_support=in_support,
        lower_gap=lower_gap,
        residual=residual,
    )


def rate_estimate(e_n: float, e_2n: float) -> float:
    """``p = (log e_n - log e_2n) / log 2``."""
    if not (e_n > 0 and e_2n > 0):
        raise ValueError(f"rate estimate needs positive errors, got {e_n!r}, {e_2n!r}")
    return (math.log(e_n) - math.log(e_2n)) / math.log(2.0)


def attach_rates(records) -> list:
    """Fill ``p`` for each record whose ``2n`` partner (same case and ``a``) exists."""
    by_key = {(r.case_id, r.a, r.n): r for r in records}
    out = []
    for r in sorted(records, key=lambda r: (r.case_id, r.a, r.n)):
        partner = by_key.get((r.case_id, r.a, 2 * r.n))
        p = None
        if partner is not None and r.e_n > 0 and partner.e_n > 0:
            p = rate_estimate(r.e_n, partner.e_n)
        out.append(replace(r, p=p))
    return out


def last_four_average(ps) -> float:
    """Mean of the last four rate estimates (fewer if fewer are available)."""
    vals = [p for p in ps if p is not None]
    if not vals:
        raise ValueError("no rate estimates to average")
    return float(np.mean(vals[-4:]))


# ---------------------------------------------------------------------------
# Spectral form of the energy norm
# ---------------------------------------------------------------------------

def signed_difference(phi: PiecewiseConstantDensity, psi: PiecewiseConstantDensity) -> PiecewiseConstantDensity:
    """``phi - psi`` on the common refinement of both breakpoint sets."""
    b = np.union1d(phi.breakpoints, psi.breakpoints)
    mid = 0.5 * (b[:-1] + b[1:])
    return PiecewiseConstantDensity(b, np.asarray(phi(mid)) - np.asarray(psi(mid)))


def spectral_weight_constant(a: float) -> float:
    """``c_a`` in ``w_a(omega) = c_a |omega|^(a-1)``."""
    if a == 0.0:
        return 0.5
    return 2.0 * math.sin(0.5 * math.pi * a) * math.gamma(1.0 - a) / (2.0 * math.pi)


_SERIES_Z = 4.0


def _upper_cos_integral(a: float, z: np.ndarray) -> np.ndarray:
    """``G(z) = int_z^inf u^(a-3) cos(u) du`` for ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if a == 0.0:
        _, ci = sici(z)
        return np.cos(z) / (2.0 * z * z) - np.sin(z) / (2.0 * z) + 0.5 * ci
    s = a - 2.0
    out = np.empty_like(z)
    small = z <= _SERIES_Z
    if small.any():
        zs = z[small]
        # Mellin transform of cos(u) - 1, continued into -2 < s < 0.
        acc = math.gamma(s) * math.cos(0.5 * math.pi * s) - zs**s / s
        term_sum = np.zeros_like(zs)
        for k in range(1, 30):
            term_sum += (-1) ** k * zs ** (2 * k + s) / (math.factorial(2 * k) * (2 * k + s))
        out[small] = acc - term_sum
    big = ~small
    if big.any():
        out[big] = _incomplete_gamma_cf(s, z[big])
    return out


def _incomplete_gamma_cf(s: float, z: np.ndarray) -> np.ndarray:
    """``Re int_z^inf u^(s-1) e^(iu) du`` via the continued fraction of ``Gamma(s, -iz)``."""
    x = -1j * z
    tiny = 1e-300
    b = x + 1.0 - s
    c = np.full_like(b, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(z.shape, dtype=bool)
    for i in range(1, 5000):
        an = -i * (i - s)
        b = b + 2.0
        d_new = an * d + b
        d_new = np.where(np.abs(d_new) < tiny, tiny, d_new)
        c_new = b + an / c
        c_new = np.where(np.abs(c_new) < tiny, tiny, c_new)
        d_new = 1.0 / d_new
        delta = d_new * c_new
        h = np.where(active, h * delta, h)
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        active &= np.abs(delta - 1.0) > 1e-15
        if not active.any():
            break
    # Gamma(s, -iz) = e^{iz} (-iz)^s h; the rotation factor e^{i pi s / 2} cancels.
    return np.real(np.exp(1j * z) * z**s * h)


def _jumps(nu: PiecewiseConstantDensity):
    """Breakpoints (centred) and jumps ``J_k = h_left - h_right``."""
    b = nu.breakpoints
    h = np.concatenate([[0.0], nu.heights, [0.0]])
    centre = 0.5 * (b[0] + b[-1])
    return b - centre, h[:-1] - h[1:]


def spectral_vnorm(nu: PiecewiseConstantDensity, a: float, omega_max: float | None = None) -> float:
    """``int w_a(omega) |nu_hat(omega)|^2 d omega`` for a zero-mass ``nu``.

    The integral over ``|omega| <= Omega`` uses graded Gauss-Legendre panels
    on the exact transform of ``nu``. Beyond ``Omega`` the identity
    ``|omega nu_hat|^2 = sum_kl J_k J_l cos(omega (b_k - b_l))`` reduces the
    tail to one incomplete-gamma integral per pair of breakpoints.
    """
    if not 0.0 <= a < 1.0:
        raise ValueError("a must lie in [0, 1)")
    masses = nu.cell_masses
    if abs(math.fsum(masses)) > 1e-12 * max(1.0, float(np.sum(np.abs(masses)))):
        raise ValueError("spectral_vnorm needs a zero-mass signed density")
    if not np.any(nu.heights):
        return 0.0
    b, J = _jumps(nu)
    keep = J != 0.0
    b, J = b[keep], J[keep]
    span = float(b[-1] - b[0])
    c_a = spectral_weight_constant(a)
    omega_max = float(omega_max) if omega_max is not None else 2000.0 / span

    # Cells for the transform: nu_hat = sum_i mu_i e^{-i w m_i} sinc(w l_i / 2).
    edges = nu.breakpoints - 0.5 * (nu.breakpoints[0] + nu.breakpoints[-1])
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    mu = masses

    def integrand(w):
        w = np.asarray(w)
        out = np.empty_like(w)
        step = max(1, (1 << 21) // max(mids.size, 1))
        for i in range(0, w.size, step):
            ww = w[i : i + step, None]
            phase = ww * mids[None, :]
            sinc = np.sinc(ww * half[None, :] / math.pi)
            re = (mu * np.cos(phase) * sinc).sum(axis=1)
            im = (mu * np.sin(phase) * sinc).sum(axis=1)
            out[i : i + step] = c_a * w[i : i + step] ** (a - 1.0) * (re * re + im * im)
        return out

    nodes, weights = np.polynomial.legendre.leggauss(24)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights

    w1 = min(1.0 / span, omega_max)
    lo_cut = 1e-6 * w1
    panels = [(w1 * 2.0 ** -(k + 1), w1 * 2.0**-k) for k in range(int(math.log2(w1 / lo_cut)) + 1)]
    width = 0.25 * math.pi / span
    count = max(1, int(math.ceil((omega_max - w1) / width)))
    edges_w = np.linspace(w1, omega_max, count + 1)
    panels += list(zip(edges_w[:-1], edges_w[1:]))
    starts = np.array([p[0] for p in panels])
    ends = np.array([p[1] for p in panels])
    pts = (starts[:, None] + (ends - starts)[:, None] * nodes[None, :]).ravel()
    wts = ((ends - starts)[:, None] * weights[None, :]).ravel()
    head = math.fsum(wts * integrand(pts))

    # [0, lo_cut]: nu_hat(w) ~ -i w M1 there.
    m1 = math.fsum(mu * mids)
    head += c_a * m1 * m1 * lo_cut ** (a + 2.0) / (a + 2.0)

    # Tail beyond omega_max, pair by pair.
    tail_parts = []
    zero_term = omega_max ** (a - 2.0) / (2.0 - a)
    tail_parts.append(zero_term * float(np.sum(J * J)))
    iu, ju = np.triu_indices(J.size, k=1)
    for start in range(0, iu.size, 1 << 20):
        sl = slice(start, start + (1 << 20))
        delta = b[ju[sl]] - b[iu[sl]]
        vals = delta ** (2.0 - a) * _upper_cos_integral(a, omega_max * delta)
        tail_parts.append(2.0 * math.fsum(J[iu[sl]] * J[ju[sl]] * vals))
    tail = c_a * math.fsum(tail_parts)
    # Both half-lines contribute equally.
    return 2.0 * (head + tail)


# ---------------------------------------------------------------------------
# Sandwich bounds and residuals
# ---------------------------------------------------------------------------

def check_sandwich(
    c: Configuration,
    V: InteractionPotential,
    U: ConfiningPotential,
    e_phi: float | None = None,
    breakdown=None,
) -> tuple[float, float]:
    """Compare ``E(phi) - E_n(x)`` with its explicit lower bound.

    Returns ``lower_gap = [E(phi) - E_n] - [-E_nn - (U(0) + U(1)) / n]``,
    which is non-negative for configurations in ``[0, 1]``, and the ratio
    ``[E(phi) - E_n] / (E_nn + 1/n)``.
    """
    n = c.n
    br = breakdown if breakdown is not None else energy(c, V, U)
    if e_phi is None:
        e_phi = continuum_energy_of_density(density_from_configuration(c), V, U)
    diff = e_phi - br.total
    u_ends = float(eval_U(U, 0.0)) + float(eval_U(U, 1.0))
    lower = -br.nearest_neighbour - u_ends / n
    return diff - lower, diff / (br.nearest_neighbour + 1.0 / n)


def check_lower_bound_residual(
    c: Configuration, case: EquilibriumCase, V: InteractionPotential | None = None, breakdown=None
) -> float:
    """``n^(1-a) (E_n - E_nn - E(rho))``, or with ``n / (log n)^3`` when ``a = 0``."""
    V = V if V is not None else case.V
    n = c.n
    if n < 2:
        raise ValueError("the residual needs n >= 2")
    br = breakdown if breakdown is not None else energy(c, V, case.U)
    gap = br.total - br.nearest_neighbour - case.energy
    if case.a == 0.0:
        return n / math.log(n) ** 3 * gap
    return n ** (1.0 - case.a) * gap


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("case", "a", "n", "e_n", "p", "lower_gap", "residual")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(r.case_id), _fmt(r.a), _fmt(r.n), _fmt(r.e_n), _fmt(r.p),
                    _fmt(r.lower_gap), _fmt(r.residual)])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    """Parse the diagnostic columns back; energy fields are not stored and come back as NaN."""
    rows = list(csv.DictReader(io.StringIO(text)))

    def opt(v):
        return None if v == "" else float(v)

    out = []
    for row in rows:
        out.append(
            ConvergenceRecord(
                case_id=CaseId.parse(row["case"]).value,
                a=float(row["a"]),
                n=int(row["n"]),
                e_n=float(row["e_n"]),
                E_n=math.nan,
                E_phi=math.nan,
                E_rho=math.nan,
                p=opt(row["p"]),
                lower_gap=opt(row["lower_gap"]),
                residual=opt(row["residual"]),
            )
        )
    return out


def record_as_dict(r: ConvergenceRecord) -> dict:
    return asdict(r)
