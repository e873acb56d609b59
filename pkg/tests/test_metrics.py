import math
import warnings

import numpy as np
import pytest

from rieszgas.configuration import Configuration, PiecewiseConstantDensity, density_from_configuration
from rieszgas.continuum import EquilibriumCase, discretize_equilibrium
from rieszgas.exact_energy import rect_integral_Va
from rieszgas.metrics import (
    ConvergenceRecord,
    SupportWarning,
    attach_rates,
    check_lower_bound_residual,
    check_sandwich,
    compute_en,
    convergence_record,
    last_four_average,
    rate_estimate,
    records_from_csv,
    records_to_csv,
    signed_difference,
    spectral_vnorm,
    spectral_weight_constant,
)
from rieszgas.minimizer import minimize
from rieszgas.potentials import riesz

from conftest import random_configuration


def solve(case, n):
    return minimize(n, case.V, case.U, case=case)


def double_sum(nu, a):
    """``int int V_a d nu d nu`` through the exact rectangle integrals."""
    b, h = nu.breakpoints, nu.heights
    m = h.size
    terms = [
        h[i] * h[j] * rect_integral_Va(a, (b[i], b[i + 1]), (b[j], b[j + 1]))
        for i in range(m)
        for j in range(m)
    ]
    return math.fsum(terms)


# --- e_n and p ----------------------------------------------------------------

def test_compute_en_example():
    case = EquilibriumCase("box", 0.0)
    r = solve(case, 2)
    assert compute_en(r, case) == pytest.approx(2 * (0.75 - math.log(2)), rel=1e-13)
    assert compute_en(r, case) == pytest.approx(0.113706, abs=1e-6)


@pytest.mark.parametrize("case_id", ["box", "quadratic"])
@pytest.mark.parametrize("a", [0.0, 0.5])
def test_en_nonnegative(case_id, a):
    case = EquilibriumCase(case_id, a)
    for n in (1, 3, 8, 33):
        assert compute_en(solve(case, n), case) >= -1e-12


def test_compute_en_flags_support_violation():
    case = EquilibriumCase("quadratic", 0.5)
    r = solve(case, 8)
    from dataclasses import replace

    with pytest.warns(SupportWarning):
        compute_en(replace(r, all_in_support=False), case)


def test_rate_estimate_examples():
    assert rate_estimate(1.0, 2**-1.5) == pytest.approx(1.5, rel=1e-15)
    assert rate_estimate(0.3, 0.3) == 0.0
    for bad in ((0.0, 1.0), (1.0, -1.0)):
        with pytest.raises(ValueError):
            rate_estimate(*bad)


def test_rate_reproduces_quadratic_half_at_64():
    case = EquilibriumCase("quadratic", 0.5)
    p = rate_estimate(compute_en(solve(case, 64), case), compute_en(solve(case, 128), case))
    assert round(p, 2) == 1.17


def test_rate_reproduces_box_quarter_at_32():
    case = EquilibriumCase("box", 0.25)
    p = rate_estimate(compute_en(solve(case, 32), case), compute_en(solve(case, 64), case))
    assert round(p, 2) == 1.60


def test_attach_rates_and_average():
    recs = [
        ConvergenceRecord("box", 0.5, n, 1.0 / n**1.5, 0, 0, 0) for n in (4, 8, 16, 32, 64)
    ] + [ConvergenceRecord("quadratic", 0.5, 4, 1.0, 0, 0, 0)]
    out = attach_rates(recs)
    box = [r for r in out if r.case_id == "box"]
    assert [r.p is None for r in box] == [False] * 4 + [True]
    assert all(r.p == pytest.approx(1.5) for r in box[:4])
    assert [r for r in out if r.case_id == "quadratic"][0].p is None
    assert last_four_average([r.p for r in box]) == pytest.approx(1.5)
    assert last_four_average([1.0, 2.0, 3.0, 4.0, 5.0, None]) == 3.5
    with pytest.raises(ValueError):
        last_four_average([None])


def test_csv_round_trip():
    case = EquilibriumCase("box", 0.5)
    recs = attach_rates([convergence_record(solve(case, n), case) for n in (4, 8)])
    text = records_to_csv(recs)
    assert text.splitlines()[0] == "case,a,n,e_n,p,lower_gap,residual"
    assert "\r\n" in text
    back = records_from_csv(text)
    for r, s in zip(recs, back):
        assert (r.case_id, r.a, r.n, r.e_n, r.p, r.lower_gap, r.residual) == (
            s.case_id, s.a, s.n, s.e_n, s.p, s.lower_gap, s.residual
        )


# --- spectral norm --------------------------------------------------------------

def test_spectral_zero_for_zero_measure():
    phi = density_from_configuration(Configuration([0, 0.3, 1]))
    assert spectral_vnorm(signed_difference(phi, phi), 0.5) == 0.0


def test_spectral_rejects_nonzero_mass():
    with pytest.raises(ValueError):
        spectral_vnorm(PiecewiseConstantDensity([0, 1], [1.0]), 0.5)


@pytest.mark.parametrize("a", [0.0, 0.25, 0.5, 0.75])
def test_spectral_weight_fixed_by_rectangle_oracle(a):
    nu = PiecewiseConstantDensity([0, 1, 2], [1.0, -1.0])
    ref = double_sum(nu, a)
    assert spectral_vnorm(nu, a) == pytest.approx(ref, rel=1e-10)
    if a > 0:
        assert spectral_weight_constant(a) == pytest.approx(
            math.sin(math.pi * a / 2) * math.gamma(1 - a) / math.pi, rel=1e-15
        )


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_spectral_matches_double_sums_on_random_measures(a, rng):
    for _ in range(20):
        m = int(rng.integers(2, 9))
        b = np.sort(rng.uniform(0, 1, m + 1))
        widths = np.diff(b)
        h = rng.normal(size=m)
        h -= np.dot(h, widths) / widths.sum() / 1.0
        nu = PiecewiseConstantDensity(b, h)
        assert spectral_vnorm(nu, a) == pytest.approx(double_sum(nu, a), rel=1e-4)


def test_spectral_norm_of_minimiser_matches_en():
    case = EquilibriumCase("box", 0.5)
    n = 16
    r = solve(case, n)
    e_n = compute_en(r, case)
    phi = density_from_configuration(r.minimizer)
    rho = discretize_equilibrium(case, 64 * n)
    s = spectral_vnorm(signed_difference(phi, rho), case.a)
    assert 0.8 <= s / e_n <= 1.25


# --- sandwich and residuals -------------------------------------------------------

def test_sandwich_single_cell_example():
    case = EquilibriumCase("box", 0.5)
    gap, ratio = check_sandwich(Configuration([0, 1]), case.V, case.U)
    assert gap == pytest.approx(4 / 3, rel=1e-14)
    assert ratio == pytest.approx((1 / 3) / 2, rel=1e-14)


@pytest.mark.parametrize("a", [0.0, 0.5])
def test_sandwich_lower_bound_on_random_configurations(a, rng):
    case = EquilibriumCase("box", a)
    for i in range(100):
        n = (4, 8, 16)[i % 3]
        c = Configuration(random_configuration(rng, n))
        gap, _ = check_sandwich(c, case.V, case.U)
        assert gap >= -1e-10


def test_sandwich_upper_ratio_stable_for_minimisers():
    # "stable": growth below 10% per octave over the last four octaves of the
    # sweep range 2^2 .. 2^11
    case = EquilibriumCase("quadratic", 0.5)
    ratios = []
    for k in range(6, 12):
        r = solve(case, 2**k)
        gap, ratio = check_sandwich(r.minimizer, case.V, case.U, breakdown=r.energy)
        assert gap >= -1e-10
        ratios.append(ratio)
    assert all(np.isfinite(ratios))
    tail = ratios[-5:]
    assert all(b <= x + 0.10 * abs(x) for x, b in zip(tail, tail[1:]))


def test_lower_bound_residual():
    case = EquilibriumCase("box", 0.5)
    vals = {"minimiser": [], "equispaced": []}
    for k in range(2, 9):
        n = 2**k
        vals["minimiser"].append(check_lower_bound_residual(solve(case, n).minimizer, case))
        vals["equispaced"].append(check_lower_bound_residual(Configuration(np.linspace(0, 1, n + 1)), case))
    for seq in vals.values():
        tail = seq[-4:]
        assert all(b >= x - 0.10 * abs(x) for x, b in zip(tail, tail[1:]))
    with pytest.raises(ValueError):
        check_lower_bound_residual(Configuration([0, 1]), case)


def test_convergence_record_fields():
    case = EquilibriumCase("quadratic", 0.25)
    rec = convergence_record(solve(case, 8), case)
    assert rec.case_id == "quadratic" and rec.n == 8
    assert rec.e_n == pytest.approx(2 * (rec.E_phi - rec.E_rho))
    assert rec.exact and rec.lower_gap >= 0 and rec.residual is not None
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        convergence_record(solve(case, 1), case)
