import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszgas import potentials
from rieszgas.oracle import finite_diff
from rieszgas.potentials import (
    REGULAR_PARTS,
    ConfiningPotential,
    InteractionPotential,
    RenormalizedPotential,
    confining_from_spec,
    eval_U,
    eval_V,
    eval_Va,
    eval_Vn,
    potential_from_spec,
    riesz,
    truncate_tails,
)
from rieszgas.continuum import EquilibriumCase


# --- V_a ------------------------------------------------------------------

@pytest.mark.parametrize("a, x, expected", [(0.0, 1.0, 0.0), (0.5, 0.25, 2.0), (0.25, 16.0, 0.5)])
def test_eval_Va_examples(a, x, expected):
    assert eval_Va(a, x) == pytest.approx(expected, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize("a", [0.0, 0.3])
def test_eval_Va_is_infinite_at_origin(a):
    assert eval_Va(a, 0.0) == math.inf


@pytest.mark.parametrize("a", [-0.1, 1.0, 1.5])
def test_exponent_range_is_enforced(a):
    with pytest.raises(ValueError):
        InteractionPotential(a)


# --- V and derivatives ------------------------------------------------------

def test_eval_V_derivative_examples():
    assert eval_V(riesz(0.5), 0.25, 1) == pytest.approx(-4.0, rel=1e-15)
    assert eval_V(riesz(0.0), 2.0, 2) == pytest.approx(0.25, rel=1e-15)


def test_derivative_at_origin_is_an_error():
    with pytest.raises(ValueError):
        eval_V(riesz(0.5), 0.0, 1)
    with pytest.raises(ValueError):
        eval_V(riesz(0.5), np.array([1.0, 0.0]), 2)
    with pytest.raises(ValueError):
        eval_V(riesz(0.5), 1.0, 3)


def test_plasticity_kernel_value_matches_high_precision():
    V = riesz(0.0, "plasticity")
    mpmath.mp.dps = 40
    for x in (1.0, 0.003, 0.5, 7.0, 40.0):
        xm = mpmath.mpf(x)
        ref = xm * mpmath.coth(xm) - mpmath.log(2 * mpmath.sinh(xm))
        assert eval_V(V, x) == pytest.approx(float(ref), rel=1e-13, abs=1e-15)


def test_tanhlog_kernel_value_matches_high_precision():
    V = riesz(0.0, "tanhlog")
    mpmath.mp.dps = 40
    for x in (1.0, 0.004, 0.3, 5.0, 30.0):
        ref = -mpmath.log(mpmath.tanh(mpmath.mpf(x)))
        assert eval_V(V, x) == pytest.approx(float(ref), rel=1e-13, abs=1e-16)


@pytest.mark.parametrize("reg", sorted(REGULAR_PARTS))
@pytest.mark.parametrize("a", [0.0, 0.25, 0.5, 0.75])
def test_evenness_is_exact(reg, a, rng):
    V = riesz(a, reg)
    x = rng.uniform(1e-3, 20.0, size=1000)
    np.testing.assert_array_equal(V(x), V(-x))


CONVEX_CASES = [(a, "none") for a in (0.0, 0.25, 0.5, 0.75)] + [
    (0.0, "plasticity"),
    (0.0, "tanhlog"),
]


@pytest.mark.parametrize("a, reg", CONVEX_CASES)
def test_convexity_on_log_grid(a, reg):
    # The built-in regular parts are logarithmic kernels, so they pair with a = 0.
    V = riesz(a, reg)
    x = np.logspace(-4, 1, 2000)
    v = np.asarray(V(x))
    # second divided differences on a non-uniform grid
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    d2 = 2 * (h1 * v[2:] - (h1 + h2) * v[1:-1] + h2 * v[:-2]) / (h1 * h2 * (h1 + h2))
    assert np.min(d2) >= -1e-10 * np.max(np.abs(d2))
    assert np.all(np.asarray(V(x, 2)) >= 0.0)


@pytest.mark.parametrize("reg", sorted(REGULAR_PARTS))
@pytest.mark.parametrize("a", [0.0, 0.5])
def test_derivatives_match_finite_differences(reg, a):
    V = riesz(a, reg)
    for x in (0.004, 0.009, 0.011, 0.3, 1.0, 3.0, 15.0):
        h = 1e-3 * x
        d1 = finite_diff(lambda t: V(t), x, 1, h)
        d2 = finite_diff(lambda t: V(t, 1), x, 1, h)
        assert V(x, 1) == pytest.approx(d1, rel=1e-6, abs=1e-12)
        assert V(x, 2) == pytest.approx(d2, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("name", ["plasticity", "tanhlog"])
def test_regular_part_is_smooth_across_series_cut(name):
    k = REGULAR_PARTS[name]
    for order in (0, 1, 2):
        cut = potentials._SERIES_CUT
        below = k(np.nextafter(cut, 0), order)
        above = k(cut, order)
        assert below == pytest.approx(above, rel=1e-12, abs=1e-15)


def test_regular_part_large_arguments_do_not_overflow():
    for name in ("plasticity", "tanhlog"):
        k = REGULAR_PARTS[name]
        vals = np.array([k(800.0, o) for o in (0, 1, 2)])
        assert np.all(np.isfinite(vals))


# --- V_n --------------------------------------------------------------------

def test_eval_Vn_examples():
    assert eval_Vn(RenormalizedPotential(riesz(0.5), 4), 0.0) == pytest.approx(3.0, rel=1e-15)
    assert eval_Vn(RenormalizedPotential(riesz(0.0), 8), 0.0) == pytest.approx(math.log(8) + 1, rel=1e-15)
    assert eval_Vn(RenormalizedPotential(riesz(0.5), 4), 0.5) == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("a", [0.0, 0.25, 0.5, 0.75])
@pytest.mark.parametrize("n", [2, 7, 64, 1024])
def test_renormalised_potential_properties(a, n):
    V = riesz(a)
    Vn = RenormalizedPotential(V, n)
    r = np.concatenate([np.linspace(0, 2.0 / n, 401), np.linspace(2.0 / n, 5.0, 400)])
    vn = np.asarray(Vn(r))
    assert np.all(np.diff(vn) <= 1e-12 * np.abs(vn[:-1]))
    far = r > 1.0 / n
    np.testing.assert_array_equal(vn[far], np.asarray(V(r[far])))
    np.testing.assert_array_equal(Vn(-r), vn)
    assert np.all(np.isfinite(vn))


def test_renormalised_potential_needs_positive_n():
    with pytest.raises(ValueError):
        RenormalizedPotential(riesz(0.5), 0)


# --- U ----------------------------------------------------------------------

def test_eval_U_examples():
    U2 = EquilibriumCase("quadratic", 0.0).U
    assert eval_U(U2, 0.5) == 0.0
    assert eval_U(U2, 1.0) == pytest.approx(1.0, rel=1e-15)
    U1 = EquilibriumCase("box", 0.0).U
    assert eval_U(U1, 1.5) == math.inf
    assert eval_U(U1, 0.5) == 0.0


@pytest.mark.parametrize(
    "coeffs, domain",
    [
        ((1.0, 0.0, 1.0), (-math.inf, math.inf)),  # min is 1, not 0
        ((0.0, 0.0, -1.0), (-1.0, 1.0)),  # concave
        ((0.0, 1.0), (-math.inf, 0.0)),  # decreases to -inf
        ((0.0,), (1.0, 0.0)),  # empty domain
    ],
)
def test_confining_potential_validation(coeffs, domain):
    with pytest.raises(ValueError):
        ConfiningPotential(coeffs, domain)


def test_confining_potential_accepts_zero_on_the_line():
    U = ConfiningPotential((0.0,), (-math.inf, math.inf))
    assert U(1e6) == 0.0


def test_confining_potential_accepts_linear_on_half_line():
    U = ConfiningPotential((0.0, 1.0), (0.0, math.inf))
    assert U(2.0) == 2.0
    assert U(-1.0) == math.inf


@given(st.floats(-3, 3), st.floats(0.01, 2.0))
@settings(max_examples=50, deadline=None)
def test_cell_averages_exact_for_quadratic(lo, width):
    U = ConfiningPotential((0.25, -1.0, 1.0))
    hi = lo + width
    exact = ((hi - 0.5) ** 3 - (lo - 0.5) ** 3) / (3 * width)
    assert U.cell_averages(np.array([lo]), np.array([hi]))[0] == pytest.approx(exact, rel=1e-13, abs=1e-15)


def test_potential_from_spec_round_trip():
    V, U = potential_from_spec({"a": 0.5, "reg": "none", "U": {"coeffs": [1.0, -4.0, 4.0], "domain": [None, None]}})
    assert V.a == 0.5 and V.is_pure
    assert U(0.5) == 0.0 and U(1.0) == 1.0
    U1 = confining_from_spec({"coeffs": [0.0], "domain": [0, 1]})
    assert U1.domain == (0.0, 1.0)
    with pytest.raises(ValueError):
        potential_from_spec({"a": 0.5, "reg": "bogus"})


# --- tail truncation ----------------------------------------------------------

def test_truncate_tails_examples():
    Vt = truncate_tails(riesz(0.5), 10.0)
    assert Vt(5.0) == pytest.approx(5.0**-0.5, rel=1e-14)
    assert Vt(100.0) == Vt(50.0)


def test_truncate_tails_convex_and_constant():
    Vt = truncate_tails(riesz(0.0), 4.0)
    x = np.linspace(0.01, 100.0, 20001)
    v = np.asarray(Vt(x))
    d2 = v[2:] - 2 * v[1:-1] + v[:-2]
    assert np.min(d2) >= -1e-12
    assert np.all(np.asarray(Vt(x, 2)) >= -1e-12)
    assert np.all(np.diff(v) <= 1e-15)
    np.testing.assert_array_equal(Vt(-x), v)
    assert Vt(5.0, 1) == pytest.approx(0.0, abs=1e-15)


def test_truncate_tails_derivatives_consistent():
    Vt = truncate_tails(riesz(0.5, "plasticity"), 2.0)
    for x in (1.0, 2.2, 2.5, 2.9):
        assert Vt(x, 1) == pytest.approx(finite_diff(lambda t: Vt(t), x, 1, 1e-3), rel=1e-7, abs=1e-12)
        assert Vt(x, 2) == pytest.approx(finite_diff(lambda t: Vt(t, 1), x, 1, 1e-3), rel=1e-7, abs=1e-12)


def test_truncate_tails_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        truncate_tails(riesz(0.5), 0.0)
