import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemrelax.eos import (DEFAULT_EOS, AffineClampMap, ConservedState, EosModel, LogisticMap, PrimitiveState,
                          alpha_eq, alpha_eq_derivative, alpha_map_from_dict, alpha_map_to_dict, check_conserved,
                          cons_from_prim, equilibrium_mixture_density, error_transport_coefficients, gas_density,
                          invert_equilibrium_density, jacobian_prim_to_cons, mixture_density, prim_from_cons,
                          sound_speeds, validate_subcharacteristic)
from hemrelax.errors import DomainError, ModelError, StateError

from oracles import bisect, fd_jacobian, random_prim_states, rho_eq_default

WIDE = EosModel(p_lo=0.01, p_hi=20.0)

pressures = st.floats(0.5, 8.0)
voids = st.floats(0.02, 0.98)


# --- model construction ----------------------------------------------------


@pytest.mark.parametrize("kw", [{"R": 0.0}, {"T0": -1.0}, {"rho_l": 0.0}, {"p_lo": 3.0, "p_hi": 2.0}])
def test_model_rejects_bad_constants(kw):
    with pytest.raises(DomainError):
        EosModel(**kw)


def test_model_rejects_bounds_outside_unit_interval():
    with pytest.raises(DomainError):
        EosModel(alpha_eq=AffineClampMap(alpha_min=0.0))


def test_model_dict_round_trip():
    eos = EosModel(R=2.0, rho_l=12.0, alpha_eq=LogisticMap(scale=4.0))
    assert EosModel.from_dict(eos.to_dict()) == eos
    assert alpha_map_from_dict(alpha_map_to_dict(eos.alpha_eq)) == eos.alpha_eq


def test_unknown_alpha_map_kind():
    with pytest.raises(DomainError):
        alpha_map_from_dict({"kind": "cubic"})


# --- closures ----------------------------------------------------------------


@pytest.mark.parametrize("p,R,T0,expected", [(2.0, 1.0, 1.0, 2.0), (1.0, 1.0, 1.0, 1.0), (3.5, 2.0, 0.5, 3.5)])
def test_gas_density_values(p, R, T0, expected):
    assert gas_density(p, EosModel(R=R, T0=T0)) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("p", [0.0, -1.0])
def test_gas_density_rejects_nonpositive(p):
    with pytest.raises(DomainError):
        gas_density(p)


def test_alpha_eq_default_values():
    assert alpha_eq(2.0) == pytest.approx(0.4, abs=1e-15)
    # outside the default operating range, so evaluated on a widened box
    assert alpha_eq(0.02, WIDE) == pytest.approx(0.499, abs=1e-15)
    assert alpha_eq(20.0, WIDE) == pytest.approx(0.01, abs=1e-15)


@pytest.mark.parametrize("p", [0.49, 8.01])
def test_alpha_eq_out_of_range(p):
    with pytest.raises(DomainError):
        alpha_eq(p)


def test_alpha_eq_derivative_and_clamp():
    assert alpha_eq_derivative(2.0) == -0.05
    assert alpha_eq_derivative(20.0, WIDE) == 0.0


def test_logistic_map_is_smooth_and_decreasing():
    m = LogisticMap()
    p = np.linspace(0.5, 8, 200)
    assert np.all(np.diff(m(p)) < 0)
    h = 1e-5
    fd = (m(p + h) - m(p - h)) / (2 * h)
    assert np.allclose(m.derivative(p), fd, rtol=1e-8, atol=1e-12)
    fd2 = (m.derivative(p + h) - m.derivative(p - h)) / (2 * h)
    assert np.allclose(m.second_derivative(p), fd2, rtol=1e-5, atol=1e-12)
    assert m(0.0) == pytest.approx(0.5, abs=1e-15)
    assert m.derivative(0.0) == pytest.approx(-0.049, abs=1e-15)


def test_mixture_density_values():
    assert mixture_density(2.0, 0.4) == pytest.approx(6.8, rel=1e-15)
    # equal densities: rho_g = rho_l makes the mixture density independent of alpha
    for a in (0.1, 0.5, 0.9):
        assert mixture_density(10.0, a) == pytest.approx(10.0, rel=1e-15)
    with pytest.raises(DomainError):
        mixture_density(2.0, 1.0)


def test_equilibrium_density_values_and_monotone():
    assert equilibrium_mixture_density(2.0) == pytest.approx(6.8, rel=1e-15)
    assert equilibrium_mixture_density(2.1) > equilibrium_mixture_density(2.0)
    assert np.isfinite(equilibrium_mixture_density(DEFAULT_EOS.p_lo))
    p = np.linspace(0.5, 8, 500)
    assert np.all(np.diff(equilibrium_mixture_density(p)) > 0)


# --- inversion ------------------------------------------------------------------


def test_invert_reference_against_bisection():
    oracle = bisect(lambda p: rho_eq_default(p) - 6.8, 0.5, 8.0)
    assert abs(oracle - 2.0) < 1e-10
    assert invert_equilibrium_density(6.8) == pytest.approx(oracle, abs=1e-10)


def test_invert_boundary_fixed_points():
    lo = equilibrium_mixture_density(DEFAULT_EOS.p_lo)
    hi = equilibrium_mixture_density(DEFAULT_EOS.p_hi)
    assert invert_equilibrium_density(lo) == pytest.approx(0.5, abs=1e-10)
    assert invert_equilibrium_density(hi) == pytest.approx(8.0, abs=1e-10)


def test_invert_random_round_trip():
    p = np.random.default_rng(1).uniform(0.5, 8.0, 100)
    rho = equilibrium_mixture_density(p)
    assert np.max(np.abs(invert_equilibrium_density(rho) - p)) < 1e-10


def test_invert_out_of_range():
    with pytest.raises(DomainError):
        invert_equilibrium_density(100.0)


def test_invert_warm_start():
    p = np.linspace(1, 3, 7)
    rho = equilibrium_mixture_density(p)
    assert np.allclose(invert_equilibrium_density(rho, p_guess=p + 0.3), p, atol=1e-10)


@given(pressures)
def test_invert_property(p):
    rho = equilibrium_mixture_density(p)
    assert abs(invert_equilibrium_density(rho) - p) <= 1e-10
    assert abs(equilibrium_mixture_density(invert_equilibrium_density(rho)) - rho) <= 1e-12 * rho


# --- state transforms -------------------------------------------------------------


def test_cons_from_prim_reference():
    U = cons_from_prim(PrimitiveState(2.0, 1.0, 0.4))
    assert isinstance(U, ConservedState)
    assert np.allclose(U, (6.8, 6.8, 0.8), rtol=1e-15)
    assert cons_from_prim((2.0, 0.0, 0.4)).m == 0.0


def test_prim_from_cons_reference():
    V = prim_from_cons((6.8, 6.8, 0.8))
    assert np.allclose(V, (2.0, 1.0, 0.4), rtol=1e-14)
    assert prim_from_cons((6.8, 0.0, 0.8)).u == 0.0


@pytest.mark.parametrize("U", [(6.8, 1.0, 0.0), (6.8, 1.0, -0.1), (12.0, 0.0, 1.0), (0.0, 0.0, 0.5)])
def test_prim_from_cons_rejects_invalid(U):
    with pytest.raises(StateError):
        prim_from_cons(U)


def test_check_conserved_reports_cell():
    U = np.array([[6.8, 6.8, 12.0], [0.0, 0.0, 0.0], [0.8, 0.8, 0.8]])
    with pytest.raises(StateError) as exc:
        check_conserved(U, time=0.25)
    assert exc.value.cell == 2 and exc.value.time == 0.25


@settings(max_examples=200)
@given(pressures, st.floats(-2, 2), voids)
def test_round_trip_property(p, u, a):
    V = prim_from_cons(cons_from_prim((p, u, a)))
    assert V.p == pytest.approx(p, rel=1e-12)
    assert V.u == pytest.approx(u, rel=1e-12, abs=1e-14)
    assert V.alpha == pytest.approx(a, rel=1e-12)


def test_jacobian_reference_rows():
    J = jacobian_prim_to_cons((2.0, 1.0, 0.4))
    expected = np.array([[0.4, 0, -8], [0.4, 6.8, -8], [0.4, 0, 2]])
    assert np.allclose(J, expected, rtol=1e-14, atol=1e-14)
    J0 = jacobian_prim_to_cons((2.0, 0.0, 0.4))
    assert np.allclose(J0[1], (0.0, 6.8, 0.0), atol=1e-14)


def test_jacobian_finite_difference_and_norm_equivalence():
    p, u, a = random_prim_states(200, seed=3)
    for V in zip(p, u, a):
        J = jacobian_prim_to_cons(V)
        Jfd = fd_jacobian(lambda v: np.array(cons_from_prim(v)), np.array(V))
        assert np.max(np.abs(J - Jfd)) <= 1e-6 * np.max(np.abs(J))
        s = np.linalg.svd(J, compute_uv=False)
        assert np.all(np.isfinite(s)) and s.min() > 0
        # C1 |J d| <= |d| <= C2 |J d| with C1 = 1/s_max, C2 = 1/s_min
        d = np.random.default_rng(int(1e6 * V[0]) % 2**32).normal(size=3)
        Jd = np.linalg.norm(J @ d)
        assert Jd / s[0] <= np.linalg.norm(d) * (1 + 1e-12)
        assert np.linalg.norm(d) <= Jd / s[-1] * (1 + 1e-12)


# --- sound speeds ---------------------------------------------------------------------


def test_sound_speed_reference():
    af2, ae2 = sound_speeds(2.0, 0.4)
    assert abs(af2 - 2.5) <= 1e-12
    assert abs(ae2 - 1.25) <= 1e-12


def test_frozen_speed_limit_near_pure_gas():
    af2, _ = sound_speeds(2.0, 1 - 1e-9)
    assert af2 == pytest.approx(DEFAULT_EOS.RT0, rel=1e-8)
    with pytest.raises(DomainError):
        sound_speeds(2.0, 1.0)


def test_sound_speed_model_error():
    # steep increasing map makes d rho_eq/dp negative
    eos = EosModel(alpha_eq=AffineClampMap(c0=0.1, c1=0.1))
    with pytest.raises(ModelError):
        sound_speeds(2.0, 0.3, eos)


def test_subcharacteristic_random_sweep():
    p = np.random.default_rng(5).uniform(0.5, 8, 100)
    af2, ae2 = sound_speeds(p, alpha_eq(p))
    assert np.all(af2 - ae2 > 0)


def test_validate_subcharacteristic_default():
    rep = validate_subcharacteristic()
    assert rep.passed and rep.min_margin > 0 and not rep.warnings
    at2 = validate_subcharacteristic(p_grid=[2.0])
    assert at2.min_margin == pytest.approx(1.25, abs=1e-12)


def test_validate_subcharacteristic_increasing_map_fails():
    eos = EosModel(alpha_eq=AffineClampMap(c0=0.2, c1=0.05))
    assert not validate_subcharacteristic(eos).passed


def test_validate_subcharacteristic_constant_map_borderline():
    eos = EosModel(alpha_eq=AffineClampMap(c0=0.4, c1=0.0))
    rep = validate_subcharacteristic(eos)
    assert not rep.passed
    assert rep.min_margin == pytest.approx(0.0, abs=1e-12)


def test_validate_subcharacteristic_warns_on_equal_density():
    eos = EosModel(p_lo=0.5, p_hi=12.0, alpha_eq=AffineClampMap(c0=0.5, c1=-0.03))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        rep = validate_subcharacteristic(eos)
    assert rep.warnings and any("equal-density" in str(w.message) for w in rec)


# --- error transport coefficients ---------------------------------------------------------


def test_transport_coefficients_reference():
    A, B, B1 = error_transport_coefficients(2.0, 0.4)
    assert A == pytest.approx(0.7, abs=1e-14)
    assert B1 == pytest.approx(-2.0, abs=1e-14)
    assert B == pytest.approx(0.6, abs=1e-14)
    assert (B - 1) / 2.0 == pytest.approx(-0.2, abs=1e-14)


def test_transport_coefficients_equal_density():
    eos = EosModel(p_hi=12.0)
    _, B, B1 = error_transport_coefficients(10.0, 0.4, eos)
    assert B1 == 0.0 and B == 0.0
    assert (B - 1) / 10.0 == pytest.approx(-0.1)


def test_transport_coefficient_negativity_sweep():
    p, _, a = random_prim_states(1000, seed=11)
    _, B, _ = error_transport_coefficients(p, a)
    c0 = -np.max((B - 1) / p)
    assert c0 > 0
