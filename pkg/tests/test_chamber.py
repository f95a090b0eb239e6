import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from farmpc import chamber
from farmpc.chamber import (FluxBreakdown, ModelDomainError, ModelEvaluationError,
                            STATE_LOWER, STATE_UPPER, INPUT_LOWER, INPUT_UPPER)
from farmpc.humidity import saturation_humidity

import oracle

HOT_X0 = np.array([38.0, 0.0013, 0.0058, 0.0, 0.0, 0.0, 0.240])


# --- TEC ----------------------------------------------------------------------

def test_tec_zero_and_conduction(p):
    assert chamber.tec_heat_flux(20.0, 20.0, 0.0, p) == 0.0
    assert chamber.tec_heat_flux(20.0, 30.0, 0.0, p) == pytest.approx(p.k_q * 10.0)


def test_tec_half_drive_hand_value(p):
    # 0.8 * 12 * 0.5 * 20 / 1.2 + (0.5 * 12)^2 / (2 * 1.2) = 80 + 15
    assert chamber.tec_heat_flux(20.0, 20.0, 50.0, p) == pytest.approx(95.0, rel=1e-14)


def test_tec_cooling_sign(p):
    assert chamber.tec_heat_flux(25.0, 25.0, -100.0, p) < 0


def test_tec_rejects_nan(p):
    with pytest.raises(ModelDomainError):
        chamber.tec_heat_flux(float("nan"), 20.0, 0.0, p)


# --- LED ----------------------------------------------------------------------

def test_led_examples(p):
    assert chamber.led_fluxes([0, 0, 0, 0], p) == (0.0, 0.0)
    heat, light = chamber.led_fluxes([100, 100, 100, 100], p)
    assert heat == pytest.approx(sum(p.k_Qm))
    assert light == pytest.approx(sum(e * k for e, k in zip(p.eta_LU, p.k_Im)))
    heat, light = chamber.led_fluxes([50, 0, 0, 0], p)
    assert heat == pytest.approx(0.5 * p.k_Qm[0])
    assert light == pytest.approx(0.5 * p.eta_LU[0] * p.k_Im[0])


def test_led_out_of_range(p):
    with pytest.raises(ModelDomainError):
        chamber.led_fluxes([101, 0, 0, 0], p)
    with pytest.raises(ModelDomainError):
        chamber.led_fluxes([-1, 0, 0, 0], p)


@given(st.lists(st.floats(0, 100), min_size=4, max_size=4), st.integers(0, 3), st.floats(0, 100))
def test_led_linear_and_monotone(p, u, ch, v):
    u = np.array(u)
    w = u.copy()
    w[ch] = v
    (h0, i0), (h1, i1) = chamber.led_fluxes(u, p), chamber.led_fluxes(w, p)
    assert (h1 - h0) == pytest.approx(p.k_Qm[ch] * (v - u[ch]) / 100, abs=1e-10)
    assert np.sign(i1 - i0 + 0.0) in (np.sign(v - u[ch]), 0.0)


# --- exchange, humidity, CO2 -----------------------------------------------------

def test_exchange_and_loss(p):
    assert chamber.exchange_and_loss_heat(25.0, 25.0, 1.0, p) == (0.0, 0.0)
    ex, lo = chamber.exchange_and_loss_heat(20.0, 30.0, 0.0, p)
    assert ex == 0.0 and lo == pytest.approx(p.k_A * p.k_U * 10)
    ex, lo = chamber.exchange_and_loss_heat(20.0, 30.0, 1.0, p)
    assert ex == pytest.approx(p.k_c * p.k_rho * p.k_uV * 10)


def test_saturation_monotone(p):
    values = [saturation_humidity(T, p) for T in (10, 20, 30)]
    assert values[0] < values[1] < values[2]


def test_condensation(p):
    hs = saturation_humidity(20.0, p)
    assert chamber.condensation_flux(0.5 * hs, 20.0, p) == 0.0
    assert chamber.condensation_flux(hs, 20.0, p) == 0.0
    expected = p.condensation_coefficient * 0.1 * oracle.h_sat(20.0, p)
    assert chamber.condensation_flux(1.1 * hs, 20.0, p) == pytest.approx(expected, rel=1e-12)


def test_humidifier(p):
    hs = saturation_humidity(20.0, p)
    assert chamber.humidifier_flux(0.01, 20.0, 0.0, p) == 0.0
    assert chamber.humidifier_flux(hs, 20.0, 1.0, p) == 0.0
    assert chamber.humidifier_flux(0.5 * hs, 20.0, 1.0, p) == pytest.approx(p.k_uH * 0.5 * hs)


def test_co2_exchange(p):
    assert chamber.co2_exchange_fluxes(1e-3, 1e-3, 1.0, p) == (0.0, 0.0)
    ex, leak = chamber.co2_exchange_fluxes(1e-3, 1.5e-3, 0.0, p)
    assert ex == 0.0 and leak == pytest.approx(5e-4 * p.k_leak)
    ex2, leak2 = chamber.co2_exchange_fluxes(1e-3, 2e-3, 1.0, p)
    ex1, leak1 = chamber.co2_exchange_fluxes(1e-3, 1.5e-3, 1.0, p)
    assert ex2 == pytest.approx(2 * ex1) and leak2 == pytest.approx(2 * leak1)


# --- overflow -------------------------------------------------------------------

def test_overflow_examples():
    assert chamber.overflow_flux(0.1, 0.3, 0.01) == 0.0
    assert chamber.overflow_flux(0.31, 0.3, 0.01) == 0.01
    assert chamber.overflow_flux(0.31, 0.3, -0.01) == 0.0


def test_overflow_bad_capacity():
    with pytest.raises(ModelDomainError):
        chamber.overflow_flux(0.1, 0.0, 0.01)


@given(level=st.floats(0, 3), cap=st.floats(0.01, 2), inflow=st.floats(-1, 1))
def test_overflow_and_condensation_non_negative(p, level, cap, inflow):
    assert chamber.overflow_flux(level, cap, inflow) >= 0
    assert chamber.overflow_flux(level, cap, inflow, smoothing=1e4) >= 0
    assert chamber.condensation_flux(inflow * 0.05 + 0.02, level * 10, p) >= 0


# --- assembled model --------------------------------------------------------------

def test_hot_start_state_matches_hand_evaluation(p, pp):
    d = np.array([9.0, 7.3e-4, 7e-3])
    for u in (np.zeros(10), np.array([-60, 1, 1, 0, 1, 1, 20, 40, 60, 80.0])):
        dx, flux = chamber.state_derivative(HOT_X0, u, d, p, pp)
        ref, terms = oracle.fluxes(list(HOT_X0), list(u), list(d), p, pp)
        np.testing.assert_allclose(dx, ref, rtol=1e-12, atol=1e-300)
        assert flux.phi_Q_TEC == pytest.approx(terms["tec"], rel=1e-13)
        assert flux.phi_W_cond == pytest.approx(terms["cond"], rel=1e-13, abs=0)
        assert flux.phi_H_sub == pytest.approx(terms["h_sub"], rel=1e-13)


def test_random_states_match_oracle(p, pp, rng):
    for _ in range(200):
        x = rng.uniform(STATE_LOWER, STATE_UPPER)
        u = rng.uniform(INPUT_LOWER, INPUT_UPPER)
        u[1:6] = rng.integers(0, 2, 5)
        d = np.array([rng.uniform(-5, 35), rng.uniform(3e-4, 2e-3), rng.uniform(1e-3, 2e-2)])
        dx, _ = chamber.state_derivative(x, u, d, p, pp)
        ref, _ = oracle.fluxes(list(x), list(u), list(d), p, pp)
        np.testing.assert_allclose(dx, ref, rtol=1e-11, atol=1e-22)


def test_equilibrium_with_outside(p, pp):
    x = np.array([18.0, 8e-4, 8e-3, 0.1, 0.5, 0.5, 0.0])
    d = np.array([18.0, 8e-4, 8e-3])
    dx, _ = chamber.state_derivative(x, np.zeros(10), d, p, pp)
    np.testing.assert_array_equal(dx, np.zeros(7))


def test_zero_biomass_no_crop_fluxes(p, pp):
    x = np.array([22.0, 1e-3, 8e-3, 0.1, 0.5, 0.5, 0.0])
    _, f = chamber.state_derivative(x, np.r_[0, 0, 0, 0, 0, 0, 50, 50, 50, 50.0], [15, 1e-3, 7e-3], p, pp)
    assert f.phi_H_sub == 0.0 and f.phi_C_sub == 0.0


def test_flux_breakdown_fields(p, pp):
    _, f = chamber.state_derivative(HOT_X0, np.zeros(10), [9.0, 7e-4, 7e-3], p, pp)
    assert len(FluxBreakdown.names()) == 17
    assert set(f.as_dict()) == set(FluxBreakdown.names())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_model_evaluation_error_names_flux(p, pp):
    x = HOT_X0.copy()
    x[2] = np.inf
    with pytest.raises(ModelEvaluationError) as err:
        chamber.state_derivative(x, np.zeros(10), [9.0, 7e-4, 7e-3], p, pp)
    assert err.value.flux.startswith("phi_")


def test_step_euler_fixed_points(p, pp):
    x = np.array([18.0, 8e-4, 8e-3, 0.1, 0.5, 0.5, 0.0])
    d = np.array([18.0, 8e-4, 8e-3])
    np.testing.assert_array_equal(chamber.step_euler(x, np.zeros(10), d, 30.0, p, pp), x)
    np.testing.assert_array_equal(chamber.step_euler(HOT_X0, np.zeros(10), d, 0.0, p, pp), HOT_X0)


def test_step_euler_is_unclamped(p, pp):
    x = np.array([38.0, 1e-3, 8e-3, 0.1, 0.5, 0.5, 0.1])
    x1 = chamber.step_euler(x, np.r_[100, 0, 0, 0, 0, 0, 100, 100, 100, 100.0], [40, 1e-3, 8e-3], 600.0, p, pp)
    assert x1[0] > 40


def test_batched_evaluation_matches_single(p, pp, rng):
    X = rng.uniform(STATE_LOWER, STATE_UPPER, size=(8, 7))
    U = rng.uniform(INPUT_LOWER, INPUT_UPPER, size=(8, 10))
    d = np.array([12.0, 8e-4, 7e-3])
    batch = chamber.step_euler(X, U, d, 30.0, p, pp)
    for k in range(8):
        np.testing.assert_allclose(batch[k], chamber.step_euler(X[k], U[k], d, 30.0, p, pp), rtol=1e-15)


def _water_residual(x, x1, u, f, dt, p):
    sums = (x1[3] + x1[4] + x1[5]) - (x[3] + x[4] + x[5])
    net = dt * (p.k_uW * (u[3] + u[4]) - p.k_uW * u[5] - f.phi_u_H - f.phi_W_evap
                - f.phi_W_sub + f.phi_W_cond)
    return abs(sums - net)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_water_bookkeeping(p, pp, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(STATE_LOWER, STATE_UPPER)
    x[3] = r.choice([r.uniform(0, 0.25), r.uniform(0.25, 0.3)])
    x[4] = r.choice([r.uniform(0.3, 0.9), r.uniform(0.9, 1.0)])
    u = r.uniform(INPUT_LOWER, INPUT_UPPER)
    u[1:6] = r.integers(0, 2, 5)
    d = np.array([r.uniform(0, 35), 1e-3, r.uniform(1e-3, 2e-2)])
    _, f = chamber.state_derivative(x, u, d, p, pp)
    x1 = chamber.step_euler(x, u, d, 30.0, p, pp)
    scale = max(abs(x1[3] + x1[4] + x1[5] - x[3] - x[4] - x[5]), 1e-12)
    assert _water_residual(x, x1, u, f, 30.0, p) <= 1e-12 * max(scale, 1.0)


def test_smoothed_model_close_to_exact(p, pp, rng):
    # away from the overflow thresholds the smoothed clamps are indistinguishable
    d = np.array([12.0, 8e-4, 7e-3])
    for _ in range(200):
        x = rng.uniform(STATE_LOWER, STATE_UPPER)
        if abs(x[3] - p.k_Wm_sto) < 1e-2 or abs(x[4] - p.k_Wm_med) < 1e-2:
            continue
        u = rng.uniform(INPUT_LOWER, INPUT_UPPER)
        exact, _ = chamber.state_derivative(x, u, d, p, pp)
        smooth, _ = chamber.state_derivative(x, u, d, p, pp, smoothing=1e4)
        width = STATE_UPPER - STATE_LOWER
        assert np.all(np.abs(exact - smooth) * 30.0 <= 1e-3 * width)


def test_step_jacobian_central_differences(p, pp, rng):
    # complex-step derivative of the smoothed step against central differences;
    # the tolerance floor is the rounding noise of the difference quotient
    d = np.array([12.0, 8e-4, 7e-3])
    eps = np.finfo(float).eps

    def f(v):
        return chamber.step_euler(v[..., :7], v[..., 7:], d, 30.0, p, pp, smoothing=1e4, check=False)

    for _ in range(20):
        x = rng.uniform(STATE_LOWER, STATE_UPPER)
        u = rng.uniform(INPUT_LOWER, INPUT_UPPER)
        z = np.r_[x, u]
        for j in range(17):
            e = np.zeros(17)
            e[j] = 1.0
            cs = f(z + 1e-30j * e).imag / 1e-30
            h = 1e-6 * max(abs(z[j]), 1e-3)
            hi, lo = f(z + h * e), f(z - h * e)
            fd = (hi - lo) / (2 * h)
            floor = 1e3 * eps * np.maximum(np.abs(hi), np.abs(lo)) / h
            assert np.all(np.abs(cs - fd) <= 1e-4 * np.abs(cs) + floor), (j, cs, fd)


def test_box_helpers():
    assert np.all(chamber.box_violation(0.5 * (STATE_LOWER + STATE_UPPER)) == 0)
    v = chamber.box_violation(HOT_X0)
    np.testing.assert_allclose(v, [0, 0, 0, 1e-4, 0.3, 0.1, 0])
    assert chamber.input_in_box(np.r_[0, 1, 0, 1, 0, 1, 0, 0, 0, 100.0])
    assert not chamber.input_in_box(np.r_[0, 0.5, 0, 1, 0, 1, 0, 0, 0, 100.0])
    assert chamber.input_in_box(np.r_[0, 0.5, 0, 1, 0, 1, 0, 0, 0, 100.0], binary=False)
