"""Energy and mass balances of the growth chamber.

State, input and disturbance vectors are plain float arrays whose last axis
follows the component order of :class:`ChamberState`, :class:`ControlInput`
and :class:`Disturbance`.  Every function broadcasts over leading axes, which
lets the optimizer push whole batches (and complex-step perturbations)
through the model in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from . import _smooth
from . import plant
from .humidity import saturation_humidity

__all__ = [
    "ChamberState", "ControlInput", "Disturbance", "FluxBreakdown",
    "ModelDomainError", "ModelEvaluationError",
    "STATE_NAMES", "INPUT_NAMES", "DISTURBANCE_NAMES",
    "STATE_LOWER", "STATE_UPPER", "INPUT_LOWER", "INPUT_UPPER", "BINARY_INPUTS",
    "tec_heat_flux", "led_fluxes", "exchange_and_loss_heat", "saturation_humidity",
    "condensation_flux", "humidifier_flux", "co2_exchange_fluxes", "overflow_flux",
    "state_derivative", "step_euler", "box_violation", "input_in_box",
]


class ChamberState(NamedTuple):
    T: float        # air temperature [degC]
    C: float        # CO2 concentration [kg m-3]
    H: float        # absolute humidity [kg m-3]
    W_sto: float    # storage tank water [kg]
    W_med: float    # growing-medium water [kg]
    W_ovf: float    # overflow tank water [kg]
    B: float        # crop dry matter [kg m-2]


class ControlInput(NamedTuple):
    u_T: float      # TEC drive, [-100, 100]
    u_V: float      # ventilator, binary
    u_H: float      # humidifier, binary
    u_W1: float     # storage tank pump, binary
    u_W2: float     # growing medium pump, binary
    u_W3: float     # overflow reclaimer pump, binary
    u_I1: float     # LED channel drives, [0, 100]
    u_I2: float
    u_I3: float
    u_I4: float


class Disturbance(NamedTuple):
    T_out: float    # [degC]
    C_out: float    # [kg m-3]
    H_out: float    # [kg m-3]


STATE_NAMES = ChamberState._fields
INPUT_NAMES = ControlInput._fields
DISTURBANCE_NAMES = Disturbance._fields

STATE_LOWER = np.array([5.0, 1.96e-6, 4.85e-5, 1e-4, 0.3, 0.1, 1e-6])
STATE_UPPER = np.array([40.0, 1.7e-2, 5.1e-2, 0.3, 1.0, 2.0, 0.5])
INPUT_LOWER = np.array([-100.0, 0, 0, 0, 0, 0, 0, 0, 0, 0])
INPUT_UPPER = np.array([100.0, 1, 1, 1, 1, 1, 100, 100, 100, 100])
BINARY_INPUTS = (1, 2, 3, 4, 5)

# Scales of the smoothed clamps (transition width = scale / sharpness).
_HUMIDITY_SCALE = 1e-2      # kg m-3
_LEVEL_SCALE = 1.0          # kg
_INFLOW_SCALE = 1e-4        # kg s-1


class ModelDomainError(ValueError):
    """An input lies outside the domain of a flux law."""


class ModelEvaluationError(ArithmeticError):
    """A flux evaluated to a non-finite value."""

    def __init__(self, flux):
        super().__init__(f"non-finite value in flux '{flux}'")
        self.flux = flux


@dataclass
class FluxBreakdown:
    """Every flux term entering the state derivative."""

    phi_Q_TEC: np.ndarray       # J s-1
    phi_Q_LED: np.ndarray
    phi_Q_ex: np.ndarray
    phi_Q_lo: np.ndarray
    phi_Q_sub: np.ndarray
    phi_C_exch: np.ndarray      # kg s-1
    phi_C_leak: np.ndarray
    phi_C_sub: np.ndarray
    phi_H_exch: np.ndarray
    phi_u_H: np.ndarray
    phi_W_cond: np.ndarray
    phi_H_sub: np.ndarray
    phi_W_ovf1: np.ndarray
    phi_W_ovf2: np.ndarray
    phi_W_sub: np.ndarray
    phi_W_evap: np.ndarray
    I: np.ndarray               # W m-2

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return {name: getattr(self, name) for name in self.names()}


def _check_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ModelDomainError(f"{name}: non-finite input")


# --- heat ------------------------------------------------------------------

def _tec(T, T_out, u_T, p):
    drive = u_T / 100.0
    return (p.k_alpha * p.k_V * drive * T / p.k_Rq
            + (drive * p.k_V) ** 2 / (2.0 * p.k_Rq)
            + p.k_q * (T_out - T))


def tec_heat_flux(T, T_out, u_T, p):
    """Heat delivered by the thermoelectric module [J s-1].

    Peltier transport, Joule heating and back-conduction; a negative drive
    ``u_T`` (percent of the maximum voltage) cools the chamber.
    """
    _check_finite("tec_heat_flux", T, T_out, u_T)
    return _tec(T, T_out, u_T, p)


def _led(u_I, p):
    drive = np.asarray(u_I) / 100.0
    heat = drive @ np.asarray(p.k_Qm)
    light = drive @ (np.asarray(p.eta_LU) * np.asarray(p.k_Im))
    return heat, light


def led_fluxes(u_I, p):
    """LED heat [J s-1] and incident light at the canopy [W m-2].

    ``u_I`` holds the four channel drives in percent, last axis of length 4.
    """
    u_I = np.asarray(u_I, dtype=float)
    if u_I.shape[-1:] != (4,):
        raise ModelDomainError("led_fluxes: expected four channel drives")
    if not np.all(np.isfinite(u_I)) or np.any(u_I < 0.0) or np.any(u_I > 100.0):
        raise ModelDomainError("led_fluxes: channel drive outside [0, 100]")
    return _led(u_I, p)


def exchange_and_loss_heat(T, T_out, u_V, p):
    """Heat carried in by ventilation and conducted through the walls [J s-1]."""
    gradient = T_out - T
    return (p.k_c * p.k_rho * gradient * p.k_uV * u_V,
            p.k_A * p.k_U * gradient)


# --- humidity ----------------------------------------------------------------

def condensation_flux(H, T_c, p, smoothing=None):
    """Water condensing on the chamber surface at temperature `T_c` [kg s-1]; never negative."""
    excess = H - saturation_humidity(T_c, p)
    return _smooth.pos(p.condensation_coefficient * excess,
                       p.condensation_coefficient * _HUMIDITY_SCALE, smoothing)


def humidifier_flux(H, T, u_H, p):
    """Vapour added by the ultrasonic humidifier [kg s-1]."""
    return (saturation_humidity(T, p) - H) * p.k_uH * u_H


# --- CO2 ---------------------------------------------------------------------

def co2_exchange_fluxes(C, C_out, u_V, p):
    """CO2 exchanged by ventilation and by leakage [kg s-1]."""
    gradient = C_out - C
    return gradient * p.k_uV * u_V, gradient * p.k_leak


# --- water tanks -------------------------------------------------------------

def overflow_flux(level, capacity, effective_inflow, smoothing=None):
    """Water spilling over a full tank [kg s-1].

    Zero while ``level <= capacity``; above capacity the whole positive net
    inflow spills, a net outflow spills nothing.
    """
    if np.any(np.real(capacity) <= 0):
        raise ModelDomainError("overflow_flux: capacity must be positive")
    full = _smooth.step(level - capacity, _LEVEL_SCALE, smoothing)
    return (full * _smooth.pos(effective_inflow, _INFLOW_SCALE, smoothing))[()]


# --- assembled model ---------------------------------------------------------

def _evaluate(x, u, d, p, pp, smoothing):
    x = np.asarray(x)
    u = np.asarray(u)
    d = np.asarray(d)
    T, C, H, W_sto, W_med, W_ovf, B = (x[..., i] for i in range(7))
    u_T, u_V, u_H, u_W1, u_W2, u_W3 = (u[..., i] for i in range(6))
    T_out, C_out, H_out = d[..., 0], d[..., 1], d[..., 2]

    phi_Q_TEC = _tec(T, T_out, u_T, p)
    phi_Q_LED, I = _led(u[..., 6:10], p)
    phi_Q_ex, phi_Q_lo = exchange_and_loss_heat(T, T_out, u_V, p)

    phi_C_exch, phi_C_leak = co2_exchange_fluxes(C, C_out, u_V, p)
    phi_C_phot = plant.photosynthesis_flux(B, T, C, I, pp, smoothing)
    phi_C_resp = plant.respiration_flux(B, T, pp)
    phi_C_sub = phi_C_resp - phi_C_phot

    H_sat = saturation_humidity(T, p)
    phi_H_exch = (H_out - H) * p.k_uV * u_V
    phi_u_H = (H_sat - H) * p.k_uH * u_H
    phi_W_cond = condensation_flux(H, 0.5 * (T + T_out), p, smoothing)
    phi_H_sub = pp.k_amed * pp.k_Htrans * plant.canopy_factor(B, pp) * (H_sat - H)
    phi_Q_sub = -p.lambda_vap * phi_H_sub

    dB = plant.biomass_rate(phi_C_phot, phi_C_resp, pp)
    phi_W_sub = plant.water_uptake_flux(phi_H_sub, dB, pp)
    phi_W_evap = p.k_evap * (H_sat - H)

    inflow_sto = p.k_uW * u_W1 + phi_W_cond - phi_u_H
    inflow_med = p.k_uW * u_W2 - phi_W_evap - phi_W_sub
    phi_W_ovf1 = overflow_flux(W_sto, p.k_Wm_sto, inflow_sto, smoothing)
    phi_W_ovf2 = overflow_flux(W_med, p.k_Wm_med, inflow_med, smoothing)

    dx = np.stack(np.broadcast_arrays(
        (phi_Q_ex + phi_Q_lo + phi_Q_TEC + phi_Q_LED + phi_Q_sub) / p.k_Cchm,
        (phi_C_exch + phi_C_leak + phi_C_sub) / p.k_Vchm,
        (phi_H_exch + phi_u_H - phi_W_cond + phi_H_sub) / p.k_Vchm,
        inflow_sto - phi_W_ovf1,
        inflow_med - phi_W_ovf2,
        phi_W_ovf1 + phi_W_ovf2 - p.k_uW * u_W3,
        dB,
    ), axis=-1)
    fluxes = dict(
        phi_Q_TEC=phi_Q_TEC, phi_Q_LED=phi_Q_LED, phi_Q_ex=phi_Q_ex,
        phi_Q_lo=phi_Q_lo, phi_Q_sub=phi_Q_sub, phi_C_exch=phi_C_exch,
        phi_C_leak=phi_C_leak, phi_C_sub=phi_C_sub, phi_H_exch=phi_H_exch,
        phi_u_H=phi_u_H, phi_W_cond=phi_W_cond, phi_H_sub=phi_H_sub,
        phi_W_ovf1=phi_W_ovf1, phi_W_ovf2=phi_W_ovf2, phi_W_sub=phi_W_sub,
        phi_W_evap=phi_W_evap, I=I,
    )
    return dx, fluxes


def _raise_if_nonfinite(dx, fluxes):
    if np.all(np.isfinite(dx)):
        return
    for name, value in fluxes.items():
        if not np.all(np.isfinite(value)):
            raise ModelEvaluationError(name)
    raise ModelEvaluationError(STATE_NAMES[int(np.argmin(np.all(
        np.isfinite(dx.reshape(-1, 7)), axis=0)))])


def state_derivative(x, u, d, p, pp, smoothing=None):
    """Right-hand side dx/dt of the chamber model.

    Parameters
    ----------
    x, u, d : array_like
        State (7), input (10) and disturbance (3), optionally batched.
    p, pp : ModelParams, PlantParams
    smoothing : float, optional
        Sharpness of the softplus replacing the model's max() clamps and
        overflow switches.  ``None`` keeps the exact clamps.

    Returns
    -------
    dxdt : ndarray
    fluxes : FluxBreakdown
    """
    dx, fluxes = _evaluate(x, u, d, p, pp, smoothing)
    _raise_if_nonfinite(dx, fluxes)
    return dx, FluxBreakdown(**fluxes)


def step_euler(x, u, d, dt, p, pp, smoothing=None, check=True):
    """One explicit Euler step x + dt f(x, u, d); the result is not clamped."""
    if np.any(np.real(dt) < 0):
        raise ValueError("step_euler: dt must be non-negative")
    dx, fluxes = _evaluate(x, u, d, p, pp, smoothing)
    if check:
        _raise_if_nonfinite(dx, fluxes)
    return np.asarray(x) + dt * dx


def box_violation(x):
    """Distance of each state component outside the operating box (0 inside)."""
    x = np.asarray(x, dtype=float)
    return np.maximum(STATE_LOWER - x, 0.0) + np.maximum(x - STATE_UPPER, 0.0)


def input_in_box(u, binary=True):
    """True when `u` lies in the actuator set; binary channels must be exactly 0 or 1."""
    u = np.asarray(u, dtype=float)
    ok = np.all((u >= INPUT_LOWER) & (u <= INPUT_UPPER), axis=-1)
    if binary:
        b = u[..., list(BINARY_INPUTS)]
        ok &= np.all((b == 0.0) | (b == 1.0), axis=-1)
    return ok
