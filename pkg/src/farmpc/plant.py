"""Lettuce crop fluxes: photosynthesis, respiration, transpiration and growth.

Whole-chamber fluxes are in kg s-1 (they carry the growing-medium area
``k_amed``); biomass ``B`` is dry matter per unit area, kg m-2.
"""

import numpy as np

from . import _smooth
from .humidity import saturation_humidity

__all__ = [
    "canopy_factor",
    "temperature_response",
    "photosynthesis_flux",
    "respiration_flux",
    "transpiration_flux",
    "water_uptake_flux",
    "biomass_rate",
    "net_co2_flux",
]

# Scale of g(T) (C - Gamma) [kg m-2 s-1] used by the smoothed clamp.
_ASSIMILATION_SCALE = 1e-6


def canopy_factor(B, pp):
    """Fraction of light intercepted by the canopy, 1 - exp(-k_LAI B)."""
    return -np.expm1(-pp.k_LAI * B)


def temperature_response(T, pp):
    """Quadratic temperature response -k_p1 T^2 + k_p2 T - k_p3 [m s-1]."""
    return -pp.k_p1 * T * T + pp.k_p2 * T - pp.k_p3


def photosynthesis_flux(B, T, C, I, pp, smoothing=None):
    """Gross CO2 assimilation of the crop [kg s-1].

    Rectangular-hyperbola response to light ``I`` [W m-2] and CO2 ``C``
    [kg m-3].  Where the temperature/CO2 factor g(T)(C - Gamma) is not
    positive the crop does not assimilate and the flux is 0.
    """
    light = pp.k_Ip * I
    carbon = _smooth.pos(temperature_response(T, pp) * (C - pp.k_Gamma),
                         _ASSIMILATION_SCALE, smoothing)
    den = light + carbon
    safe = np.where(np.real(den) > 0, den, 1.0)
    rate = np.where(np.real(den) > 0, light * carbon / safe, 0.0)
    return (pp.k_amed * canopy_factor(B, pp) * rate)[()]


def respiration_flux(B, T, pp):
    """Maintenance respiration [kg CO2 s-1], doubling per 10 degC (reference 25 degC)."""
    return pp.k_amed * pp.k_resp * B * np.power(2.0, 0.1 * T - 2.5)


def transpiration_flux(B, T, H, pp, p):
    """Canopy transpiration into the air [kg s-1]; negative when the air is supersaturated."""
    return pp.k_amed * pp.k_Htrans * canopy_factor(B, pp) * (saturation_humidity(T, p) - H)


def water_uptake_flux(phi_H_sub, dB_dt, pp):
    """Water drawn from the growing medium by the crop [kg s-1]."""
    return phi_H_sub + pp.k_amed * (1.0 - pp.k_fwdw) * dB_dt


def biomass_rate(phi_C_phot, phi_C_resp, pp):
    """Dry-matter growth rate per unit area [kg m-2 s-1]."""
    return (pp.k_alphabeta * phi_C_phot - pp.k_Bresp * phi_C_resp) / pp.k_amed


def net_co2_flux(B, T, C, I, pp, smoothing=None):
    """CO2 released into the chamber air by the crop [kg s-1]: respiration minus assimilation."""
    return respiration_flux(B, T, pp) - photosynthesis_flux(B, T, C, I, pp, smoothing)
