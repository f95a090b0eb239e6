"""Saturation vapour density from the Magnus-Tetens vapour-pressure law."""

import numpy as np

# Magnus-Tetens coefficients (vapour pressure in kPa, temperature in degC)
MAGNUS_A_KPA = 0.61094
MAGNUS_B = 17.625
MAGNUS_C = 243.03


def saturation_humidity(T_ref, p):
    """Saturated absolute humidity [kg m-3] at temperature `T_ref` [degC].

    The Magnus-Tetens pressure (kPa) is converted to Pa and divided by the
    ideal-gas factor R (T + 273) / M_w, so the result is a vapour density.
    Works elementwise on arrays, including complex ones.
    """
    e_sat = 1000.0 * MAGNUS_A_KPA * np.exp(MAGNUS_B * T_ref / (T_ref + MAGNUS_C))
    return p.k_mw / (p.k_Rg * (T_ref + 273.0)) * e_sat
