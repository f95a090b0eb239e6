"""Clamp and switch primitives, exact or softplus-smoothed.

All helpers are analytic in their smoothed form so complex-step derivatives
pass through them; branch decisions look at the real part only.
"""

import numpy as np


def softplus(s):
    sign = np.where(np.real(s) >= 0, 1.0, -1.0)
    return np.where(np.real(s) > 0, s, 0.0) + np.log1p(np.exp(-sign * s))


def sigmoid(s):
    sign = np.where(np.real(s) >= 0, 1.0, -1.0)
    e = np.exp(-sign * s)
    return np.where(sign > 0, 1.0 / (1.0 + e), e / (1.0 + e))


def pos(z, scale=1.0, sharpness=None):
    """max(z, 0); smoothed as scale/k * softplus(k z / scale) when sharpness k is set."""
    if sharpness is None:
        return np.where(np.real(z) > 0, z, 0.0)[()]
    return (scale / sharpness * softplus(sharpness * z / scale))[()]


def step(z, scale=1.0, sharpness=None):
    """Indicator of z > 0; smoothed as a logistic of width scale/k."""
    if sharpness is None:
        return np.where(np.real(z) > 0, 1.0, 0.0)[()]
    return sigmoid(sharpness * z / scale)[()]
