"""Circadian reference trajectories for light, temperature and CO2."""

from dataclasses import dataclass

import numpy as np

DAY = 86400.0


@dataclass(frozen=True)
class ReferenceProfile:
    """Offsets and amplitudes of the daily cosine references.

    Every reference has the form ``mean - amplitude * cos(2 pi t / period)``
    so all of them bottom out at midnight and peak at noon together.
    """

    T_mean: float = 20.0
    T_amplitude: float = 3.0
    C_mean: float = 9.05e-4
    C_amplitude: float = 1.8e-4
    light_mean: float = 50.0
    light_amplitude: float = 50.0
    period: float = DAY


DEFAULT_PROFILE = ReferenceProfile()


@dataclass(frozen=True)
class ReferenceSample:
    T_ref: float
    C_ref: float
    u_ref: np.ndarray   # 10 inputs; zero except the four LED channels

    def state_ref(self):
        """7-vector with T and C filled in; other entries are NaN (not tracked)."""
        x = np.full(7, np.nan)
        x[0], x[1] = self.T_ref, self.C_ref
        return x


def reference_at(t, profile=DEFAULT_PROFILE):
    """References at `t` seconds since midnight."""
    if t < 0:
        raise ValueError("reference time must be non-negative")
    c = np.cos(2.0 * np.pi * (t % profile.period) / profile.period)
    u_ref = np.zeros(10)
    u_ref[6:10] = profile.light_mean - profile.light_amplitude * c
    return ReferenceSample(
        T_ref=profile.T_mean - profile.T_amplitude * c,
        C_ref=profile.C_mean - profile.C_amplitude * c,
        u_ref=u_ref,
    )


def reference_window(t_k, N, dt, profile=DEFAULT_PROFILE):
    """The N + 1 reference samples at t_k, t_k + dt, ..., t_k + N dt."""
    if N < 1:
        raise ValueError("horizon N must be at least 1")
    return [reference_at(t_k + i * dt, profile) for i in range(N + 1)]
