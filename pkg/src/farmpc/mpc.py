"""Receding-horizon tracking controller with relaxed binary actuators.

The optimal control problem is transcribed by single shooting: the decision
vector holds the N input vectors followed by the shared relaxation slack
``eps``, and the predicted states come from rolling :func:`step_euler`
forward.  Every term of the objective is a weighted square, so the problem is
a bounded nonlinear least-squares problem and is handed to
:func:`farmpc.sqp.solve_box_least_squares`.  Jacobians are exact up to
rounding: they are obtained by complex-step differentiation of the
(softplus-smoothed) rollout, one batched rollout per Jacobian.

Binary actuators satisfy ``nu = nu^2 + eps``.  The solver enforces these
equalities through a quadratic penalty whose weight is increased along a
continuation schedule, which drives every relaxed binary to 0 or 1.  The
result is snapped to exact binaries, the continuous inputs are re-optimised
with the binaries fixed, and single/whole-channel flips are tried until no
flip lowers the objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _smooth
from .chamber import (BINARY_INPUTS, INPUT_LOWER, INPUT_UPPER, STATE_LOWER,
                      STATE_UPPER, step_euler)
from .disturbance import preview as disturbance_preview
from .references import DEFAULT_PROFILE, reference_window
from .sqp import solve_box_least_squares

logger = logging.getLogger(__name__)

__all__ = [
    "OcpConfig", "OcpSolution", "OcpProblem", "SolverError",
    "stage_cost", "terminal_cost", "relaxation_residuals",
    "build_ocp", "solve_ocp", "control_step", "apply_rounding",
]

N_INPUTS = 10
_CS_STEP = 1e-30
_BINARY = np.array(BINARY_INPUTS)


class SolverError(RuntimeError):
    """The model produced non-finite values inside the optimizer."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class OcpConfig:
    N: int = 5
    dt: float = 30.0
    alpha: float = 1e6
    q_T: float = 5000.0
    q_C: float = 1.11e12
    P: tuple = (5000.0, 1.1e12, 0.0, 0.0, 0.0, 0.0, 0.0)
    R: tuple = (0.1, 1.0, 0.25, 0.5, 0.5, 0.5, 100.0, 100.0, 100.0, 100.0)
    mu: float = 1e8
    # state-box penalty acts on the box shrunk by this fraction of its width
    box_margin: float = 1e-3
    smoothing: float | None = 1e4
    tol: float = 1e-6
    max_iter: int = 100
    rho_schedule: tuple = (1e2, 1e4, 1e6, 1e8, 1e10)
    binary_tol: float = 1e-3
    max_flip_rounds: int = 20

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if len(self.P) != 7 or len(self.R) != N_INPUTS:
            raise ValueError("P needs 7 and R needs 10 diagonal entries")
        weights = (self.alpha, self.q_T, self.q_C, self.mu, *self.P, *self.R)
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if not self.rho_schedule or any(r <= 0 for r in self.rho_schedule):
            raise ValueError("rho_schedule must hold positive penalty weights")

    def validate(self):
        """Check the settings required for a closed-loop run (alpha >> 1)."""
        if self.alpha < 1e3:
            raise ValueError("relaxation penalty alpha must be >= 1e3")
        return self

    @property
    def n_var(self):
        return self.N * N_INPUTS + 1


@dataclass
class OcpSolution:
    u_seq: np.ndarray           # (N, 10), binaries snapped to {0, 1}
    eps_star: float             # relaxation slack at the relaxed optimum, before snapping
    objective: float
    iterations: int
    converged: bool
    predicted_states: np.ndarray  # (N + 1, 7)
    z: np.ndarray
    relaxation_gap: float = 0.0   # max distance of relaxed binaries from {0, 1} before snapping
    max_violation: float = 0.0    # largest predicted state-box violation, native units
    message: str = ""
    flips: int = 0
    merit_history: list = field(default_factory=list)


def stage_cost(x, u, ref, cfg):
    """Tracking cost of one stage: weighted T and C errors plus (u - u_ref)' R (u - u_ref)."""
    du = np.asarray(u, dtype=float) - ref.u_ref
    return (cfg.q_T * (x[0] - ref.T_ref) ** 2 + cfg.q_C * (x[1] - ref.C_ref) ** 2
            + float(du @ (np.asarray(cfg.R) * du)))


def _terminal_deviation(x, ref):
    dev = np.zeros(np.shape(x), dtype=np.result_type(x, float))
    dev[..., 0] = x[..., 0] - ref.T_ref
    dev[..., 1] = x[..., 1] - ref.C_ref
    return dev


def terminal_cost(x_N, ref_N, cfg):
    """(x - x_ref)' P (x - x_ref); only T and C carry references."""
    dev = _terminal_deviation(np.asarray(x_N, dtype=float), ref_N)
    return float(dev @ (np.asarray(cfg.P) * dev))


def relaxation_residuals(u_seq):
    """nu - nu^2 for every binary channel (columns) and stage (rows)."""
    nu = np.asarray(u_seq, dtype=float)[..., _BINARY]
    return nu - nu * nu


class OcpProblem:
    """Single-shooting transcription of the tracking problem at one sampling instant.

    Decision vector ``z = (u_0, ..., u_{N-1}, eps)``.  Residual blocks:
    stage tracking and input terms, terminal T/C terms, ``sqrt(alpha) eps``,
    the smoothed state-box violations of x_1..x_N, and, in the merit only,
    ``sqrt(rho) (nu - nu^2 - eps)`` for every binary input.
    """

    def __init__(self, x0, t_k, refs, dist, cfg, p, pp, lower=None, upper=None):
        self.x0 = np.asarray(x0, dtype=float)
        self.t_k = t_k
        self.refs = refs
        self.dist = np.asarray(dist, dtype=float)
        self.cfg = cfg
        self.p = p
        self.pp = pp
        N = cfg.N
        if lower is None:
            lower = np.tile(INPUT_LOWER, (N, 1))
        if upper is None:
            upper = np.tile(INPUT_UPPER, (N, 1))
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (N, N_INPUTS))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (N, N_INPUTS))
        self.lower = np.append(lower.ravel(), 0.0)
        self.upper = np.append(upper.ravel(), 0.25)
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent input bounds")

        self._T_ref = np.array([r.T_ref for r in refs])
        self._C_ref = np.array([r.C_ref for r in refs])
        self._u_ref = np.array([r.u_ref for r in refs[:N]])
        self._sqrt_R = np.sqrt(np.asarray(cfg.R))
        self._sqrt_P = np.sqrt(np.asarray(cfg.P)[:2])
        width = STATE_UPPER - STATE_LOWER
        self._box_lo = STATE_LOWER + cfg.box_margin * width
        self._box_hi = STATE_UPPER - cfg.box_margin * width
        self._box_width = width
        idx = np.arange(N)[:, None] * N_INPUTS + _BINARY[None, :]
        self.binary_index = idx.ravel()
        self.eps_index = N * N_INPUTS

    # -- decision vector helpers -------------------------------------------------

    def split(self, z):
        z = np.asarray(z)
        return z[..., :-1].reshape(z.shape[:-1] + (self.cfg.N, N_INPUTS)), z[..., -1]

    def initial_guess(self):
        """Input references clipped to the bounds, binaries off, eps = 0."""
        z = np.append(self._u_ref.ravel(), 0.0)
        return np.clip(z, self.lower, self.upper)

    # -- model evaluation ---------------------------------------------------------

    def rollout(self, Z):
        """Predicted states, shape (..., N + 1, 7), for a batch of decision vectors."""
        Z = np.asarray(Z)
        U, _ = self.split(Z)
        x = np.broadcast_to(self.x0, Z.shape[:-1] + (7,)).astype(Z.dtype)
        states = [x]
        for i in range(self.cfg.N):
            x = step_euler(x, U[..., i, :], self.dist[i], self.cfg.dt, self.p, self.pp,
                           smoothing=self.cfg.smoothing, check=False)
            states.append(x)
        return np.stack(states, axis=-2)

    def residuals(self, Z, rho=0.0):
        """Residual vectors for a batch ``Z`` of shape (B, n) (or a single point)."""
        Z = np.asarray(Z)
        cfg = self.cfg
        X = self.rollout(Z)
        U, eps = self.split(Z)
        blocks = [
            np.sqrt(cfg.q_T) * (X[..., :-1, 0] - self._T_ref[:-1]),
            np.sqrt(cfg.q_C) * (X[..., :-1, 1] - self._C_ref[:-1]),
            (self._sqrt_R * (U - self._u_ref)).reshape(Z.shape[:-1] + (-1,)),
            self._sqrt_P[0] * (X[..., -1:, 0] - self._T_ref[-1]),
            self._sqrt_P[1] * (X[..., -1:, 1] - self._C_ref[-1]),
            np.sqrt(cfg.alpha) * eps[..., None],
        ]
        if cfg.mu > 0:
            Xp = X[..., 1:, :]
            below = _smooth.pos((self._box_lo - Xp) / self._box_width, 1.0, cfg.smoothing)
            above = _smooth.pos((Xp - self._box_hi) / self._box_width, 1.0, cfg.smoothing)
            blocks.append(np.sqrt(cfg.mu) * np.concatenate(
                [below, above], axis=-1).reshape(Z.shape[:-1] + (-1,)))
        if rho > 0:
            nu = Z[..., self.binary_index]
            blocks.append(np.sqrt(rho) * (nu - nu * nu - eps[..., None]))
        r = np.concatenate(blocks, axis=-1)
        if not np.all(np.isfinite(r)):
            bad = ~np.all(np.isfinite(X.reshape(-1, self.cfg.N + 1, 7)), axis=(0, 2))
            stage = int(np.argmax(bad)) if bad.any() else None
            raise SolverError(f"non-finite model evaluation at stage {stage}", stage=stage)
        return r

    def jacobian(self, z, rho=0.0, free=None):
        """Residuals at `z` and their Jacobian by complex-step differentiation."""
        z = np.asarray(z, dtype=float)
        n = len(z)
        if free is None:
            free = self.lower < self.upper
        cols = np.flatnonzero(free)
        Z = np.empty((len(cols) + 1, n), dtype=complex)
        Z[:] = z
        Z[np.arange(1, len(cols) + 1), cols] += 1j * _CS_STEP
        R = self.residuals(Z, rho)
        J = np.zeros((R.shape[1], n))
        J[:, cols] = R[1:].imag.T / _CS_STEP
        return R[0].real, J

    def objective(self, z):
        """Penalised objective: tracking + terminal + alpha eps^2 + state-box penalty."""
        r = self.residuals(np.asarray(z, dtype=float))
        return float(r @ r)

    def gradient(self, z):
        """Gradient of :meth:`objective` with respect to every entry of z."""
        r, J = self.jacobian(z, free=np.ones(len(z), dtype=bool))
        return 2.0 * (J.T @ r)

    def merit(self, z, rho):
        r = self.residuals(np.asarray(z, dtype=float), rho)
        return float(r @ r)

    def max_violation(self, z):
        """Largest exceedance of the (unshrunk) state box over x_1..x_N, native units."""
        X = self.rollout(np.asarray(z, dtype=float))[1:]
        return float(np.max(np.maximum(STATE_LOWER - X, 0) + np.maximum(X - STATE_UPPER, 0)))


def build_ocp(x0, t_k, refs, preview, cfg, p, pp, input_lower=None, input_upper=None):
    """Assemble the optimal control problem at time `t_k`.

    `refs` and `preview` must both hold N + 1 samples.  `input_lower` and
    `input_upper` optionally tighten the actuator bounds per stage
    (shape (N, 10) or (10,)); equal bounds freeze an input.
    """
    if len(refs) != cfg.N + 1:
        raise ValueError(f"expected {cfg.N + 1} reference samples, got {len(refs)}")
    if len(preview) != cfg.N + 1:
        raise ValueError(f"expected {cfg.N + 1} disturbance samples, got {len(preview)}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    return OcpProblem(x0, t_k, refs, preview, cfg, p, pp, input_lower, input_upper)


def _continuous(problem, z, binaries_fixed=True):
    """Box least-squares over the continuous inputs with binaries (and eps) frozen."""
    lower = problem.lower.copy()
    upper = problem.upper.copy()
    if binaries_fixed:
        lower[problem.binary_index] = upper[problem.binary_index] = z[problem.binary_index]
        lower[problem.eps_index] = upper[problem.eps_index] = z[problem.eps_index]
    free = lower < upper
    return solve_box_least_squares(
        problem.residuals, lambda w: problem.jacobian(w, free=free), z, lower, upper,
        tol=problem.cfg.tol, max_iter=problem.cfg.max_iter)


def _flip_candidates(problem, z):
    """Decision vectors differing from `z` by one binary, or one whole channel set to 0/1."""
    cands = []
    for j in problem.binary_index:
        if problem.lower[j] < problem.upper[j]:
            c = z.copy()
            c[j] = 1.0 - c[j]
            cands.append(c)
    N = problem.cfg.N
    for b in BINARY_INPUTS:
        cols = np.arange(N) * N_INPUTS + b
        cols = cols[problem.lower[cols] < problem.upper[cols]]
        if len(cols) < 2:
            continue
        for value in (0.0, 1.0):
            if np.all(z[cols] == value):
                continue
            c = z.copy()
            c[cols] = value
            cands.append(c)
    return np.array(cands)


def solve_ocp(problem, warm_start=None):
    """Solve the optimal control problem.

    A cold start runs the whole penalty continuation from the reference
    inputs; a warm start (e.g. the shifted previous solution) only runs the
    final, stiffest penalty level.  Deterministic for identical inputs.
    """
    cfg = problem.cfg
    lo, hi = problem.lower, problem.upper
    if warm_start is None:
        z = problem.initial_guess()
        schedule = cfg.rho_schedule
    else:
        z = np.clip(np.asarray(warm_start, dtype=float), lo, hi)
        if z.shape != lo.shape:
            raise ValueError(f"warm start has {z.size} entries, expected {lo.size}")
        schedule = cfg.rho_schedule[-1:]

    iterations = 0
    history = []
    for rho in schedule:
        res = solve_box_least_squares(
            lambda Z, rho=rho: problem.residuals(Z, rho),
            lambda w, rho=rho: problem.jacobian(w, rho), z, lo, hi,
            tol=cfg.tol, max_iter=cfg.max_iter)
        z = res.z
        iterations += res.iterations
        history += res.history
    nu = z[problem.binary_index]
    relax_gap = float(np.max(np.minimum(nu, 1.0 - nu), initial=0.0))
    relax_eps = float(z[problem.eps_index])

    # Snap to exact binaries, then re-optimise the continuous inputs.
    z = z.copy()
    z[problem.binary_index] = np.round(nu)
    z[problem.eps_index] = 0.0
    res = _continuous(problem, z)
    z, f, iterations = res.z, res.merit, iterations + res.iterations
    converged, message = res.converged, res.message
    history += res.history

    flips = 0
    for _ in range(cfg.max_flip_rounds):
        cands = _flip_candidates(problem, z)
        if not len(cands):
            break
        merits = np.sum(problem.residuals(cands) ** 2, axis=1)
        k = int(np.argmin(merits))
        if not merits[k] < f - 1e-12 * (1.0 + abs(f)):
            break
        res = _continuous(problem, cands[k])
        if res.merit >= f:
            break
        z, f = res.z, res.merit
        converged, message = res.converged, res.message
        iterations += res.iterations
        history += res.history
        flips += 1

    if relax_gap > cfg.binary_tol:
        converged = False
        message = f"relaxation gap {relax_gap:.3g} above tolerance"
    U, _ = problem.split(z)
    return OcpSolution(
        u_seq=U.copy(), eps_star=relax_eps, objective=problem.objective(z),
        iterations=iterations, converged=bool(converged),
        predicted_states=problem.rollout(z), z=z, relaxation_gap=relax_gap,
        max_violation=problem.max_violation(z),
        message=message, flips=flips, merit_history=history)


def apply_rounding(u, binary_tol=1e-3):
    """Project an input onto the actuator set: clip, and round binaries to 0/1.

    Returns the projected input and whether every binary was already within
    `binary_tol` of 0 or 1.
    """
    u = np.clip(np.asarray(u, dtype=float), INPUT_LOWER, INPUT_UPPER)
    nu = u[_BINARY]
    within = bool(np.all(np.minimum(nu, 1.0 - nu) <= binary_tol))
    u[_BINARY] = np.round(nu)
    return u, within


def shift_solution(z, N):
    """Drop the first input of a decision vector and repeat the last one."""
    U = np.asarray(z[:-1]).reshape(N, N_INPUTS)
    U = np.vstack([U[1:], U[-1:]])
    return np.append(U.ravel(), 0.0)


def control_step(x_k, t_k, series, cfg, p, pp, previous=None, profile=DEFAULT_PROFILE):
    """One receding-horizon step: build, solve, and return the input to apply.

    `previous` is the solution from the preceding step; its shifted input
    sequence warm-starts the solver.
    """
    refs = reference_window(t_k, cfg.N, cfg.dt, profile)
    dist = disturbance_preview(series, t_k, cfg.N, cfg.dt)
    problem = build_ocp(x_k, t_k, refs, dist, cfg, p, pp)
    warm = None if previous is None else shift_solution(previous.z, cfg.N)
    solution = solve_ocp(problem, warm)
    u, _ = apply_rounding(solution.u_seq[0], cfg.binary_tol)
    if solution.relaxation_gap > cfg.binary_tol:
        logger.warning("t=%g s: relaxed binaries were %.3g from {0, 1} before rounding",
                       t_k, solution.relaxation_gap)
    if not solution.converged:
        logger.warning("t=%g s: solver did not converge (%s)", t_k, solution.message)
    return u, solution
