"""Sequential quadratic programming for small, dense, box-constrained least squares.

The merit is ``||r(z)||^2``.  Each iteration builds the Gauss-Newton model
``g = 2 J^T r``, ``H = 2 J^T J`` (plus Levenberg-Marquardt damping when a
step is rejected), solves the box-constrained QP with a primal active-set
method and backtracks along the step until the Armijo condition holds.
Trial step lengths are evaluated as one batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = ["box_qp", "SqpResult", "solve_box_least_squares"]


def box_qp(H, g, lower, upper, max_iter=None):
    """Minimise ``0.5 p'Hp + g'p`` subject to ``lower <= p <= upper``.

    `H` must be symmetric positive definite.  Variables with equal bounds
    stay fixed.  Returns the minimiser.
    """
    n = len(g)
    fixed = lower >= upper
    x = np.clip(scipy.linalg.solve(H, -g, assume_a="pos"), lower, upper)
    working = fixed | (x <= lower) | (x >= upper)
    at_min = False
    for _ in range(max_iter or 4 * n + 20):
        grad = H @ x + g
        if not at_min:
            free = ~working
            d = np.zeros(n)
            if free.any():
                d[free] = scipy.linalg.solve(H[np.ix_(free, free)], -grad[free],
                                             assume_a="pos")
            ratio = np.full(n, np.inf)
            neg = free & (d < 0)
            pos = free & (d > 0)
            ratio[neg] = (lower[neg] - x[neg]) / d[neg]
            ratio[pos] = (upper[pos] - x[pos]) / d[pos]
            j = int(np.argmin(ratio))
            if ratio[j] < 1.0:
                x = x + max(ratio[j], 0.0) * d
                x[j] = lower[j] if d[j] < 0 else upper[j]
                working[j] = True
                continue
            x = x + d
            at_min = True
            grad = H @ x + g
        # Subspace minimum: release the bound with the most wrong-signed multiplier.
        wrong = np.zeros(n)
        on_lower = working & ~fixed & (x <= lower)
        on_upper = working & ~fixed & (x >= upper)
        wrong[on_lower] = np.maximum(-grad[on_lower], 0.0)
        wrong[on_upper] = np.maximum(grad[on_upper], 0.0)
        j = int(np.argmax(wrong))
        if wrong[j] <= 1e-12 * (1.0 + np.max(np.abs(grad))):
            return x
        working[j] = False
        at_min = False
    return x


@dataclass
class SqpResult:
    z: np.ndarray
    merit: float
    iterations: int
    converged: bool
    message: str
    history: list = field(default_factory=list)


def solve_box_least_squares(residuals, jacobian, z0, lower, upper, tol=1e-6,
                            max_iter=100, max_halvings=12, armijo=1e-4):
    """Minimise ``||r(z)||^2`` over the box ``lower <= z <= upper``.

    Parameters
    ----------
    residuals : callable
        ``residuals(Z)`` maps a batch ``(B, n)`` of points to ``(B, m)``.
    jacobian : callable
        ``jacobian(z)`` returns ``(r, J)`` at a single point.
    tol : float
        Stop when the Gauss-Newton model predicts a decrease below
        ``tol * (1 + merit)``.

    Returns
    -------
    SqpResult
        Best iterate found.  ``converged`` is False when the iteration cap
        was hit or no step could be accepted.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    z = np.clip(np.asarray(z0, dtype=float), lower, upper)
    r, J = jacobian(z)
    f = float(r @ r)
    history = [f]
    damping = 0.0
    trial = 0.5 ** np.arange(max_halvings)
    free = lower < upper
    if not free.any():
        return SqpResult(z, f, 0, True, "no free variables", history)
    for it in range(max_iter):
        g = 2.0 * (J.T @ r)
        H = 2.0 * (J.T @ J)
        diag = np.diag(H).copy()
        floor = 1e-12 * diag[free].max()
        scale = np.ones_like(diag)
        if floor > 0:
            scale[free] = 1.0 / np.sqrt(np.maximum(diag[free], floor))
        Hs = H * np.outer(scale, scale)
        gs = g * scale
        lo_s = (lower - z) / scale
        hi_s = (upper - z) / scale
        ridge = 1e-10 * np.eye(len(z))

        ps = box_qp(Hs + ridge, gs, lo_s, hi_s)
        predicted = -(gs @ ps + 0.5 * ps @ Hs @ ps)
        if predicted <= tol * (1.0 + f):
            return SqpResult(z, f, it, True, "stationary", history)
        if damping > 0.0:
            ps = box_qp(Hs + (damping + 1e-10) * np.eye(len(z)), gs, lo_s, hi_s)
        p = ps * scale
        slope = g @ p
        candidates = np.clip(z + trial[:, None] * p, lower, upper)
        merits = np.sum(residuals(candidates) ** 2, axis=1)
        ok = np.isfinite(merits) & (merits <= f + armijo * trial * slope)
        if not ok.any():
            damping = max(10.0 * damping, 1e-3)
            if damping > 1e8:
                return SqpResult(z, f, it + 1, False, "line search failed", history)
            continue
        k = int(np.argmax(ok))
        damping = damping / 10.0 if k == 0 else damping
        if damping < 1e-6:
            damping = 0.0
        z = candidates[k]
        r, J = jacobian(z)
        f = float(r @ r)
        history.append(f)
    return SqpResult(z, f, max_iter, False, "iteration limit", history)
