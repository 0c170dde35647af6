"""Levenberg-Marquardt for small dense least-squares problems.

Used both to train the neural inverters and to refit the Dubois constants.
The damped normal equations are::

    (J^T J + mu I) delta = -J^T r

so large ``mu`` gives a short steepest-descent step and ``mu -> 0`` gives
the Gauss-Newton step. ``mu`` is multiplied by ``damping_up`` after a
rejected step and divided by ``damping_down`` after an accepted one.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ConfigurationError, TrainingError

logger = logging.getLogger(__name__)

_DAMPING_FLOOR = 1e-20


@dataclass(frozen=True)
class LMOptions:
    max_iter: int = 500
    mse_goal: float = 1e-6
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    damping_max: float = 1e10

    def __post_init__(self):
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if self.mse_goal < 0:
            raise ConfigurationError("mse_goal must be >= 0")
        if self.damping_init <= 0 or self.damping_max <= self.damping_init:
            raise ConfigurationError("need 0 < damping_init < damping_max")
        if self.damping_up <= 1 or self.damping_down <= 1:
            raise ConfigurationError("damping factors must be > 1")


@dataclass
class LMResult:
    x: np.ndarray
    mse_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    damping: float = 0.0
    reason: str = ""

    @property
    def mse(self):
        return self.mse_history[-1]


def lm_step(J, r, damping):
    """Solve the damped normal equations for one LM step.

    Raises ``LinAlgError`` when ``J^T J + mu I`` is not finite or not
    positive definite in floating point.
    """
    A = J.T @ J
    if not np.all(np.isfinite(A)):
        raise LinAlgError("normal matrix is not finite")
    A[np.diag_indices_from(A)] += damping
    c = cho_factor(A, check_finite=False)
    return -cho_solve(c, J.T @ r, check_finite=False)


def _mse(r):
    return float(np.mean(r * r))


def levenberg_marquardt(residual, jacobian, x0, options=LMOptions(), callback=None):
    """Minimise ``mean(residual(x)**2)`` starting from ``x0``.

    Parameters
    ----------
    residual : callable
        ``residual(x) -> (m,)`` array.
    jacobian : callable
        ``jacobian(x) -> (m, n)`` array of d residual / d x.
    x0 : array_like
        Starting point, shape ``(n,)``.
    options : LMOptions
    callback : callable, optional
        Called as ``callback(iteration, x, mse, damping)`` after every
        accepted step.

    Returns
    -------
    LMResult
        The accepted-step MSE history is strictly decreasing.

    Raises
    ------
    TrainingError
        If the damped normal equations could not be solved at any
        damping up to the maximum.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    mse = _mse(r)
    mu = options.damping_init
    result = LMResult(x=x, mse_history=[mse], damping=mu)
    if not np.isfinite(mse):
        raise TrainingError("initial residual is not finite")

    for it in range(options.max_iter):
        if mse <= options.mse_goal:
            result.converged = True
            result.reason = "mse_goal"
            break
        J = jacobian(x)
        accepted = solved = False
        while mu <= options.damping_max:
            try:
                delta = lm_step(J, r, mu)
            except LinAlgError:
                mu *= options.damping_up
                continue
            solved = True
            x_new = x + delta
            r_new = residual(x_new)
            mse_new = _mse(r_new)
            if np.isfinite(mse_new) and mse_new < mse:
                x, r, mse = x_new, r_new, mse_new
                mu = max(mu / options.damping_down, _DAMPING_FLOOR)
                accepted = True
                break
            mu *= options.damping_up
        if not solved:
            raise TrainingError(
                f"normal equations singular up to damping {options.damping_max:g}"
            )
        if not accepted:
            result.reason = "damping_overflow"
            break
        result.iterations = it + 1
        result.mse_history.append(mse)
        if callback is not None:
            callback(it, x, mse, mu)
        logger.debug("LM iter %d mse=%.6g mu=%.3g", it + 1, mse, mu)
    else:
        if mse <= options.mse_goal:
            result.converged = True
            result.reason = "mse_goal"
        else:
            result.reason = "max_iter"

    result.x = x
    result.damping = mu
    return result
