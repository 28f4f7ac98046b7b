"""Central-difference derivative checker."""

from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray


def finite_difference_check(
    f: Callable[[NDArray[np.float64]], float],
    analytic_grad: Callable[[NDArray[np.float64]], ArrayLike],
    x: ArrayLike,
    h: float = 1e-4,
) -> float:
    """Return ``max_i |(f(x + h e_i) - f(x - h e_i)) / 2h - grad(x)_i|``."""
    x0 = np.atleast_1d(np.asarray(x, dtype=np.float64))
    grad = np.atleast_1d(np.asarray(analytic_grad(x0.copy()), dtype=np.float64))
    if grad.shape != x0.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match input shape {x0.shape}")
    worst = 0.0
    for i in range(x0.size):
        step = np.zeros_like(x0)
        step.flat[i] = h
        numeric = (float(f(x0 + step)) - float(f(x0 - step))) / (2.0 * h)
        worst = max(worst, abs(numeric - float(grad.flat[i])))
    return worst
