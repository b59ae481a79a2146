"""Fixed-step integration of matrix ODEs on the sample grid of a finite state."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import Unstable

GROWTH_LIMIT = 1e6


def midpoints(samples: np.ndarray) -> np.ndarray:
    """Values halfway between consecutive samples along axis 0.

    Every midpoint comes from a four-point cubic: centred in the interior,
    one-sided on the two end intervals.  Interpolation errors are O(h^4).
    """
    s = np.asarray(samples)
    n = s.shape[0] - 1
    out = np.empty((n,) + s.shape[1:], dtype=np.result_type(s, float))
    if n == 1:
        out[0] = 0.5 * (s[0] + s[1])
        return out
    if n == 2:
        out[0] = (3 * s[0] + 6 * s[1] - s[2]) / 8
        out[-1] = (3 * s[-1] + 6 * s[-2] - s[-3]) / 8
        return out
    out[0] = (5 * s[0] + 15 * s[1] - 5 * s[2] + s[3]) / 16
    out[-1] = (5 * s[-1] + 15 * s[-2] - 5 * s[-3] + s[-4]) / 16
    if n > 2:
        out[1:-1] = (-s[:-3] + 9 * s[1:-2] + 9 * s[2:-1] - s[3:]) / 16
    return out


def interleave(samples: np.ndarray) -> np.ndarray:
    """Samples on the half grid: even index 2k is grid point k, odd 2k+1 its midpoint."""
    s = np.asarray(samples)
    out = np.empty((2 * s.shape[0] - 1,) + s.shape[1:], dtype=np.result_type(s, float))
    out[0::2] = s
    out[1::2] = midpoints(s)
    return out


class HalfGrid:
    """``Q`` and ``R`` of a finite state on the half grid."""

    def __init__(self, state):
        self.Q = interleave(state.Q)
        self.R = interleave(np.moveaxis(state.R, 1, 0))  # (2N+1, q, D, D)
        self.h = state.h
        self.N = state.N


def rk4_step(F: Callable, t: int, y: np.ndarray, h: float, forward: bool) -> np.ndarray:
    """One classical RK4 step from half-grid index ``t`` by ``+h`` or ``-h``."""
    d = 1 if forward else -1
    step = d * h
    k1 = F(t, y)
    k2 = F(t + d, y + 0.5 * step * k1)
    k3 = F(t + d, y + 0.5 * step * k2)
    k4 = F(t + 2 * d, y + step * k3)
    return y + (step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_path(F: Callable, y0: np.ndarray, h: float, k0: int, k1: int,
             hermitian: bool = False, floor: float = 1e-300) -> np.ndarray:
    """Integrate ``dy/dx = F(t, y)`` from grid index ``k0`` to ``k1``.

    ``F`` receives a half-grid index.  Returns the solution at every grid
    point visited, ordered from ``k0`` to ``k1`` inclusive.  ``floor`` is the
    smallest norm the growth guard compares against, which matters for
    inhomogeneous equations started from zero.
    """
    forward = k1 >= k0
    d = 1 if forward else -1
    y = np.array(y0, dtype=complex)
    out = np.empty((abs(k1 - k0) + 1,) + y.shape, dtype=complex)
    out[0] = y
    scale = max(np.linalg.norm(y), floor)
    for i, k in enumerate(range(k0, k1, d)):
        y = rk4_step(F, 2 * k, y, h, forward)
        if hermitian:
            y = 0.5 * (y + np.conj(np.swapaxes(y, -1, -2)))
        new = np.linalg.norm(y)
        if not np.isfinite(new) or new > GROWTH_LIMIT * scale:
            raise Unstable(f"propagation norm grew from {scale:.3e} to {new:.3e} in one step at grid index {k}")
        scale = max(new, floor)
        out[i + 1] = y
    return out


def integrate(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson quadrature over the grid (axis 0)."""
    return simpson(np.asarray(values), dx=h, axis=0)


def trapezoid_weights(n_points: int, h: float) -> np.ndarray:
    w = np.full(n_points, h)
    if n_points == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * h
    return w
