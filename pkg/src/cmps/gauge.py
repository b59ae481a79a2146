"""
Gauge transformations and canonical forms.

Convention: a gauge matrix ``g`` maps ``Q -> g^-1 Q g + g^-1 dg/dx`` and
``R -> g^-1 R g``, with boundary vectors ``vR -> g(L/2)^-1 vR`` and
``vL -> g(-L/2)^dag vL`` so the physical state is unchanged.
"""
from __future__ import annotations

import numpy as np

from . import _ode
from .core import FiniteCMPS, UniformCMPS, dag, transfer_apply
from .errors import BadFixedPoint, BadPropagation, IllConditioned, ShapeError, SingularGauge, Unstable
from .uniform import normalize

SINGULAR_COND = 1e14
EIG_FLOOR = 1e-14
ORDERED_EXP_COND = 1e12


def _inverse(g, what="gauge"):
    g = np.asarray(g, dtype=complex)
    c = np.linalg.cond(g)
    if not np.isfinite(c) or c > SINGULAR_COND:
        raise SingularGauge(f"{what} matrix is singular (condition number {c:.3e})")
    return np.linalg.inv(g)


def gauge_uniform(state: UniformCMPS, g) -> UniformCMPS:
    g = np.asarray(g, dtype=complex)
    if g.shape != (state.D, state.D):
        raise ShapeError(f"gauge matrix must be {state.D}x{state.D}")
    gi = _inverse(g)
    return UniformCMPS(gi @ state.Q @ g, gi @ state.R @ g, state.species)


def gauge_finite(state: FiniteCMPS, g_samples, dg_samples=None) -> FiniteCMPS:
    """Apply ``g(x)``; ``dg/dx`` comes from central differences unless supplied."""
    g = np.asarray(g_samples, dtype=complex)
    if g.shape != state.Q.shape:
        raise ShapeError(f"gauge samples must have shape {state.Q.shape}")
    gi = np.array([_inverse(gk, f"gauge sample {k}") for k, gk in enumerate(g)])
    dg = np.gradient(g, state.h, axis=0, edge_order=2) if dg_samples is None else np.asarray(dg_samples)
    Q = gi @ state.Q @ g + gi @ dg
    R = gi[None] @ state.R @ g[None]
    return state.replace(Q=Q, R=R, vR=gi[-1] @ state.vR, vL=dag(g[0]) @ state.vL)


# --------------------------------------------------------------------------- canonical forms


def _psd_sqrt(m, name):
    w, V = np.linalg.eigh(m)
    if w[0] <= 0:
        raise BadFixedPoint(f"fixed point {name} is not positive definite (min eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(w)) @ dag(V), (V / np.sqrt(w)) @ dag(V)


def _fix_column_phases(g):
    g = g.copy()
    for j in range(g.shape[1]):
        col = g[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.linalg.norm(col))[0]
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            g[:, j] = col / ph
    return g


def _diagonalizer(M):
    w, U = np.linalg.eigh(M)
    return w[::-1], U[:, ::-1]


def left_canonicalize_uniform(state: UniformCMPS, dense_budget: int | None = None):
    """Gauge to ``l = 1`` with diagonal, nonincreasing ``r``.

    Returns ``(new_state, g, r_diag)`` with ``new_state = gauge_uniform(normalized, g)``.
    """
    ns, fp = normalize(state, dense_budget)
    s, si = _psd_sqrt(fp.l, "l")
    w, U = _diagonalizer(s @ fp.r @ s)
    g = _fix_column_phases(si @ U)
    return gauge_uniform(ns, g), g, w


def right_canonicalize_uniform(state: UniformCMPS, dense_budget: int | None = None):
    """Gauge to ``r = 1`` with diagonal, nonincreasing ``l``; returns ``(new_state, g, l_diag)``."""
    ns, fp = normalize(state, dense_budget)
    s, _ = _psd_sqrt(fp.r, "r")
    w, V = _diagonalizer(s @ fp.l @ s)
    g = _fix_column_phases(s @ V)
    return gauge_uniform(ns, g), g, w


# --------------------------------------------------------------------------- finite gauges


def left_orthonormalize_finite(state: FiniteCMPS, derivative: str = "exact"):
    """Gauge a finite state into left-orthonormal form.

    ``rho = (g^-1)^dag g^-1`` is propagated like the left density matrix from a
    regularized ``vL vL^dag``, and ``g = rho^(-1/2)``.  With
    ``derivative="exact"`` the derivative of ``rho^(1/2)`` is obtained from the
    ODE itself through a Sylvester equation; ``"central"`` differentiates the
    sampled ``g`` numerically instead.  Returns ``(new_state, g_samples)``.
    """
    if state.boundary != "open":
        raise ShapeError("left orthonormalization requires open boundaries")
    if derivative not in ("exact", "central"):
        raise ShapeError(f"unknown derivative mode {derivative!r}")
    D = state.D
    vL = state.vL
    eps = 1e-12 * np.vdot(vL, vL).real
    rho0 = np.outer(vL, vL.conj()) + eps * np.eye(D)
    hg = _ode.HalfGrid(state)
    ones = np.ones(state.q)

    def F(t, y):
        return transfer_apply(hg.Q[t], hg.R[t], ones, y, "left")

    rho = _ode.rk4_path(F, rho0, state.h, 0, state.N, hermitian=True)
    n1 = state.N + 1
    S = np.empty((n1, D, D), dtype=complex)
    Si = np.empty_like(S)
    dS = np.empty_like(S)
    for k in range(n1):
        w, V = np.linalg.eigh(rho[k])
        top = max(w[-1], 1e-300)
        if w[0] < -1e-10 * top:
            raise BadPropagation(f"rho lost positivity at grid index {k} (min eigenvalue {w[0]:.3e})")
        w = np.maximum(w, EIG_FLOOR * top)
        sq = np.sqrt(w)
        S[k] = (V * sq) @ dag(V)
        Si[k] = (V / sq) @ dag(V)
        drho = transfer_apply(state.Q[k], state.R[:, k], ones, rho[k], "left")
        dS[k] = V @ ((dag(V) @ drho @ V) / (sq[:, None] + sq[None, :])) @ dag(V)
    if derivative == "central":
        return gauge_finite(state, Si), Si
    Q = S @ state.Q @ Si - dS @ Si
    R = S[None] @ state.R @ Si[None]
    new = state.replace(Q=Q, R=R, vR=S[-1] @ state.vR, vL=dag(Si[0]) @ state.vL)
    return new, Si


def pointwise_left_residual(state: FiniteCMPS) -> np.ndarray:
    """``||Q + Q^dag + sum R^dag R||_F`` at every grid point."""
    M = state.Q + dag(state.Q) + np.einsum("akji,akjl->kil", state.R.conj(), state.R)
    return np.linalg.norm(M, axis=(1, 2))


def eliminate_Q_gauge(state: FiniteCMPS) -> FiniteCMPS:
    """Gauge with ``g(x) = Pexp[int_x^{L/2} Q] g0`` so that ``Q`` vanishes identically.

    ``g0`` is chosen so that ``g(-L/2) = 1``, leaving ``vL`` untouched.
    """
    return _eliminate_Q(state)[0]


def q_elimination_gauge(state: FiniteCMPS) -> np.ndarray:
    """Samples of the gauge used by :func:`eliminate_Q_gauge`."""
    return _eliminate_Q(state)[1]


def _eliminate_Q(state: FiniteCMPS):
    if state.boundary != "open":
        raise ShapeError("the Q-elimination gauge requires open boundaries")
    D = state.D
    Qh = _ode.interleave(state.Q)

    def F(t, Y):
        return -Qh[t] @ Y

    try:
        M = _ode.rk4_path(F, np.eye(D), state.h, state.N, 0)[::-1]
    except Unstable as exc:
        raise IllConditioned(f"ordered exponential overflowed: {exc}") from None
    c = np.linalg.cond(M[0])
    if not np.all(np.isfinite(M)) or c > ORDERED_EXP_COND:
        raise IllConditioned(f"ordered exponential has condition number {c:.3e}")
    M0i = np.linalg.inv(M[0])
    g = M @ M0i
    gi = M[0] @ np.linalg.inv(M)
    R = gi[None] @ state.R @ g[None]
    return state.replace(Q=np.zeros_like(state.Q), R=R, vR=M[0] @ state.vR), g
