"""Algebraic constraints on (Q, R): exchange regularity, higher orders, parity blocks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FiniteCMPS, SpeciesTable, UniformCMPS
from .errors import BadOrder, ShapeError

DEFAULT_TOL = 1e-10
DEFAULT_ORDER_CAP = 4


@dataclass(frozen=True)
class RegularityReport:
    order: int
    residuals: np.ndarray  # (q, q) Frobenius norms
    tol: float = DEFAULT_TOL

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


@dataclass(frozen=True)
class ParityStructure:
    Dplus: int
    Dminus: int

    def __post_init__(self):
        if self.Dplus < 0 or self.Dminus < 0 or self.Dplus + self.Dminus == 0:
            raise ShapeError("parity blocks must be nonnegative with positive total")

    @property
    def D(self) -> int:
        return self.Dplus + self.Dminus

    @property
    def P(self) -> np.ndarray:
        return np.diag(np.r_[np.ones(self.Dplus), -np.ones(self.Dminus)]).astype(complex)


def _graded_bracket(X, Y, eta):
    # commutator for eta = +1, anticommutator for eta = -1
    return X @ Y - eta * (Y @ X)


def _first_order_table(R, eta):
    q = R.shape[0]
    res = np.zeros((q, q))
    for a in range(q):
        for b in range(q):
            res[a, b] = np.linalg.norm(eta[a, b] * R[b] @ R[a] - R[a] @ R[b])
    return res


def check_first_order(state, tol: float = DEFAULT_TOL) -> RegularityReport:
    """Residuals of ``eta_ab R_b R_a - R_a R_b``; finite states report the grid maximum."""
    eta = state.species.eta
    if isinstance(state, FiniteCMPS):
        res = np.zeros((state.q, state.q))
        for k in range(state.N + 1):
            res = np.maximum(res, _first_order_table(state.R[:, k], eta))
    else:
        res = _first_order_table(state.R, eta)
    return RegularityReport(1, res, tol)


def _grid_derivative(samples: np.ndarray, h: float, times: int) -> np.ndarray:
    out = samples
    for _ in range(times):
        out = np.gradient(out, h, axis=0, edge_order=2)
    return out


def _nested(Q, X, times):
    for _ in range(times):
        X = Q @ X - X @ Q
    return X


def check_higher_order(state, n: int, dR_samples=None, tol: float = DEFAULT_TOL,
                       order_cap: int = DEFAULT_ORDER_CAP) -> RegularityReport:
    """Order-``n`` condition: graded bracket of ``sum_j d^(n-1-j) ad_Q^j R_a`` with ``R_b``.

    For order 2 this is ``[dR_a/dx + [Q, R_a], R_b]`` (anticommutator for two
    fermions).  Uniform states have vanishing derivatives.  For finite states
    derivatives come from second-order central differences, except that
    ``dR_samples`` (shape ``(q, N+1, D, D)``) replaces the first derivative of
    ``R`` when supplied.
    """
    if n < 2 or n > order_cap:
        raise BadOrder(f"order must lie in [2, {order_cap}], got {n}")
    eta = state.species.eta
    m = n - 1
    q = state.q
    if isinstance(state, UniformCMPS):
        X = np.array([_nested(state.Q, state.R[a], m) for a in range(q)])
        res = np.zeros((q, q))
        for a in range(q):
            for b in range(q):
                res[a, b] = np.linalg.norm(_graded_bracket(X[a], state.R[b], eta[a, b]))
        return RegularityReport(n, res, tol)

    h = state.h
    Qs = state.Q
    res = np.zeros((q, q))
    for a in range(q):
        Ra = state.R[a]
        X = np.zeros_like(Ra)
        for j in range(m + 1):
            term = np.array([_nested(Qs[k], Ra[k], j) for k in range(state.N + 1)])
            times = m - j
            if j == 0 and times >= 1 and dR_samples is not None:
                term = _grid_derivative(np.asarray(dR_samples)[a], h, times - 1)
            else:
                term = _grid_derivative(term, h, times)
            X = X + term
        for b in range(q):
            Rb = state.R[b]
            vals = [np.linalg.norm(_graded_bracket(X[k], Rb[k], eta[a, b])) for k in range(state.N + 1)]
            res[a, b] = max(vals)
    return RegularityReport(n, res, tol)


def _parity_residual(M, Dp, offdiag_allowed):
    if offdiag_allowed:
        return max(np.max(np.abs(M[:Dp, :Dp]), initial=0.0), np.max(np.abs(M[Dp:, Dp:]), initial=0.0))
    return max(np.max(np.abs(M[:Dp, Dp:]), initial=0.0), np.max(np.abs(M[Dp:, :Dp]), initial=0.0))


def check_parity(state: UniformCMPS, parity: ParityStructure, tol: float = DEFAULT_TOL):
    """Return ``(passed, residuals)`` for the parity block structure.

    ``residuals`` maps ``"Q"`` and each species name to the largest magnitude
    of an entry that the block structure forbids.
    """
    if parity.D != state.D:
        raise ShapeError(f"parity dimension {parity.D} differs from D={state.D}")
    Dp = parity.Dplus
    table = {"Q": float(_parity_residual(state.Q, Dp, False))}
    for a, name in enumerate(state.species.names):
        table[name] = float(_parity_residual(state.R[a], Dp, state.species.is_fermion(a)))
    return max(table.values()) <= tol, table


def build_parity_state(Qplus, Qminus, R_blocks, species: SpeciesTable):
    """Assemble a state from parity blocks.

    ``R_blocks[a]`` is ``(R_pp, R_mm)`` for a boson and ``(R_pm, R_mp)`` for a
    fermion, where ``R_pm`` maps the odd sector into the even one.
    """
    Qp = np.atleast_2d(np.asarray(Qplus, dtype=complex))
    Qm = np.atleast_2d(np.asarray(Qminus, dtype=complex))
    Dp, Dm = Qp.shape[0], Qm.shape[0]
    if Qp.shape != (Dp, Dp) or Qm.shape != (Dm, Dm):
        raise ShapeError("Q blocks must be square")
    if len(R_blocks) != species.q:
        raise ShapeError(f"{len(R_blocks)} R block pairs for {species.q} species")
    D = Dp + Dm
    Q = np.zeros((D, D), dtype=complex)
    Q[:Dp, :Dp], Q[Dp:, Dp:] = Qp, Qm
    R = np.zeros((species.q, D, D), dtype=complex)
    for a, (X, Y) in enumerate(R_blocks):
        if species.is_fermion(a):
            shapes, slots = ((Dp, Dm), (Dm, Dp)), ((slice(0, Dp), slice(Dp, D)), (slice(Dp, D), slice(0, Dp)))
        else:
            shapes, slots = ((Dp, Dp), (Dm, Dm)), ((slice(0, Dp), slice(0, Dp)), (slice(Dp, D), slice(Dp, D)))
        for block, shape, slot in zip((X, Y), shapes, slots):
            block = np.asarray(block, dtype=complex)
            if block.size != shape[0] * shape[1]:
                raise ShapeError(f"block of species {a} has {block.size} entries, expected shape {shape}")
            R[(a,) + slot] = block.reshape(shape)
    return UniformCMPS(Q, R, species), ParityStructure(Dp, Dm)
