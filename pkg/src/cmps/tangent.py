"""
Tangent vectors: gauge directions, gauge fixing and the overlap metric.

A finite tangent vector is the first-order variation ``(V(x), W_a(x), wR)`` of
``(Q(x), R_a(x), vR)`` with ``vL`` held fixed.  A uniform tangent vector carries
constant ``(V, W_a)`` modulated by ``exp(i p x)``; its overlaps are the
coefficients of ``2 pi delta(p - p')``.

In ``overlap_*(base, ..., t1, t2)`` the first tangent is the bra (conjugated)
and the second the ket.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ode
from .core import FiniteCMPS, UniformCMPS, dag, transfer_apply
from .errors import BadGenerator, GaugeSingular, IllConditioned, ShapeError
from .finite import VirtualDensityPair, propagate
from .uniform import FixedPointPair, TransferOperator, pair

EIG_FLOOR = 1e-14
BULK_COND_LIMIT = 1e14
ORTHOGONALITY_TOL = 1e-10


@dataclass(frozen=True)
class TangentFinite:
    V: np.ndarray  # (N+1, D, D)
    W: np.ndarray  # (q, N+1, D, D)
    wR: np.ndarray  # (D,)

    def __add__(self, other):
        return TangentFinite(self.V + other.V, self.W + other.W, self.wR + other.wR)

    def scaled(self, c):
        return TangentFinite(c * self.V, c * self.W, c * self.wR)


@dataclass(frozen=True)
class TangentUniform:
    V: np.ndarray
    W: np.ndarray  # (q, D, D)
    p: float = 0.0

    def __add__(self, other):
        if other.p != self.p:
            raise ShapeError("cannot add tangents with different momenta")
        return TangentUniform(self.V + other.V, self.W + other.W, self.p)

    def scaled(self, c):
        return TangentUniform(c * self.V, c * self.W, self.p)


def _check_finite_tangent(base: FiniteCMPS, t: TangentFinite):
    if t.V.shape != base.Q.shape or t.W.shape != base.R.shape or t.wR.shape != (base.D,):
        raise ShapeError("tangent data does not match the base state grid")


# --------------------------------------------------------------------------- finite


def gauge_direction_finite(base: FiniteCMPS, h, dh=None) -> TangentFinite:
    """Null direction generated by ``h(x)`` with ``h(-L/2) = 0``."""
    h = np.asarray(h, dtype=complex)
    if h.shape != base.Q.shape:
        raise ShapeError(f"generator samples must have shape {base.Q.shape}")
    if np.max(np.abs(h[0])) > 1e-12:
        raise BadGenerator("the generator must vanish at x = -L/2")
    dh = np.gradient(h, base.h, axis=0, edge_order=2) if dh is None else np.asarray(dh)
    return _gauge_direction(base, h, dh)


def _gauge_direction(base, h, dh):
    V = base.Q @ h - h @ base.Q + dh
    W = base.R @ h[None] - h[None] @ base.R
    return TangentFinite(V, W, -h[-1] @ base.vR)


def base_embedding_finite(base: FiniteCMPS) -> TangentFinite:
    """The base state itself as a tangent vector, via ``wR = vR``."""
    return TangentFinite(np.zeros_like(base.Q), np.zeros_like(base.R), np.array(base.vR))


def _ket_left(V, W, l, R):
    # (l| [V x 1 + sum W x conj(R)] as a left vector
    return dag(V) @ l + np.einsum("akji,kjl,aklm->kim", W.conj(), l, R)


def _bra_left(V, W, l, R):
    # (l| [1 x conj(V) + sum R x conj(W)] as a left vector
    return l @ V + np.einsum("akji,kjl,aklm->kim", R.conj(), l, W)


def _accumulate(base, pr_l, source):
    """Solve ``d lam/dx = T~(lam) + source(x)`` from ``lam(-L/2) = 0``."""
    hg = _ode.HalfGrid(base)
    sh = _ode.interleave(source)
    ones = np.ones(base.q)

    def F(t, y):
        return transfer_apply(hg.Q[t], hg.R[t], ones, y, "left") + sh[t]

    floor = base.h * max(float(np.max(np.abs(source))), 1e-300)
    return _ode.rk4_path(F, np.zeros_like(pr_l[0]), base.h, 0, base.N, floor=floor)


def base_overlap_finite(base: FiniteCMPS, t: TangentFinite, pr: VirtualDensityPair | None = None) -> complex:
    """``<Psi|Phi[t]>`` for the unnormalized base state."""
    _check_finite_tangent(base, t)
    pr = pr or propagate(base)
    l, r, R = pr.l, pr.r, base.R
    right = t.V @ r + np.einsum("akij,kjl,akml->kim", t.W, r, R.conj())
    local = np.einsum("kij,kij->k", l.conj(), right)
    return complex(np.vdot(base.vR, l[-1] @ t.wR) + _ode.integrate(local, base.h))


def overlap_finite(base: FiniteCMPS, t1: TangentFinite, t2: TangentFinite,
                   pr: VirtualDensityPair | None = None) -> complex:
    """``<Phi[t1]|Phi[t2]>`` including boundary, local, ordered and boundary-bulk terms."""
    _check_finite_tangent(base, t1)
    _check_finite_tangent(base, t2)
    pr = pr or propagate(base)
    l, r, R, h = pr.l, pr.r, base.R, base.h
    vR = base.vR

    boundary = np.vdot(t1.wR, l[-1] @ t2.wR)
    loc = np.einsum("kij,akjl,klm,akim->k", l, t2.W, r, t1.W.conj())
    # lam: ket variation to the left, propagated; lamt: bra variation to the left
    lam = _accumulate(base, l, _ket_left(t2.V, t2.W, l, R))
    lamt = _accumulate(base, l, _bra_left(t1.V, t1.W, l, R))
    bra_right = r @ dag(t1.V) + np.einsum("akij,kjl,akml->kim", R, r, t1.W.conj())
    ket_right = t2.V @ r + np.einsum("akij,kjl,akml->kim", t2.W, r, R.conj())
    ordered_a = np.einsum("kij,kij->k", lam.conj(), bra_right)
    ordered_b = np.einsum("kij,kij->k", lamt.conj(), ket_right)
    cross = pair(lam[-1], np.outer(vR, t1.wR.conj())) + pair(lamt[-1], np.outer(t2.wR, vR.conj()))
    bulk = _ode.integrate(loc + ordered_a + ordered_b, h)
    return complex(boundary + bulk + cross)


def _floored_inverse(m):
    w, V = np.linalg.eigh(m)
    top = max(w[-1], 1e-300)
    return (V / np.maximum(w, EIG_FLOOR * top)) @ dag(V), top / max(w[0], 1e-300)


def left_gauge_fix_finite(base: FiniteCMPS, t: TangentFinite,
                          pr: VirtualDensityPair | None = None) -> TangentFinite:
    """Add the gauge direction that makes ``l V + sum R^dag l W`` vanish pointwise.

    ``X = l h`` obeys ``dX/dx = T~(X) - (l V + sum R^dag l W)`` with ``X(-L/2) = 0``;
    ``h`` and ``dh/dx`` are then recovered from ``X`` and the ODE itself.
    """
    _check_finite_tangent(base, t)
    pr = pr or propagate(base)
    l, R = pr.l, base.R
    src = dag(_ket_left(t.V, t.W, l, R))
    X = _accumulate(base, l, -src)
    n1 = base.N + 1
    ones = np.ones(base.q)
    h = np.zeros_like(X)
    dh = np.zeros_like(X)
    bulk_start = max(1, n1 // 20)
    for k in range(1, n1):
        li, cond = _floored_inverse(l[k])
        if k >= bulk_start and cond > BULK_COND_LIMIT:
            raise IllConditioned(f"l(x) has condition number {cond:.3e} at grid index {k}")
        h[k] = li @ X[k]
        dX = transfer_apply(base.Q[k], R[:, k], ones, X[k], "left") - src[k]
        dl = transfer_apply(base.Q[k], R[:, k], ones, l[k], "left")
        dh[k] = li @ (dX - dl @ h[k])
    # l is rank deficient at the left end; h has a finite limit there with
    # vL^dag h -> 0, so it is extrapolated and still generates a null direction
    h[0] = 4 * h[1] - 6 * h[2] + 4 * h[3] - h[4]
    dh[0] = (-25 * h[0] + 48 * h[1] - 36 * h[2] + 16 * h[3] - 3 * h[4]) / (12 * base.h)
    out = t + _gauge_direction(base, h, dh)
    return _enforce_left_end(base, out)


def _enforce_left_end(base: FiniteCMPS, t: TangentFinite) -> TangentFinite:
    """Least-norm change of the first samples so the condition holds exactly at ``x = -L/2``.

    With ``l = vL vL^dag`` the condition reads ``vL a + sum (R_a^dag vL) b_a = 0`` for
    the rows ``a = vL^dag V``, ``b_a = vL^dag W_a``.  Leaving the extrapolation
    error there would seed a constant gauge mode on the next fixing pass.
    """
    v = base.vL
    M = np.column_stack([v] + [dag(R) @ v for R in base.R[:, 0]])  # (D, q+1)
    rows = np.concatenate([(v.conj() @ t.V[0])[None], v.conj() @ t.W[:, 0]])  # (q+1, D)
    shift = np.linalg.pinv(M) @ (M @ rows)
    V, W = np.array(t.V), np.array(t.W)
    u = v / np.vdot(v, v).real
    V[0] -= np.outer(u, shift[0])
    W[:, 0] -= u[None, :, None] * shift[1:, None, :]
    return TangentFinite(V, W, t.wR)


def left_gauge_residual_finite(base: FiniteCMPS, t: TangentFinite,
                               pr: VirtualDensityPair | None = None) -> np.ndarray:
    """``||(l(x)| V x 1 + sum W x conj(R)||_F`` at every grid point."""
    pr = pr or propagate(base)
    return np.linalg.norm(_ket_left(t.V, t.W, pr.l, base.R), axis=(1, 2))


# --------------------------------------------------------------------------- uniform


def gauge_direction_uniform(base: UniformCMPS, h, p: float = 0.0) -> TangentUniform:
    h = np.asarray(h, dtype=complex)
    V = base.Q @ h - h @ base.Q + 1j * p * h
    W = base.R @ h - h @ base.R
    return TangentUniform(V, W, float(p))


def gauge_map_matrix(base: UniformCMPS, p: float) -> np.ndarray:
    """The linear map ``h -> ([Q,h] + i p h, [R_a,h])`` as a ``(q+1) D^2 x D^2`` matrix."""
    D = base.D
    cols = []
    for j in range(D * D):
        e = np.zeros(D * D, dtype=complex)
        e[j] = 1.0
        t = gauge_direction_uniform(base, e.reshape(D, D), p)
        cols.append(np.concatenate([t.V.ravel(), t.W.ravel()]))
    return np.array(cols).T


def base_overlap_uniform(base: UniformCMPS, fp: FixedPointPair, t: TangentUniform) -> complex:
    right = t.V @ fp.r + np.einsum("aij,jk,alk->il", t.W, fp.r, base.R.conj())
    return pair(fp.l, right)


def overlap_uniform(base: UniformCMPS, fp: FixedPointPair, t1: TangentUniform, t2: TangentUniform,
                    dense_budget: int | None = None):
    """Return ``(delta_coefficient, p0_extra)`` for ``<Phi_p[t1]|Phi_p'[t2]>``.

    Mismatched momenta give ``(0, 0)``; ``p0_extra`` is nonzero only at ``p = 0``.
    """
    if t1.p != t2.p:
        return 0j, 0j
    p = t1.p
    l, r, R = fp.l, fp.r, base.R
    op = TransferOperator(base, dense_budget=dense_budget)
    local = sum(np.trace(l @ t2.W[a] @ r @ dag(t1.W[a])) for a in range(base.q))
    ket_left = dag(t2.V) @ l + np.einsum("aji,jk,akl->il", t2.W.conj(), l, R)
    bra_left = l @ t1.V + np.einsum("aji,jk,akl->il", R.conj(), l, t1.W)
    ket_right = t2.V @ r + np.einsum("aij,jk,alk->il", t2.W, r, R.conj())
    bra_right = r @ dag(t1.V) + np.einsum("aij,jk,alk->il", R, r, t1.W.conj())

    def project(f):
        return f - r * pair(l, f)

    x_plus = project(op.solve(1j * p, project(bra_right), rank_one=(r, l)))
    x_minus = project(op.solve(-1j * p, project(ket_right), rank_one=(r, l)))
    delta = local + pair(ket_left, x_plus) + pair(bra_left, x_minus)
    extra = pair(l, ket_right) * pair(l, bra_right) if p == 0 else 0j
    return complex(delta), complex(extra)


def left_gauge_fix_uniform(base: UniformCMPS, fp: FixedPointPair, t: TangentUniform,
                           orthogonalize: bool = True, dense_budget: int | None = None) -> TangentUniform:
    """Gauge-equivalent tangent with ``l V + sum R^dag l W = 0``.

    At ``p = 0`` the component along the base state is removed first when
    ``orthogonalize`` is set; otherwise a nonzero component raises ``GaugeSingular``.
    """
    l, r, R = fp.l, fp.r, base.R
    p = t.p
    V = np.array(t.V)
    op = TransferOperator(base, dense_budget=dense_budget)
    if p == 0:
        c = base_overlap_uniform(base, fp, t)
        if abs(c) > ORTHOGONALITY_TOL:
            if not orthogonalize:
                raise GaugeSingular("tangent has a component along the base state at p = 0")
            V = V - c * np.eye(base.D)
    rhs = l @ V + np.einsum("aji,jk,akl->il", R.conj(), l, t.W)
    if p == 0:
        X = op.solve_left(0.0, rhs, rank_one=(l, r))
    else:
        X = op.solve_left(-1j * p, rhs)
    h = np.linalg.solve(l, X)
    return TangentUniform(V, t.W, p) + gauge_direction_uniform(base, h, p)
