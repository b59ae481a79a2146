"""
Expectation values of open-boundary finite states.

The virtual density matrices obey ``dl/dx = T~(l)`` from ``l(-L/2) = vL vL^dag``
and ``dr/dx = -T(r)`` from ``r(L/2) = vR vR^dag``.  Both are integrated with
RK4 on the sample grid, and every observable is a contraction of ``l`` and
``r`` with local insertions, sometimes with an ordered propagator between two
insertion points.  Single integrals use Simpson's rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ode
from .core import FiniteCMPS, TransferDressing, dag, transfer_apply
from .errors import GridTooCoarse, ShapeError

MIN_GRID_FOR_DERIVATIVES = 16
KERNEL_CUTOFF = 1e-16


@dataclass(frozen=True)
class VirtualDensityPair:
    l: np.ndarray
    r: np.ndarray
    norm: float
    norm_deviation: float  # max_x |tr(l r) - norm| / |norm|

    @property
    def traces(self) -> np.ndarray:
        return np.einsum("kij,kji->k", self.l, self.r)


@dataclass(frozen=True)
class InteractionKernel:
    """Two-body interaction depending on the separation ``|x - y|``.

    ``delta``: ``c * delta(x - y)``; ``exponential``: ``c * exp(-|x - y| / ell)``;
    ``tabulated``: values ``samples[k] = w(k * dz)``, linearly interpolated.
    """

    kind: str
    c: float = 0.0
    ell: float | None = None
    samples: np.ndarray | None = None
    dz: float | None = None

    def __post_init__(self):
        if self.kind not in ("delta", "exponential", "tabulated"):
            raise ShapeError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "exponential" and not (self.ell and self.ell > 0):
            raise ShapeError("exponential kernel needs ell > 0")
        if self.kind == "tabulated" and (self.samples is None or not self.dz or self.dz <= 0):
            raise ShapeError("tabulated kernel needs samples and dz > 0")
        if not np.isreal(self.c):
            raise ShapeError("kernel strength must be real")

    @classmethod
    def delta(cls, c: float) -> "InteractionKernel":
        return cls("delta", float(c))

    @classmethod
    def exponential(cls, c: float, ell: float) -> "InteractionKernel":
        return cls("exponential", float(c), float(ell))

    @classmethod
    def tabulated(cls, samples, dz: float) -> "InteractionKernel":
        return cls("tabulated", 0.0, None, np.asarray(samples, dtype=float), float(dz))

    def __call__(self, z) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        if self.kind == "exponential":
            return self.c * np.exp(-z / self.ell)
        if self.kind == "tabulated":
            zs = self.dz * np.arange(len(self.samples))
            return np.interp(z, zs, self.samples, right=0.0)
        raise ShapeError("the delta kernel has no pointwise values")


def _require_open(state: FiniteCMPS):
    if state.boundary != "open":
        raise ShapeError("finite-state evaluation requires open boundary conditions")


def _generator(hg: _ode.HalfGrid, signs, side: str, sign: float = 1.0):
    def F(t, y):
        return sign * transfer_apply(hg.Q[t], hg.R[t], signs, y, side)
    return F


def propagate(state: FiniteCMPS) -> VirtualDensityPair:
    """Integrate ``l(x)`` forward and ``r(x)`` backward over the whole grid."""
    _require_open(state)
    hg = _ode.HalfGrid(state)
    ones = np.ones(state.q)
    l0 = np.outer(state.vL, state.vL.conj())
    r0 = np.outer(state.vR, state.vR.conj())
    l = _ode.rk4_path(_generator(hg, ones, "left"), l0, state.h, 0, state.N, hermitian=True)
    r = _ode.rk4_path(_generator(hg, ones, "right", -1.0), r0, state.h, state.N, 0, hermitian=True)[::-1]
    traces = np.einsum("kij,kji->k", l, r)
    mid = traces[state.N // 2].real
    dev = float(np.max(np.abs(traces - mid)) / abs(mid)) if mid != 0 else np.inf
    return VirtualDensityPair(l, r, float(mid), dev)


def norm(state: FiniteCMPS, pair: VirtualDensityPair | None = None) -> float:
    pair = pair or propagate(state)
    return pair.norm


def _scale(pair, normalized):
    return pair.norm if normalized else 1.0


def density_profile(state: FiniteCMPS, alpha=0, beta=None, pair=None, normalized: bool = True) -> np.ndarray:
    """``<psi_alpha^dag psi_beta>(x)`` at every grid point."""
    pair = pair or propagate(state)
    a = state.species.index(alpha)
    b = a if beta is None else state.species.index(beta)
    Ra, Rb = state.R[a], state.R[b]
    vals = np.einsum("kij,kjl,klm,kim->k", pair.l, Rb, pair.r, Ra.conj())
    return vals / _scale(pair, normalized)


def _grid_index(state: FiniteCMPS, x: float) -> int:
    k = (x + state.L / 2) / state.h
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, state.N) or not 0 <= kr <= state.N:
        raise ShapeError(f"position {x} is not a grid point")
    return kr


def two_point(state: FiniteCMPS, alpha, beta, x: float, y: float, pair=None,
              normalized: bool = True) -> complex:
    """``<psi_alpha^dag(x) psi_beta(y)>`` with statistics-dressed propagation.

    Left of both insertions the propagator is dressed by both species; between
    them it carries the dressing of the insertion further to the right.  At
    coincident points both orderings are averaged.
    """
    _require_open(state)
    pair = pair or propagate(state)
    sp = state.species
    a, b = sp.index(alpha), sp.index(beta)
    ix, iy = _grid_index(state, x), _grid_index(state, y)
    hg = _ode.HalfGrid(state)
    lo = min(ix, iy)
    l0 = np.outer(state.vL, state.vL.conj())
    sab = TransferDressing.double(a, b).signs(sp)
    w = _ode.rk4_path(_generator(hg, sab, "left"), l0, state.h, 0, lo)[-1]
    Ra, Rb = state.R[a], state.R[b]
    results = []
    if ix >= iy:
        # annihilate beta at y first, then propagate with alpha dressing to x
        u = dag(Rb[iy]) @ w
        sa = TransferDressing.single(a).signs(sp)
        u = _ode.rk4_path(_generator(hg, sa, "left"), u, state.h, iy, ix)[-1]
        results.append(np.trace(dag(u) @ pair.r[ix] @ dag(Ra[ix])))
    if iy >= ix:
        u = w @ Ra[ix]
        sb = TransferDressing.single(b).signs(sp)
        u = _ode.rk4_path(_generator(hg, sb, "left"), u, state.h, ix, iy)[-1]
        results.append(np.trace(dag(u) @ Rb[iy] @ pair.r[iy]))
    return complex(np.mean(results)) / _scale(pair, normalized)


def two_point_profile(state: FiniteCMPS, alpha, beta, y: float, pair=None,
                      normalized: bool = True) -> np.ndarray:
    """``<psi_alpha^dag(x) psi_beta(y)>`` for every grid point ``x`` at fixed ``y``.

    Equivalent to calling :func:`two_point` at each ``x`` but linear in the
    grid size: the branch ``x >= y`` is one forward pass from ``y``, the branch
    ``x < y`` one backward pass of the right vector ``R_beta r`` with the
    ``beta`` dressing.
    """
    _require_open(state)
    pair = pair or propagate(state)
    sp = state.species
    a, b = sp.index(alpha), sp.index(beta)
    iy = _grid_index(state, y)
    hg = _ode.HalfGrid(state)
    l0 = np.outer(state.vL, state.vL.conj())
    sab = TransferDressing.double(a, b).signs(sp)
    w = _ode.rk4_path(_generator(hg, sab, "left"), l0, state.h, 0, iy)
    Ra, Rb = state.R[a], state.R[b]
    out = np.empty(state.N + 1, dtype=complex)
    sa = TransferDressing.single(a).signs(sp)
    u = _ode.rk4_path(_generator(hg, sa, "left"), dag(Rb[iy]) @ w[-1], state.h, iy, state.N)
    out[iy:] = np.einsum("kji,kjl,kil->k", u.conj(), pair.r[iy:], Ra[iy:].conj())
    if iy > 0:
        sb = TransferDressing.single(b).signs(sp)
        v = _ode.rk4_path(_generator(hg, sb, "right", -1.0), Rb[iy] @ pair.r[iy], state.h, iy, 0)[::-1]
        # pair(w R_a, v) = tr(R_a^dag w^dag v)
        out[:iy] = np.einsum("kji,kjl,kil->k", w[:iy].conj(), v[:iy], Ra[:iy].conj())
        same = np.mean([out[iy], np.trace(dag(w[-1] @ Ra[iy]) @ Rb[iy] @ pair.r[iy])])
        out[iy] = same
    return out / _scale(pair, normalized)


def boundary_check(state: FiniteCMPS) -> dict:
    """Norms of ``vL^dag R_a(-L/2)`` and ``R_a(L/2) vR`` per species."""
    _require_open(state)
    left = [float(np.linalg.norm(state.vL.conj() @ state.R[a, 0])) for a in range(state.q)]
    right = [float(np.linalg.norm(state.R[a, -1] @ state.vR)) for a in range(state.q)]
    return {"left": left, "right": right}


def _derivative(samples, h):
    return np.gradient(samples, h, axis=0, edge_order=2)


def _pair_insertion(R):
    # (l| sum_ab (R_a R_b) x conj(R_a R_b) as the list of products R_a R_b
    q = R.shape[0]
    return np.array([R[a] @ R[b] for a in range(q) for b in range(q)])


def energy(state: FiniteCMPS, mass=1.0, v=None, kernel: InteractionKernel | None = None,
           pair=None, dR=None, normalized: bool = True):
    """Kinetic, potential and interaction energy of the generic Hamiltonian.

    ``mass`` is a scalar or one value per species; ``v`` is a scalar or a
    sample array; ``dR`` optionally supplies ``dR/dx`` samples with shape
    ``(q, N+1, D, D)``.  The interaction is ``(1/2) sum_ab int int w(x - y)
    psi_a^dag(x) psi_b^dag(y) psi_b(y) psi_a(x)``.
    """
    _require_open(state)
    if dR is None and state.N < MIN_GRID_FOR_DERIVATIVES:
        raise GridTooCoarse(f"N={state.N} is too coarse for finite-difference derivatives")
    pair = pair or propagate(state)
    h, q = state.h, state.q
    masses = np.broadcast_to(np.asarray(mass, dtype=float), (q,))
    l, r, Q = pair.l, pair.r, state.Q

    kinetic = 0.0
    for a in range(q):
        Ra = state.R[a]
        dRa = _derivative(Ra, h) if dR is None else np.asarray(dR)[a]
        Da = Q @ Ra - Ra @ Q + dRa
        dens = np.einsum("kij,kjl,klm,kim->k", l, Da, r, Da.conj())
        kinetic += _ode.integrate(dens, h).real / (2 * masses[a])

    potential = 0.0
    if v is not None:
        vs = np.broadcast_to(np.asarray(v, dtype=float), (state.N + 1,))
        total = sum(density_profile(state, a, a, pair, normalized=False) for a in range(q))
        potential = float(_ode.integrate(vs * total, h).real)

    interaction = 0.0
    if kernel is not None:
        interaction = _interaction(state, pair, kernel)

    s = _scale(pair, normalized)
    return kinetic / s, potential / s, interaction / s


def _interaction(state: FiniteCMPS, pair: VirtualDensityPair, kernel: InteractionKernel) -> float:
    l, r, h = pair.l, pair.r, state.h
    R = np.moveaxis(state.R, 1, 0)  # (N+1, q, D, D)
    if kernel.kind == "delta":
        M = np.array([_pair_insertion(Rk) for Rk in R])  # (N+1, q*q, D, D)
        dens = np.einsum("kij,kpjl,klm,kpim->k", l, M, r, M.conj())
        return 0.5 * kernel.c * float(_ode.integrate(dens, h).real)

    N = state.N
    zmax = N
    w = kernel(h * np.arange(N + 1))
    big = np.nonzero(np.abs(w) > KERNEL_CUTOFF * max(np.max(np.abs(w)), 1e-300))[0]
    if big.size == 0:
        return 0.0
    zmax = int(big[-1])
    hg = _ode.HalfGrid(state)
    F = _generator(hg, np.ones(state.q), "left")
    # right contraction vector at each y: sum_a R_a r R_a^dag
    right = np.einsum("kaij,kjl,kaml->kim", R, r, R.conj())
    start = np.einsum("kaji,kjl,kalm->kim", R.conj(), l, R)  # sum_a R_a^dag l R_a
    wx = _ode.trapezoid_weights(N + 1, h)
    total = 0.0
    stack = np.empty((0,) + l.shape[1:], dtype=complex)
    first = 0  # grid index of stack[0]
    for j in range(N + 1):
        stack = np.concatenate([stack, start[j][None]])
        if j - first > zmax:
            stack = stack[1:]
            first += 1
        ks = np.arange(first, j + 1)
        g = np.einsum("kij,ij->k", stack.conj(), right[j])
        # inner trapezoid over y in [x_k, L/2]: half weight at both ends
        wy = np.where(ks == j, 0.5 * h, h)
        if j == N:
            wy = np.where(ks == j, 0.0, 0.5 * h)
        total += float(np.real(np.sum(wx[ks] * wy * w[j - ks] * g)))
        if j < N:
            stack = _ode.rk4_step(F, 2 * j, stack, h, True)
    return total
