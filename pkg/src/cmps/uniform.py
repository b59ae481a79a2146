"""
Thermodynamic-limit observables of uniform states.

Every quantity is a contraction of the fixed points ``l`` and ``r`` of the
transfer operator with local insertions, possibly separated by ``exp(T x)``
or by a resolvent of ``T``.  Small bond dimensions use the dense ``D^2 x D^2``
matrix; larger ones go through matrix-free Krylov methods (ARPACK for the
spectrum, GMRES for linear solves, ``expm_multiply`` for exponentials).

Right vectors are ``D x D`` matrices ``f`` with ``(A x conj(B)) f = A f B^dag``;
left vectors pair through ``(l|f) = tr(l^dag f)``.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .config import dense_budget as _dense_budget
from .core import TransferDressing, UniformCMPS, dag, dense_transfer, hermitize, transfer_apply
from .errors import BadFixedPoint, NonInjective, ParityRequired, SolveFailed, ShapeError
from .finite import InteractionKernel

GAP_TOL = 1e-8
EIG_TOL = 1e-12
SOLVE_TOL = 1e-10
MATCH_TOL = 1e-9
MATCH_VERIFY_TOL = 1e-7
MAX_ITER = 10_000


class RegularityWarning(UserWarning):
    """Raised when an observable relies on regularity that the state violates."""


def pair(l: np.ndarray, f: np.ndarray) -> complex:
    """The pairing ``(l|f) = tr(l^dagger f)``."""
    return complex(np.vdot(l, f))


# --------------------------------------------------------------------------- operator


class TransferOperator:
    """Dressed transfer operator acting on ``D x D`` matrices.

    Holds the dense matrix when ``D`` is within the dense budget; otherwise
    every operation is matrix-free.
    """

    def __init__(self, state: UniformCMPS, dressing: TransferDressing | None = None,
                 dense_budget: int | None = None):
        self.state = state
        self.D = state.D
        self.signs = (dressing or TransferDressing.plain()).signs(state.species)
        budget = _dense_budget(dense_budget)
        self.dense = dense_transfer(state, dressing, max_dim=max(budget, 1)) if state.D <= budget else None

    @property
    def is_dense(self) -> bool:
        return self.dense is not None

    def right(self, f):
        return transfer_apply(self.state.Q, self.state.R, self.signs, f, "right")

    def left(self, f):
        return transfer_apply(self.state.Q, self.state.R, self.signs, f, "left")

    def _vec(self, fn):
        D = self.D

        def mv(v):
            return fn(np.asarray(v).reshape(D, D)).ravel()
        return mv

    def linear_operator(self, shift: complex = 0.0, rank_one=None):
        """``T + shift`` (plus ``|a)(b|`` when ``rank_one=(a, b)``) as a LinearOperator."""
        D = self.D

        def mv(v):
            f = np.asarray(v).reshape(D, D)
            out = self.right(f) + shift * f
            if rank_one is not None:
                out = out + rank_one[0] * pair(rank_one[1], f)
            return out.ravel()

        def rmv(v):
            f = np.asarray(v).reshape(D, D)
            out = self.left(f) + np.conj(shift) * f
            if rank_one is not None:
                out = out + rank_one[1] * np.conj(pair(rank_one[0], f))
            return out.ravel()

        return spla.LinearOperator((D * D, D * D), matvec=mv, rmatvec=rmv, dtype=complex)

    def apply_power(self, f, n: int):
        for _ in range(n):
            f = self.right(f)
        return f

    def solve(self, shift: complex, b, rank_one=None, tol: float = SOLVE_TOL):
        """Solve ``(-T + shift [+ |a)(b|]) x = b`` for a right vector ``x``."""
        D = self.D
        if self.is_dense:
            M = -self.dense + shift * np.eye(D * D)
            if rank_one is not None:
                M = M + np.outer(rank_one[0].ravel(), rank_one[1].ravel().conj())
            try:
                x = np.linalg.solve(M, np.asarray(b).ravel())
            except np.linalg.LinAlgError as exc:
                raise SolveFailed(str(exc)) from None
            return x.reshape(D, D)
        op = self.linear_operator(-shift, None if rank_one is None else (-rank_one[0], rank_one[1]))
        neg = spla.LinearOperator(op.shape, matvec=lambda v: -op.matvec(v), dtype=complex)
        bb = np.asarray(b).ravel()
        x, info = spla.gmres(neg, bb, rtol=tol, atol=0.0, restart=min(D * D, 200), maxiter=MAX_ITER)
        if info != 0 or np.linalg.norm(neg.matvec(x) - bb) > 10 * tol * max(np.linalg.norm(bb), 1e-300):
            raise SolveFailed(f"GMRES did not converge (info={info})")
        return x.reshape(D, D)

    def solve_left(self, shift: complex, b, rank_one=None, tol: float = SOLVE_TOL):
        """Solve ``T~(x) + shift x [+ a (b|x)] = b`` for a left vector ``x``."""
        D = self.D
        rhs = np.asarray(b).ravel()
        if self.is_dense:
            M = self.dense.conj().T + shift * np.eye(D * D)
            if rank_one is not None:
                M = M + np.outer(rank_one[0].ravel(), rank_one[1].ravel().conj())
            try:
                return np.linalg.solve(M, rhs).reshape(D, D)
            except np.linalg.LinAlgError as exc:
                raise SolveFailed(str(exc)) from None

        def mv(v):
            f = np.asarray(v).reshape(D, D)
            out = self.left(f) + shift * f
            if rank_one is not None:
                out = out + rank_one[0] * pair(rank_one[1], f)
            return out.ravel()

        A = spla.LinearOperator((D * D, D * D), matvec=mv, dtype=complex)
        x, info = spla.gmres(A, rhs, rtol=tol, atol=0.0, restart=min(D * D, 200), maxiter=MAX_ITER)
        if info != 0:
            raise SolveFailed(f"GMRES did not converge (info={info})")
        return x.reshape(D, D)

    def expm_apply(self, f, xs):
        """``exp(T x) f`` for each ``x`` in ``xs``; returns shape ``(len(xs), D, D)``."""
        D = self.D
        xs = np.asarray(xs, dtype=float)
        v = np.asarray(f).ravel()
        out = np.empty((len(xs), D, D), dtype=complex)
        for i, x in enumerate(xs):
            if self.is_dense:
                out[i] = (sla.expm(self.dense * x) @ v).reshape(D, D)
            else:
                op = self.linear_operator() * x
                trace = x * (2 * np.trace(self.state.Q).real * D + sum(
                    s * abs(np.trace(R)) ** 2 for s, R in zip(self.signs, self.state.R)))
                out[i] = spla.expm_multiply(op, v, traceA=trace).reshape(D, D)
        return out

    def spectrum(self, k: int = 3):
        """Eigenvalues sorted by decreasing real part (all of them when dense)."""
        if self.is_dense:
            ev = np.linalg.eigvals(self.dense)
        else:
            k = min(k, self.D * self.D - 2)
            ev = spla.eigs(self.linear_operator(), k=k, which="LR", tol=EIG_TOL,
                           maxiter=MAX_ITER, return_eigenvectors=False)
        return ev[np.argsort(-ev.real, kind="stable")]


# --------------------------------------------------------------------------- fixed points


@dataclass(frozen=True)
class FixedPointPair:
    mu: float
    l: np.ndarray
    r: np.ndarray
    gap: float
    method: str
    residual_l: float = 0.0
    residual_r: float = 0.0


def _null_vector(M: np.ndarray) -> np.ndarray:
    _, _, vh = np.linalg.svd(M)
    return vh[-1].conj()


def _dense_fixed_points(state, T):
    D = state.D
    ev = np.linalg.eigvals(T)
    ev = ev[np.argsort(-ev.real, kind="stable")]
    mu = ev[0].real
    gap = (mu - ev[1].real) if ev.size > 1 else np.inf
    if gap < GAP_TOL:
        raise NonInjective(f"leading eigenvalue is degenerate (gap {gap:.3e})")
    Ts = T - mu * np.eye(D * D)
    r = _null_vector(Ts)
    l = _null_vector(Ts.conj().T)
    # one Rayleigh correction of the shift
    corr = np.vdot(l, Ts @ r) / np.vdot(l, r)
    mu = mu + corr.real
    Ts = T - mu * np.eye(D * D)
    r = _null_vector(Ts)
    l = _null_vector(Ts.conj().T)
    return mu, l.reshape(D, D), r.reshape(D, D), gap


def _iterative_fixed_points(state, op: TransferOperator):
    D = state.D
    k = min(4, D * D - 2)
    A = op.linear_operator()
    try:
        ev, vr = spla.eigs(A, k=k, which="LR", tol=EIG_TOL, maxiter=MAX_ITER)
        evl, vl = spla.eigs(A.H, k=k, which="LR", tol=EIG_TOL, maxiter=MAX_ITER)
    except spla.ArpackNoConvergence as exc:
        raise NonInjective(f"Arnoldi iteration did not converge: {exc}") from None
    order = np.argsort(-ev.real, kind="stable")
    ev, vr = ev[order], vr[:, order]
    vl = vl[:, np.argsort(-evl.real, kind="stable")]
    mu = ev[0].real
    gap = mu - ev[1].real
    if gap < GAP_TOL:
        raise NonInjective(f"leading eigenvalue is degenerate (gap {gap:.3e})")
    r = vr[:, 0].reshape(D, D)
    l = vl[:, 0].reshape(D, D)
    # polish with a few steps of inverse iteration on the shifted operator
    shifted = UniformCMPS(state.Q - 0.5 * mu * np.eye(D), state.R, state.species)
    sop = TransferOperator(shifted, dense_budget=0)
    for _ in range(3):
        r = _polish(sop, r, "right")
        l = _polish(sop, l, "left")
    return mu, l, r, gap


def _polish(op: TransferOperator, f, side):
    # one step of inverse iteration with a rank-one deflation keeping f fixed in norm
    D = op.D
    f = f / np.linalg.norm(f)
    apply = op.right if side == "right" else op.left
    res = apply(f)
    if np.linalg.norm(res) < 1e-15:
        return f

    def mv(v):
        x = np.asarray(v).reshape(D, D)
        return (apply(x) + f * pair(f, x)).ravel()

    A = spla.LinearOperator((D * D, D * D), matvec=mv, dtype=complex)
    # solve (T + |f)(f|) delta = -T f, then f <- f + delta
    delta, info = spla.gmres(A, -res.ravel(), rtol=1e-14, atol=0.0, restart=min(D * D, 200), maxiter=200)
    return f + delta.reshape(D, D)


def _normalize_pair(l, r):
    r = r / np.trace(r)
    r = hermitize(r)
    l = l / np.trace(l)
    l = hermitize(l)
    l = l / np.trace(l @ r).real
    return l, r


def fixed_points(state: UniformCMPS, dense_budget: int | None = None) -> FixedPointPair:
    """Fixed points of a state assumed already normalized (leading eigenvalue 0)."""
    return normalize(state, dense_budget)[1]


def normalize(state: UniformCMPS, dense_budget: int | None = None):
    """Shift ``Q`` so the leading transfer eigenvalue is zero; return state and fixed points."""
    op = TransferOperator(state, dense_budget=dense_budget)
    D = state.D
    if op.is_dense:
        mu, l, r, gap = _dense_fixed_points(state, op.dense)
        method = "dense"
    else:
        mu, l, r, gap = _iterative_fixed_points(state, op)
        method = "iterative"
    shifted = UniformCMPS(state.Q - 0.5 * mu * np.eye(D), state.R, state.species)
    l, r = _normalize_pair(l, r)
    for name, m in (("l", l), ("r", r)):
        w = np.linalg.eigvalsh(m)
        if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
            raise BadFixedPoint(f"fixed point {name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    ones = np.ones(state.q)
    res_r = float(np.linalg.norm(transfer_apply(shifted.Q, shifted.R, ones, r, "right")))
    res_l = float(np.linalg.norm(transfer_apply(shifted.Q, shifted.R, ones, l, "left")))
    return shifted, FixedPointPair(float(mu), l, r, float(gap), method, res_l, res_r)


# --------------------------------------------------------------------------- local observables


def density(state: UniformCMPS, fp: FixedPointPair, alpha=0, beta=None) -> complex:
    a = state.species.index(alpha)
    b = a if beta is None else state.species.index(beta)
    return complex(np.trace(fp.l @ state.R[b] @ fp.r @ dag(state.R[a])))


@dataclass(frozen=True)
class EnergyDensities:
    kinetic: float
    potential: float
    interaction: float
    imag_discarded: float = 0.0

    def __iter__(self):
        return iter((self.kinetic, self.potential, self.interaction))


def kinetic_density(state, fp, mass=1.0) -> complex:
    masses = np.broadcast_to(np.asarray(mass, dtype=float), (state.q,))
    t = 0.0
    for a in range(state.q):
        C = state.Q @ state.R[a] - state.R[a] @ state.Q
        t += np.trace(fp.l @ C @ fp.r @ dag(C)) / (2 * masses[a])
    return complex(t)


def interaction_density(state, fp, kernel: InteractionKernel, dense_budget: int | None = None) -> complex:
    """``(1/2) sum_ab int dz w(z) <psi_a^dag(0) psi_b^dag(z) psi_b(z) psi_a(0)>``."""
    R, l, r = state.R, fp.l, fp.r
    q = state.q
    if kernel.kind == "delta":
        total = 0.0
        for a in range(q):
            for b in range(q):
                M = R[a] @ R[b]
                total += np.trace(l @ M @ r @ dag(M))
        return complex(0.5 * kernel.c * total)
    N_r = np.einsum("aij,jk,alk->il", R, r, R.conj())
    N_l = np.einsum("aji,jk,akl->il", R.conj(), l, R)  # left insertion (l|N as a matrix
    op = TransferOperator(state, dense_budget=dense_budget)
    if kernel.kind == "exponential":
        x = op.solve(1.0 / kernel.ell, N_r)
        return complex(kernel.c * pair(N_l, x))
    zs = kernel.dz * np.arange(len(kernel.samples))
    vals = np.array([pair(N_l, f) for f in op.expm_apply(N_r, zs)])
    return complex(np.trapezoid(np.asarray(kernel.samples) * vals, zs))


def energy_densities(state: UniformCMPS, fp: FixedPointPair, mass=1.0, v: float | None = None,
                     kernel: InteractionKernel | None = None,
                     dense_budget: int | None = None) -> EnergyDensities:
    t = kinetic_density(state, fp, mass)
    vbar = complex(0.0)
    if v is not None:
        vbar = v * sum(density(state, fp, a, a) for a in range(state.q))
    w = complex(0.0) if kernel is None else interaction_density(state, fp, kernel, dense_budget)
    imag = max(abs(t.imag), abs(vbar.imag), abs(w.imag))
    return EnergyDensities(t.real, vbar.real, w.real, imag)


# --------------------------------------------------------------------------- dressed fixed points


def _dressed_fixed_points(state, fp, alpha, parity):
    """``(l_alpha, r_alpha)``: fixed points of the alpha-dressed transfer operator."""
    if not state.species.is_fermion(alpha):
        return fp.l, fp.r
    if parity is None:
        raise ParityRequired(f"species {state.species.names[alpha]!r} is fermionic; supply a parity structure")
    if parity.D != state.D:
        raise ShapeError("parity dimension does not match the state")
    P = parity.P
    return fp.l @ P, P @ fp.r


@dataclass(frozen=True)
class CorrelationSeries:
    x: np.ndarray
    values: np.ndarray
    long_range: complex


def correlation(state: UniformCMPS, fp: FixedPointPair, alpha, beta, x_grid, parity=None,
                dense_budget: int | None = None, threads: int = 1) -> CorrelationSeries:
    """``C(x) = <psi_alpha^dag(x) psi_beta(0)>`` on a grid of separations.

    For ``x >= 0`` the propagator between the insertions carries the dressing
    of ``alpha``; for ``x < 0`` that of ``beta``.  The reported long-range value
    is the ``x -> +infinity`` limit.
    """
    sp = state.species
    a, b = sp.index(alpha), sp.index(beta)
    xs = np.asarray(x_grid, dtype=float)
    la, ra = _dressed_fixed_points(state, fp, a, parity)
    if np.any(xs < 0):
        _dressed_fixed_points(state, fp, b, parity)
    Ra, Rb = state.R[a], state.R[b]
    vals = np.empty(xs.shape, dtype=complex)
    pos, neg = xs >= 0, xs < 0
    if pos.any():
        op = TransferOperator(state, TransferDressing.single(a), dense_budget)
        fs = _map_chunks(lambda chunk: op.expm_apply(fp.r @ dag(Ra), chunk), xs[pos], threads)
        vals[pos] = [np.trace(fp.l @ Rb @ f) for f in fs]
    if neg.any():
        op = TransferOperator(state, TransferDressing.single(b), dense_budget)
        fs = _map_chunks(lambda chunk: op.expm_apply(Rb @ fp.r, chunk), -xs[neg], threads)
        vals[neg] = [np.trace(fp.l @ f @ dag(Ra)) for f in fs]
    long_range = pair(fp.l, Rb @ ra) * pair(la, fp.r @ dag(Ra))
    return CorrelationSeries(xs, vals, complex(long_range))


def _map_chunks(fn, xs, threads):
    if threads <= 1 or len(xs) < 2:
        return fn(xs)
    chunks = np.array_split(xs, min(threads, len(xs)))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts)


# --------------------------------------------------------------------------- momentum space


@dataclass(frozen=True)
class MomentumOccupation:
    condensate_weight: complex
    p: np.ndarray
    values: np.ndarray


def momentum_occupation(state: UniformCMPS, fp: FixedPointPair, alpha=0, beta=None, p_grid=(0.0,),
                        parity=None, dense_budget: int | None = None, threads: int = 1) -> MomentumOccupation:
    """Fourier transform of ``C(x)``: condensate weight and smooth part on ``p_grid``."""
    sp = state.species
    a = sp.index(alpha)
    b = a if beta is None else sp.index(beta)
    la, ra = _dressed_fixed_points(state, fp, a, parity)
    Ra, Rb = state.R[a], state.R[b]
    l, r = fp.l, fp.r
    weight = pair(l, ra @ dag(Ra)) * pair(la, Rb @ r)
    op = TransferOperator(state, TransferDressing.single(a), dense_budget)

    def project(f):
        return f - ra * pair(la, f)

    b_plus = project(Rb @ r)
    b_minus = project(r @ dag(Ra))
    ps = np.atleast_1d(np.asarray(p_grid, dtype=float))

    def smooth(p):
        xp = project(op.solve(1j * p, b_plus, rank_one=(ra, la)))
        xm = project(op.solve(-1j * p, b_minus, rank_one=(ra, la)))
        return pair(l, xp @ dag(Ra)) + pair(l, Rb @ xm)

    if threads > 1 and len(ps) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = np.array(list(pool.map(smooth, ps)))
    else:
        vals = np.array([smooth(p) for p in ps])
    return MomentumOccupation(complex(weight), ps, vals)


def transfer_norm(state: UniformCMPS) -> float:
    """Spectral norm of the plain transfer operator (sets the momentum scale)."""
    return float(np.linalg.norm(dense_transfer(state), 2))


def tail_coefficient(state: UniformCMPS, fp: FixedPointPair, alpha=0, beta=None) -> complex:
    """Coefficient ``c`` of the large-momentum expansion ``n(p) ~ c / p^4``."""
    sp = state.species
    a = sp.index(alpha)
    b = a if beta is None else sp.index(beta)
    op = TransferOperator(state, TransferDressing.single(a), dense_budget=0)
    Ra, Rb = state.R[a], state.R[b]
    A3 = pair(fp.l, op.apply_power(Rb @ fp.r, 3) @ dag(Ra))
    B3 = pair(fp.l, Rb @ op.apply_power(fp.r @ dag(Ra), 3))
    return A3 + B3


def uv_cutoff(state: UniformCMPS, fp: FixedPointPair, alpha=0, beta=None) -> float:
    """Momentum cutoff ``Lambda`` with ``Lambda^4`` the ``p^-4`` tail coefficient."""
    from .regularity import check_first_order

    if not check_first_order(state).passed:
        warnings.warn("state violates the regularity condition; the p^-4 tail is not guaranteed",
                      RegularityWarning, stacklevel=2)
    c = tail_coefficient(state, fp, alpha, beta)
    a = state.species.index(alpha)
    b = a if beta is None else state.species.index(beta)
    if a == b:
        if c.real < -1e-10 * max(1.0, abs(c)):
            warnings.warn(f"tail coefficient {c.real:.3e} is negative", RegularityWarning, stacklevel=2)
        return float(max(c.real, 0.0) ** 0.25)
    return float(abs(c) ** 0.25)


def correlation_length(state: UniformCMPS, fp: FixedPointPair | None = None, alpha=None,
                       dense_budget: int | None = None) -> float | None:
    """``1 / |Re lambda_1|`` for the subdominant transfer eigenvalue; ``None`` for ``D = 1``."""
    if state.D == 1:
        return None
    dressing = TransferDressing.plain() if alpha is None else TransferDressing.single(state.species.index(alpha))
    ev = TransferOperator(state, dressing, dense_budget).spectrum(k=3)
    return float(1.0 / abs(ev[1].real))


# --------------------------------------------------------------------------- matching


@dataclass(frozen=True)
class MatchResult:
    lam: complex
    equivalent: bool
    g: np.ndarray | None = None
    phi: float | None = None
    residual: float | None = None


def mixed_transfer(s1: UniformCMPS, s2: UniformCMPS) -> np.ndarray:
    """``Q2 x 1 + 1 x conj(Q1) + sum R2 x conj(R1)``: the fidelity generator."""
    D = s1.D
    one = np.eye(D)
    T = np.kron(s2.Q, one) + np.kron(one, s1.Q.conj())
    for R1, R2 in zip(s1.R, s2.R):
        T = T + np.kron(R2, R1.conj())
    return T


def match_states(s1: UniformCMPS, s2: UniformCMPS, fp1: FixedPointPair | None = None) -> MatchResult:
    """Decide whether two normalized states are gauge equivalent.

    When they are, the returned ``g`` satisfies ``s2 == gauge_uniform(s1, g)``
    up to the phase shift ``Q2 = g^-1 Q1 g + i phi``.
    """
    if s1.D != s2.D or s1.q != s2.q or s1.species.statistics != s2.species.statistics:
        raise ShapeError("states differ in bond dimension or species")
    T = mixed_transfer(s1, s2)
    ev = np.linalg.eigvals(T)
    lam = complex(ev[np.argmax(ev.real)])
    if abs(lam.real) > MATCH_TOL:
        return MatchResult(lam, False)
    D = s1.D
    f = _null_vector(T - lam * np.eye(D * D)).reshape(D, D)
    fp1 = fp1 or fixed_points(s1)
    forward = f @ np.linalg.inv(fp1.r)  # maps s1 onto s2 by similarity
    try:
        g = np.linalg.inv(forward)
    except np.linalg.LinAlgError:
        return MatchResult(lam, False)
    gi = forward
    phi = lam.imag
    scale = max(np.linalg.norm(s2.Q), np.linalg.norm(s2.R), 1.0)
    res = np.linalg.norm(s2.Q - (gi @ s1.Q @ g + 1j * phi * np.eye(D)))
    res = max(res, max(np.linalg.norm(R2 - gi @ R1 @ g) for R1, R2 in zip(s1.R, s2.R)))
    res = float(res / scale)
    return MatchResult(lam, res <= MATCH_VERIFY_TOL, g, float(phi), res)
