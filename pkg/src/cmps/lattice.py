"""
Lattice discretization of continuous states, used as an independent oracle.

A state is mapped to a matrix product state on sites of spacing ``a`` with
tensors

    A^0 = 1 + a Q,   A^a = sqrt(a) R_a,
    A^(a,b) = (a/2) [R_a R_b + eta_ab R_b R_a]  (a < b),   A^(a,a) = (a/2) R_a^2,

where the two-particle label ``(a, b)`` stands for ``c_a^dag c_b^dag |0>``.
Lattice expectation values are computed in the orthonormal occupation basis,
so the bosonic double occupation picks up a factor ``sqrt(2)`` and the
fermionic one does not exist.  Fermionic hopping carries the parity of the
site it passes.  Field operators are identified as ``psi = c / sqrt(a)``.

Everything here is deliberately dense and simple: fixed points of the lattice
transfer matrix come from a full eigendecomposition, and finite chains are
contracted site by site.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import factorial
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .core import FiniteCMPS, SpeciesTable, UniformCMPS, dag, dense_transfer
from .errors import GridMismatch, NonInjective, ShapeError, ValidationError

MIN_IDENTITY_STEPS = 16
MAX_CELL_OCCUPATION = 4
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class LatticeMPS:
    """Site tensors keyed by occupation label.

    Labels are ``()`` for the empty site, ``(a,)`` for one particle and
    ``(a, b)`` with ``a <= b`` for two.  Uniform states store one ``(D, D)``
    matrix per label; finite chains store ``(M, D, D)`` stacks with site ``n``
    at ``x = -L/2 + n a``.
    """

    a: float
    nmax: int
    species: SpeciesTable
    tensors: dict
    uniform: bool
    vL: np.ndarray | None = None
    vR: np.ndarray | None = None
    x: np.ndarray | None = None

    @property
    def labels(self) -> list:
        return list(self.tensors)

    @property
    def sites(self) -> int | None:
        return None if self.uniform else len(self.x)

    def basis_norm(self, label) -> float:
        """Norm of the label's product of creation operators on ``|0>``; 0 marks a Pauli-forbidden state."""
        return _occupation_norm(label, self.species)

    def orthonormal_tensors(self) -> tuple[list, np.ndarray]:
        """Labels of existing basis states and their tensors in the orthonormal basis."""
        keep = [s for s in self.tensors if self.basis_norm(s) > 0]
        return keep, np.array([self.basis_norm(s) * self.tensors[s] for s in keep])


def _site_tensors(Q, R, species: SpeciesTable, a: float, nmax: int) -> dict:
    D = Q.shape[-1]
    eye = np.broadcast_to(np.eye(D), Q.shape)
    eta = species.eta
    tensors = {(): eye + a * Q}
    for al in range(species.q):
        tensors[(al,)] = np.sqrt(a) * R[al]
    if nmax == 2:
        for al in range(species.q):
            for be in range(al, species.q):
                if al == be:
                    tensors[(al, al)] = 0.5 * a * R[al] @ R[al]
                else:
                    tensors[(al, be)] = 0.5 * a * (R[al] @ R[be] + eta[al, be] * R[be] @ R[al])
    return tensors


def _finite_samples(state: FiniteCMPS, a: float):
    """``Q`` and ``R`` at the lattice sites, by subsampling or linear interpolation."""
    ratio = state.h / a
    sites = int(round(state.L / a))
    if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) and round(ratio) >= 1:
        x = -state.L / 2 + a * np.arange(sites)
        pos = (x + state.L / 2) / state.h
        k = np.minimum(np.floor(pos + 1e-9).astype(int), state.N - 1)
        t = (pos - k)[:, None, None]
        Q = (1 - t) * state.Q[k] + t * state.Q[k + 1]
        R = (1 - t[None]) * state.R[:, k] + t[None] * state.R[:, k + 1]
        return x, Q, R
    inv = a / state.h
    if abs(inv - round(inv)) < 1e-9 * inv:
        step = int(round(inv))
        idx = np.arange(0, state.N, step)
        return state.grid[idx], state.Q[idx], state.R[:, idx]
    raise GridMismatch(f"lattice spacing {a} and grid spacing {state.h} are not commensurate")


def _cell_tensors(Q, R, species: SpeciesTable, a: float, nmax: int) -> dict:
    """Tensors ``<s| exp(a Q + sqrt(a) sum_a R_a c_a^dag) |0>`` per site.

    All field operators inside a cell are replaced by the cell mode, which
    keeps every higher-order term of the expansion that the leading-order
    correspondence drops.  The occupation cutoff does not affect the
    coefficients with at most ``nmax`` particles since ``c^dag`` only raises.
    """
    labels = occupation_labels(species, nmax)
    ann, _ = _local_operators(labels, species)
    D = Q.shape[-1]
    F = len(labels)
    flat_Q = Q.reshape(-1, D, D)
    flat_R = R.reshape(species.q, -1, D, D)
    out = np.empty((F, flat_Q.shape[0], D, D), dtype=complex)
    for k in range(flat_Q.shape[0]):
        G = a * np.kron(flat_Q[k], np.eye(F))
        for al in range(species.q):
            G = G + np.sqrt(a) * np.kron(flat_R[al, k], ann[al].T)
        col = expm(G).reshape(D, F, D, F)[:, :, :, 0]  # (D, F, D): <s| ... |0>
        out[:, k] = np.moveaxis(col, 1, 0)
    tensors = {}
    for i, s in enumerate(labels):
        tensors[s] = out[i].reshape(Q.shape) / _occupation_norm(s, species)
    return tensors


def discretize(state: UniformCMPS | FiniteCMPS, a: float, nmax: int = 2,
               tensors: str = "leading") -> LatticeMPS:
    """Lattice state with spacing ``a`` and at most ``nmax`` particles per site.

    ``tensors="leading"`` uses the leading-order correspondence listed above
    and supports ``nmax`` 1 or 2.  ``"cell"`` uses the exponential of the cell
    generator, agrees with it to leading order and accepts ``nmax`` up to
    ``MAX_CELL_OCCUPATION``.
    """
    limit = 2 if tensors == "leading" else MAX_CELL_OCCUPATION
    if not 1 <= nmax <= limit:
        raise ValidationError(f"nmax must lie between 1 and {limit} for {tensors!r} tensors")
    if not a > 0:
        raise ValidationError("lattice spacing must be positive")
    if tensors not in ("leading", "cell"):
        raise ValidationError(f"unknown tensor construction {tensors!r}")
    build = _site_tensors if tensors == "leading" else _cell_tensors
    if isinstance(state, UniformCMPS):
        return LatticeMPS(float(a), nmax, state.species, build(state.Q, state.R, state.species, a, nmax), True)
    x, Q, R = _finite_samples(state, a)
    return LatticeMPS(float(a), nmax, state.species, build(Q, R, state.species, a, nmax),
                      False, np.array(state.vL), np.array(state.vR), x)


def lattice_transfer_check(state: UniformCMPS, a: float) -> float:
    """``||E - 1 - a T||_F`` for the two-particle truncation; it is O(a^2)."""
    _, A = discretize(state, a, 2).orthonormal_tensors()
    E = sum(np.kron(m, m.conj()) for m in A)
    T = dense_transfer(state)
    return float(np.linalg.norm(E - np.eye(T.shape[0]) - a * T))


# --------------------------------------------------------------------------- local operators


def occupation_labels(species: SpeciesTable, nmax: int) -> list:
    """Allowed occupation labels up to ``nmax`` particles, as nondecreasing species tuples."""
    out = []
    for n in range(nmax + 1):
        for s in combinations_with_replacement(range(species.q), n):
            counts = Counter(s)
            if all(counts[x] == 1 or not species.is_fermion(x) for x in counts):
                out.append(s)
    return out


def _occupation_norm(label, species: SpeciesTable) -> float:
    norm = 1.0
    for x, n in Counter(label).items():
        if n > 1 and species.is_fermion(x):
            return 0.0
        norm *= np.sqrt(float(factorial(n)))
    return norm


def _local_operators(labels: list, species: SpeciesTable):
    """Annihilators ``c_a`` and the parity operator in the truncated orthonormal basis.

    A label stands for ``prod_a (c_a^dag)^(n_a) |0>`` ordered by species index,
    so ``c_g`` picks up ``eta_{g,a}`` for every particle of a lower species.
    """
    index = {s: i for i, s in enumerate(labels)}
    eta = species.eta
    n = len(labels)
    ann = np.zeros((species.q, n, n))
    for s, j in index.items():
        counts = Counter(s)
        for g in counts:
            lowered = list(s)
            lowered.remove(g)
            sign = np.prod([eta[g, x] ** counts[x] for x in counts if x < g])
            ann[g, index[tuple(lowered)], j] = sign * np.sqrt(counts[g])
    parity = np.diag([(-1.0) ** sum(species.is_fermion(x) for x in s) for s in labels])
    return ann, parity


def _dressed(A: np.ndarray, O: np.ndarray):
    """Right map ``f -> sum_{s s'} O[s, s'] A^{s'} f A^{s dag}`` as a callable."""
    def apply(f):
        mixed = np.einsum("st,tij->sij", O, A)  # sum_t O[s,t] A^t
        return np.einsum("sij,jk,slk->il", mixed, f, A.conj())
    return apply


@dataclass(frozen=True)
class LatticeObservables:
    norm: complex | float
    density: np.ndarray | float
    pair_density: np.ndarray | float
    kinetic_fd: np.ndarray | float


def _site_observables(A, ops):
    ann, parity = ops
    q = ann.shape[0]
    number = sum(dag(c) @ c for c in ann)
    pairs = sum(dag(ann[x]) @ dag(ann[y]) @ ann[y] @ ann[x] for x in range(q) for y in range(q))
    return {
        "one": _dressed(A, np.eye(len(A))),
        "number": _dressed(A, number),
        "pairs": _dressed(A, pairs),
        "hop_from": [_dressed(A, parity @ c) for c in ann],  # parity applied after annihilation
        "hop_to": [_dressed(A, dag(c)) for c in ann],
    }


def _uniform_observables(mps: LatticeMPS) -> LatticeObservables:
    labels, A = mps.orthonormal_tensors()
    D = A.shape[-1]
    E = sum(np.kron(m, m.conj()) for m in A)
    w, V = np.linalg.eig(E)
    order = np.argsort(-np.abs(w))
    lam = w[order[0]]
    if len(w) > 1 and abs(w[order[0]]) - abs(w[order[1]]) < DEGENERACY_TOL * abs(lam):
        raise NonInjective("leading eigenvalue of the lattice transfer matrix is degenerate")
    wl, U = np.linalg.eig(E.conj().T)
    r = V[:, order[0]].reshape(D, D)
    l = U[:, np.argmin(np.abs(wl - np.conj(lam)))].reshape(D, D)
    norm_lr = np.vdot(l, r)
    ops = _site_observables(A, _local_operators(labels, mps.species))

    def expect(*maps):
        f = r
        for m in reversed(maps):
            f = m(f)
        return np.vdot(l, f) / (norm_lr * lam ** len(maps))

    a = mps.a
    n = expect(ops["number"]).real
    hop = sum(expect(fr, to) for fr, to in zip(ops["hop_from"], ops["hop_to"]))
    return LatticeObservables(
        norm=complex(lam),
        density=n / a,
        pair_density=expect(ops["pairs"]).real / a**2,
        kinetic_fd=(2 * n - 2 * hop.real) / a**3,
    )


def _finite_observables(mps: LatticeMPS) -> LatticeObservables:
    labels, A = mps.orthonormal_tensors()  # (s, M, D, D)
    M = mps.sites
    ops_local = _local_operators(labels, mps.species)
    # right environments: right[n] = contraction of sites n..M-1 against vR vR^dag
    right = np.empty((M + 1,) + A.shape[-2:], dtype=complex)
    right[M] = np.outer(mps.vR, mps.vR.conj())
    site_ops = [_site_observables(A[:, n], ops_local) for n in range(M)]
    for n in range(M - 1, -1, -1):
        right[n] = site_ops[n]["one"](right[n + 1])
    left = np.outer(mps.vL, mps.vL.conj())
    total = np.vdot(left, right[0])
    a = mps.a
    density = np.empty(M)
    pairs = np.empty(M)
    hop = np.zeros(M - 1)
    number = np.empty(M)
    for n in range(M):
        ops = site_ops[n]
        number[n] = (np.vdot(left, ops["number"](right[n + 1])) / total).real
        pairs[n] = (np.vdot(left, ops["pairs"](right[n + 1])) / total).real
        if n < M - 1:
            nxt = site_ops[n + 1]
            hop[n] = sum(np.vdot(left, fr(to(right[n + 2]))) for fr, to in
                         zip(ops["hop_from"], nxt["hop_to"])).real / total.real
        left = _left_step(A[:, n], left)
    density[:] = number / a
    kinetic = (number[:-1] + number[1:] - 2 * hop) / a**3
    return LatticeObservables(norm=float(total.real), density=density, pair_density=pairs / a**2,
                              kinetic_fd=kinetic)


def _left_step(A, left):
    return np.einsum("sji,jk,skl->il", A.conj(), left, A)


def lattice_observables(mps: LatticeMPS) -> LatticeObservables:
    """Norm, density, pair density and kinetic energy density of a lattice state.

    Densities and the kinetic term are summed over species; the kinetic term is
    ``sum_a <(c_{n+1}^dag - c_n^dag)(c_{n+1} - c_n)> / a^3`` without the ``1/2m``.
    Uniform chains give per-site scalars (``norm`` is the leading transfer
    eigenvalue); finite chains give profiles, with the kinetic term on bonds.
    """
    if mps.uniform:
        return _uniform_observables(mps)
    if mps.vL is None or mps.vR is None:
        raise ShapeError("finite lattice chains need boundary vectors")
    return _finite_observables(mps)


# --------------------------------------------------------------------------- ordered exponentials


def verify_commutator_identity(Afun: Callable, B, interval: tuple, steps: int) -> float:
    """Discrepancy between ``[U(x,y), B]`` and ``int_x^y U(x,z) [A(z), B] U(z,y) dz``.

    ``U(x,y)`` is the ordered exponential with ``dU/dy = U A(y)``, built from
    midpoint matrix exponentials; the integral uses the trapezoidal rule.  Both
    are second order in the step, and so is the returned Frobenius norm.
    """
    if steps < MIN_IDENTITY_STEPS:
        raise ValidationError(f"at least {MIN_IDENTITY_STEPS} steps are required")
    x0, x1 = map(float, interval)
    B = np.asarray(B, dtype=complex)
    h = (x1 - x0) / steps
    z = x0 + h * np.arange(steps + 1)
    props = [expm(h * np.asarray(Afun(x0 + (k + 0.5) * h), dtype=complex)) for k in range(steps)]
    D = B.shape[0]
    head = [np.eye(D, dtype=complex)]  # U(x, z_k)
    for P in props:
        head.append(head[-1] @ P)
    tail = [np.eye(D, dtype=complex)]  # U(z_k, y), built from the right
    for P in reversed(props):
        tail.append(P @ tail[-1])
    tail = tail[::-1]
    U = head[-1]
    weights = np.full(steps + 1, h)
    weights[[0, -1]] = 0.5 * h
    rhs = np.zeros_like(B)
    for k in range(steps + 1):
        Az = np.asarray(Afun(z[k]), dtype=complex)
        rhs += weights[k] * head[k] @ (Az @ B - B @ Az) @ tail[k]
    return float(np.linalg.norm(U @ B - B @ U - rhs))
