"""
Data model for continuous matrix product states and their transfer operators.

A uniform state is the pair ``(Q, R)`` with ``R`` holding one ``D x D`` matrix
per particle species. A finite state samples ``Q(x)`` and ``R(x)`` on an
evenly spaced grid over ``[-L/2, L/2]`` and carries boundary vectors.

Vectorization convention
------------------------
Matrices are flattened row-major, so that

    kron(A, conj(B)) @ f.ravel() == (A @ f @ B.conj().T).ravel()

Left vectors ``(l|`` are stored as matrices ``l`` with the pairing
``(l|v) = tr(l^dagger v)``.  Under this convention the transfer operator acts
on right vectors through ``transfer_apply(..., side="right")`` and on left
vectors through ``side="left"``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import DENSE_SUPEROPERATOR_LIMIT
from .errors import DuplicateSpecies, NotHermitian, ShapeError, TooLargeForDense

BOSON = "boson"
FERMION = "fermion"
HERMITIAN_TOL = 1e-12
PERIODIC_TOL = 1e-12


@dataclass(frozen=True)
class SpeciesTable:
    """Ordered particle species and their exchange signs."""

    names: tuple
    statistics: tuple

    def __post_init__(self):
        if len(self.names) == 0:
            raise ShapeError("at least one species is required")
        if len(self.names) != len(self.statistics):
            raise ShapeError("names and statistics differ in length")
        if len(set(self.names)) != len(self.names):
            raise DuplicateSpecies(f"duplicate species name in {list(self.names)}")
        for s in self.statistics:
            if s not in (BOSON, FERMION):
                raise ShapeError(f"unknown statistics {s!r}")

    @property
    def q(self) -> int:
        return len(self.names)

    @property
    def fermionic(self) -> np.ndarray:
        return np.array([s == FERMION for s in self.statistics])

    @property
    def eta(self) -> np.ndarray:
        f = self.fermionic
        return np.where(np.outer(f, f), -1, 1).astype(int)

    def is_fermion(self, alpha: int) -> bool:
        return self.statistics[alpha] == FERMION

    def index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.q:
                raise ShapeError(f"species index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise ShapeError(f"unknown species {name!r}") from None


def build_species_table(entries: Iterable) -> SpeciesTable:
    """Build a table from ``(name, statistics)`` pairs."""
    entries = list(entries)
    if not entries:
        raise ShapeError("at least one species is required")
    names = tuple(str(e[0]) for e in entries)
    stats = tuple(str(e[1]) for e in entries)
    return SpeciesTable(names, stats)


def bosons(q: int = 1) -> SpeciesTable:
    return build_species_table([(f"b{k}", BOSON) for k in range(q)])


def fermions(q: int = 1) -> SpeciesTable:
    return build_species_table([(f"f{k}", FERMION) for k in range(q)])


def _as_table(species, q: int) -> SpeciesTable:
    if species is None:
        return bosons(q)
    if isinstance(species, SpeciesTable):
        return species
    return build_species_table(species)


def as_matrix(a, name: str = "matrix", shape: tuple | None = None) -> np.ndarray:
    m = np.array(a, dtype=complex)
    if shape is not None and m.shape != shape:
        raise ShapeError(f"{name} has shape {m.shape}, expected {shape}")
    if not np.all(np.isfinite(m)):
        raise ShapeError(f"{name} contains non-finite entries")
    m.setflags(write=False)
    return m


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dag(a))


# --------------------------------------------------------------------------- states


@dataclass(frozen=True)
class UniformCMPS:
    """Translation-invariant state given by constant ``Q`` and ``R[alpha]``."""

    Q: np.ndarray
    R: np.ndarray
    species: SpeciesTable = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ShapeError(f"Q must be square, got shape {Q.shape}")
        D = Q.shape[0]
        R = np.asarray(self.R, dtype=complex)
        if R.ndim == 2:
            R = R[None]
        if R.ndim != 3 or R.shape[1:] != (D, D):
            raise ShapeError(f"R must hold D x D matrices with D={D}, got {R.shape}")
        species = _as_table(self.species, R.shape[0])
        if species.q != R.shape[0]:
            raise ShapeError(f"{R.shape[0]} R matrices for {species.q} species")
        object.__setattr__(self, "Q", as_matrix(Q, "Q"))
        object.__setattr__(self, "R", as_matrix(R, "R"))
        object.__setattr__(self, "species", species)

    @property
    def D(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    def replace(self, Q=None, R=None) -> "UniformCMPS":
        return UniformCMPS(self.Q if Q is None else Q, self.R if R is None else R, self.species)


@dataclass(frozen=True)
class FiniteCMPS:
    """Open or periodic state on ``[-L/2, L/2]`` sampled at ``N + 1`` grid points.

    ``Q`` has shape ``(N+1, D, D)`` and ``R`` has shape ``(q, N+1, D, D)``.
    """

    L: float
    Q: np.ndarray
    R: np.ndarray
    vL: np.ndarray = None
    vR: np.ndarray = None
    species: SpeciesTable = None
    boundary: str = "open"
    B: np.ndarray = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2]:
            raise ShapeError(f"Q samples must have shape (N+1, D, D), got {Q.shape}")
        n1, D = Q.shape[0], Q.shape[1]
        if n1 < 3:
            raise ShapeError("a finite state needs N >= 2")
        R = np.asarray(self.R, dtype=complex)
        if R.ndim == 3:
            R = R[None]
        if R.ndim != 4 or R.shape[1:] != (n1, D, D):
            raise ShapeError(f"R samples must have shape (q, {n1}, {D}, {D}), got {R.shape}")
        species = _as_table(self.species, R.shape[0])
        if species.q != R.shape[0]:
            raise ShapeError(f"{R.shape[0]} R sample sets for {species.q} species")
        if not self.L > 0:
            raise ShapeError("L must be positive")
        if self.boundary not in ("open", "periodic"):
            raise ShapeError(f"unknown boundary kind {self.boundary!r}")
        vL = np.ones(D) if self.vL is None else self.vL
        vR = np.ones(D) if self.vR is None else self.vR
        B = np.eye(D) if self.B is None else self.B
        if self.boundary == "periodic":
            gap = max(np.max(np.abs(Q[0] - Q[-1])), np.max(np.abs(R[:, 0] - R[:, -1])))
            if gap > PERIODIC_TOL:
                raise ShapeError(f"periodic state has unequal end samples (deviation {gap:.3e})")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "Q", as_matrix(Q, "Q samples"))
        object.__setattr__(self, "R", as_matrix(R, "R samples"))
        object.__setattr__(self, "vL", as_matrix(vL, "vL", (D,)))
        object.__setattr__(self, "vR", as_matrix(vR, "vR", (D,)))
        object.__setattr__(self, "B", as_matrix(B, "B", (D, D)))
        object.__setattr__(self, "species", species)

    @property
    def D(self) -> int:
        return self.Q.shape[1]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @property
    def N(self) -> int:
        return self.Q.shape[0] - 1

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.L / 2, self.L / 2, self.N + 1)

    def sample(self, k: int) -> UniformCMPS:
        return UniformCMPS(self.Q[k], self.R[:, k], self.species)

    def replace(self, **changes) -> "FiniteCMPS":
        fields = dict(L=self.L, Q=self.Q, R=self.R, vL=self.vL, vR=self.vR,
                      species=self.species, boundary=self.boundary, B=self.B)
        fields.update(changes)
        return FiniteCMPS(**fields)

    @classmethod
    def from_uniform(cls, state: UniformCMPS, L: float, N: int, vL=None, vR=None) -> "FiniteCMPS":
        Q = np.broadcast_to(state.Q, (N + 1, state.D, state.D))
        R = np.broadcast_to(state.R[:, None], (state.q, N + 1, state.D, state.D))
        return cls(L, Q, R, vL, vR, state.species)

    @classmethod
    def from_functions(cls, Qfun: Callable, Rfun: Callable, L: float, N: int,
                       vL=None, vR=None, species=None) -> "FiniteCMPS":
        """Sample ``Qfun(x)`` (D x D) and ``Rfun(x)`` (q x D x D) on the grid."""
        x = np.linspace(-L / 2, L / 2, N + 1)
        Q = np.array([Qfun(t) for t in x])
        R = np.array([np.asarray(Rfun(t)).reshape(-1, Q.shape[1], Q.shape[1]) for t in x])
        return cls(L, Q, np.swapaxes(R, 0, 1), vL, vR, species)


# --------------------------------------------------------------------------- dressing


@dataclass(frozen=True)
class TransferDressing:
    """Selects the plain transfer operator or one of its sign-dressed variants."""

    kind: str = "plain"
    alpha: int | None = None
    beta: int | None = None

    @classmethod
    def plain(cls) -> "TransferDressing":
        return cls("plain")

    @classmethod
    def single(cls, alpha: int) -> "TransferDressing":
        return cls("single", alpha)

    @classmethod
    def double(cls, alpha: int, beta: int) -> "TransferDressing":
        return cls("double", alpha, beta)

    def signs(self, species: SpeciesTable) -> np.ndarray:
        eta = species.eta
        if self.kind == "plain":
            return np.ones(species.q)
        if self.kind == "single":
            return eta[species.index(self.alpha)].astype(float)
        if self.kind == "double":
            a, b = species.index(self.alpha), species.index(self.beta)
            return (eta[a] * eta[b]).astype(float)
        raise ShapeError(f"unknown dressing kind {self.kind!r}")


def transfer_apply(Q: np.ndarray, R: Sequence, signs: Sequence, f: np.ndarray, side: str = "right") -> np.ndarray:
    """Apply the (dressed) transfer map to a ``D x D`` matrix.

    ``side="right"`` computes ``Q f + f Q^dag + sum_a s_a R_a f R_a^dag``;
    ``side="left"`` computes ``f Q + Q^dag f + sum_a s_a R_a^dag f R_a``.
    Stacks of matrices ``f`` with shape ``(..., D, D)`` are accepted.
    """
    Q = np.asarray(Q)
    R = np.asarray(R)
    if R.ndim == 2:
        R = R[None]
    f = np.asarray(f)
    s = np.asarray(signs, dtype=float)
    D = Q.shape[-1]
    if f.shape[-2:] != (D, D) or R.shape[-2:] != (D, D) or Q.shape != (D, D):
        raise ShapeError(f"incompatible shapes Q{Q.shape}, R{R.shape}, f{f.shape}")
    if s.shape != (R.shape[0],):
        raise ShapeError(f"{s.size} signs for {R.shape[0]} species")
    if side == "right":
        out = Q @ f + f @ dag(Q)
        for sa, Ra in zip(s, R):
            out = out + sa * (Ra @ f @ dag(Ra))
    elif side == "left":
        out = f @ Q + dag(Q) @ f
        for sa, Ra in zip(s, R):
            out = out + sa * (dag(Ra) @ f @ Ra)
    else:
        raise ShapeError(f"side must be 'right' or 'left', not {side!r}")
    return out


def dense_transfer(state: UniformCMPS, dressing: TransferDressing | None = None,
                   max_dim: int | None = None) -> np.ndarray:
    """Assemble the ``D^2 x D^2`` transfer operator as a dense matrix."""
    limit = DENSE_SUPEROPERATOR_LIMIT if max_dim is None else max_dim
    D = state.D
    if D > limit:
        raise TooLargeForDense(f"D={D} exceeds the dense superoperator budget D<={limit}")
    s = (dressing or TransferDressing.plain()).signs(state.species)
    one = np.eye(D)
    T = np.kron(state.Q, one) + np.kron(one, state.Q.conj())
    for sa, Ra in zip(s, state.R):
        T = T + sa * np.kron(Ra, Ra.conj())
    return T


def check_hermitian(K, name: str = "K", tol: float = HERMITIAN_TOL) -> np.ndarray:
    K = np.asarray(K, dtype=complex)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"{name} must be square")
    dev = np.max(np.abs(K - dag(K))) if K.size else 0.0
    if dev > tol:
        raise NotHermitian(f"{name} deviates from Hermitian by {dev:.3e}")
    return K


def construct_left_orthonormal(K, R, species=None) -> UniformCMPS:
    """State with ``Q = -iK - (1/2) sum_a R_a^dag R_a`` for Hermitian ``K``."""
    K = check_hermitian(K)
    R = np.asarray(R, dtype=complex)
    if R.ndim == 2:
        R = R[None]
    if R.shape[1:] != K.shape:
        raise ShapeError(f"R matrices {R.shape[1:]} do not match K {K.shape}")
    Q = -1j * K - 0.5 * np.einsum("aji,ajk->ik", R.conj(), R)
    return UniformCMPS(Q, R, species)


def left_orthonormal_residual(state: UniformCMPS) -> float:
    M = state.Q + dag(state.Q) + np.einsum("aji,ajk->ik", state.R.conj(), state.R)
    return float(np.linalg.norm(M))


def right_orthonormal_residual(state: UniformCMPS) -> float:
    M = state.Q + dag(state.Q) + np.einsum("aij,akj->ik", state.R, state.R.conj())
    return float(np.linalg.norm(M))


def random_uniform(D: int, species=None, rng=None, scale: float = 1.0) -> UniformCMPS:
    """Random state with Gaussian complex entries (testing and demos)."""
    rng = np.random.default_rng(rng)
    species = _as_table(species, 1)

    def gauss(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2 * D)

    return UniformCMPS(scale * gauss(D, D), scale * gauss(species.q, D, D), species)
