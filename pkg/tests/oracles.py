"""Independent reference computations used by the tests.

Each routine recomputes a quantity by a route that shares no code with the
package: explicit loops, column-by-column assembly or dense eigensolvers.
"""
from __future__ import annotations

import numpy as np
import scipy.integrate
import scipy.linalg


def superoperator_by_columns(Q, R, signs=None, side="right"):
    """Assemble the transfer superoperator by applying the map to basis matrices."""
    D = Q.shape[0]
    signs = np.ones(len(R)) if signs is None else signs
    M = np.zeros((D * D, D * D), dtype=complex)
    for j in range(D * D):
        E = np.zeros((D, D), dtype=complex)
        E.flat[j] = 1.0
        if side == "right":
            out = Q @ E + E @ Q.conj().T
            for s, Ra in zip(signs, R):
                out = out + s * Ra @ E @ Ra.conj().T
        else:
            out = E @ Q + Q.conj().T @ E
            for s, Ra in zip(signs, R):
                out = out + s * Ra.conj().T @ E @ Ra
        M[:, j] = out.ravel()
    return M


def dense_fixed_points(Q, R):
    """``(mu, l, r)`` from a dense eigendecomposition, normalized ``tr r = 1`` and ``tr(l r) = 1``."""
    D = Q.shape[0]
    T = superoperator_by_columns(Q, R)
    w, vl, vr = scipy.linalg.eig(T, left=True, right=True)
    k = int(np.argmax(w.real))
    r = vr[:, k].reshape(D, D)
    r = r / np.trace(r)
    # the left eigenvector pairs through vdot: (l|f) = sum conj(l) f
    l = vl[:, k].reshape(D, D)
    l = l / np.conj(np.vdot(l, r))
    return w[k].real, l, r


def naive_commutator(A, B):
    out = np.zeros_like(A, dtype=complex)
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = sum(A[i, k] * B[k, j] - B[i, k] * A[k, j] for k in range(n))
    return out


def lattice_density_scalar(q, r, a):
    """Density of the D = 1 lattice state ``(1 + a q, sqrt(a) r, a r^2 / sqrt 2)`` per unit length."""
    w0 = abs(1 + a * q) ** 2
    w1 = a * abs(r) ** 2
    w2 = 2 * (a * abs(r) ** 2 / 2) ** 2
    return (w1 + 2 * w2) / (w0 + w1 + w2) / a


def random_gauge(D, rng, cond_limit=1e3):
    while True:
        g = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)) + 2 * np.eye(D)
        if np.linalg.cond(g) <= cond_limit:
            return g


def mixed_overlap(Qa, Ra, vRa, Qb, Rb, vRb, vL, L):
    """``<Psi_a|Psi_b>`` of two finite states given as functions of ``x``, by adaptive integration.

    ``Qa(x)`` returns ``D x D`` and ``Ra(x)`` returns ``q x D x D``; both
    states share the left boundary vector ``vL``.
    """
    D = len(vL)

    def rhs(x, y):
        m = y.reshape(D, D)
        A, B = Ra(x), Rb(x)
        out = m @ Qb(x) + Qa(x).conj().T @ m
        for Aa, Ba in zip(A, B):
            out = out + Aa.conj().T @ m @ Ba
        return out.ravel()

    m0 = np.outer(vL, np.conj(vL)).ravel().astype(complex)
    sol = scipy.integrate.solve_ivp(rhs, (-L / 2, L / 2), m0, method="DOP853", rtol=1e-13, atol=1e-15)
    m = sol.y[:, -1].reshape(D, D)
    return np.vdot(vRa, m @ vRb)
