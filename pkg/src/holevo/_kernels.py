"""Hot loops of the phase-space readout and Monte Carlo accumulation.

Every kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature. The numba path is used when numba imports cleanly and the
environment variable ``HOLEVO_DISABLE_NUMBA`` is unset (or ``0``).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_disabled = os.environ.get("HOLEVO_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")
USE_NUMBA = numba is not None and not _disabled


# ---------------------------------------------------------------- numpy path


def coherent_table_numpy(alpha: np.ndarray, cutoff: int) -> np.ndarray:
    """Fock amplitudes <n|alpha> for a flat array of complex alphas, shape (len, cutoff)."""
    alpha = np.asarray(alpha, dtype=np.complex128).ravel()
    out = np.empty((alpha.size, cutoff), dtype=np.complex128)
    out[:, 0] = np.exp(-0.5 * np.abs(alpha) ** 2)
    for n in range(1, cutoff):
        out[:, n] = out[:, n - 1] * alpha / np.sqrt(n)
    return out


def hermite_table_numpy(x: np.ndarray, cutoff: int) -> np.ndarray:
    """Normalized Hermite functions psi_n(x) = <x|n> in shot-noise units, shape (len, cutoff)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    out = np.empty((x.size, cutoff))
    out[:, 0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if cutoff > 1:
        out[:, 1] = np.sqrt(2.0) * x * out[:, 0]
    for n in range(2, cutoff):
        out[:, n] = np.sqrt(2.0 / n) * x * out[:, n - 1] - np.sqrt((n - 1) / n) * out[:, n - 2]
    return out


def quadratic_forms_numpy(vecs: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Real parts of conj(v) . rho . v for every row v of ``vecs``."""
    return np.einsum("gi,ij,gj->g", vecs.conj(), rho, vecs, optimize=True).real


def joint_density_numpy(cvecs: np.ndarray, hvecs: np.ndarray, rho4: np.ndarray) -> np.ndarray:
    """Joint outcome weights for a two-mode state.

    ``rho4[i1, i2, j1, j2]`` is the two-mode density matrix, ``cvecs`` the
    (conjugated-on-bra) projection vectors of mode 1 and ``hvecs`` real
    quadrature wavefunctions of mode 2. Returns shape (len(cvecs), len(hvecs)).
    """
    A = np.einsum("gi,iajb,gj->gab", cvecs.conj(), rho4, cvecs, optimize=True)
    return np.einsum("xa,gab,xb->gx", hvecs, A, hvecs, optimize=True).real


def chunk_moments_numpy(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column sums and the sum of outer products of the rows of ``err``."""
    return err.sum(axis=0), err.T @ err


# ---------------------------------------------------------------- numba path

if numba is not None:

    @numba.njit(cache=True)
    def coherent_table_numba(alpha, cutoff):
        out = np.empty((alpha.size, cutoff), dtype=np.complex128)
        for g in range(alpha.size):
            a = alpha[g]
            v = math.exp(-0.5 * (a.real * a.real + a.imag * a.imag)) + 0j
            out[g, 0] = v
            for n in range(1, cutoff):
                v = v * a / math.sqrt(n)
                out[g, n] = v
        return out

    @numba.njit(cache=True)
    def hermite_table_numba(x, cutoff):
        out = np.empty((x.size, cutoff))
        c0 = np.pi**-0.25
        for g in range(x.size):
            xv = x[g]
            h0 = c0 * math.exp(-0.5 * xv * xv)
            out[g, 0] = h0
            if cutoff > 1:
                h1 = math.sqrt(2.0) * xv * h0
                out[g, 1] = h1
                for n in range(2, cutoff):
                    h2 = math.sqrt(2.0 / n) * xv * h1 - math.sqrt((n - 1) / n) * h0
                    out[g, n] = h2
                    h0 = h1
                    h1 = h2
        return out

    @numba.njit(cache=True)
    def quadratic_forms_numba(vecs, rho):
        G, K = vecs.shape
        out = np.empty(G)
        for g in range(G):
            acc = 0.0
            for i in range(K):
                vi = vecs[g, i].conjugate()
                s = 0j
                for j in range(K):
                    s += rho[i, j] * vecs[g, j]
                acc += (vi * s).real
            out[g] = acc
        return out

    @numba.njit(cache=True)
    def joint_density_numba(cvecs, hvecs, rho_ij_ab):
        # rho_ij_ab[(i1 j1), (i2 j2)]: bra/ket indices of mode 1 grouped first
        G, K1 = cvecs.shape
        X, K2 = hvecs.shape
        C = np.empty((G, K1 * K1), dtype=np.complex128)
        for g in range(G):
            for i in range(K1):
                ci = cvecs[g, i].conjugate()
                for j in range(K1):
                    C[g, i * K1 + j] = ci * cvecs[g, j]
        A = np.dot(C, rho_ij_ab)
        out = np.empty((G, X))
        Ar = np.empty((K2, K2))
        for g in range(G):
            for a in range(K2):
                for b in range(K2):
                    Ar[a, b] = A[g, a * K2 + b].real
            T = np.dot(hvecs, Ar)
            for x in range(X):
                acc = 0.0
                for b in range(K2):
                    acc += T[x, b] * hvecs[x, b]
                out[g, x] = acc
        return out

    @numba.njit(cache=True)
    def chunk_moments_numba(err):
        S, n = err.shape
        s1 = np.zeros(n)
        s2 = np.zeros((n, n))
        for k in range(S):
            for i in range(n):
                e = err[k, i]
                s1[i] += e
                for j in range(n):
                    s2[i, j] += e * err[k, j]
        return s1, s2


# ---------------------------------------------------------------- dispatch


def coherent_table(alpha, cutoff: int) -> np.ndarray:
    alpha = np.ascontiguousarray(np.asarray(alpha, dtype=np.complex128).ravel())
    if USE_NUMBA:
        return coherent_table_numba(alpha, int(cutoff))
    return coherent_table_numpy(alpha, cutoff)


def hermite_table(x, cutoff: int) -> np.ndarray:
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())
    if USE_NUMBA:
        return hermite_table_numba(x, int(cutoff))
    return hermite_table_numpy(x, cutoff)


def quadratic_forms(vecs: np.ndarray, rho: np.ndarray) -> np.ndarray:
    vecs = np.ascontiguousarray(vecs, dtype=np.complex128)
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if USE_NUMBA:
        return quadratic_forms_numba(vecs, rho)
    return quadratic_forms_numpy(vecs, rho)


def joint_density(cvecs: np.ndarray, hvecs: np.ndarray, rho4: np.ndarray) -> np.ndarray:
    cvecs = np.ascontiguousarray(cvecs, dtype=np.complex128)
    hvecs = np.ascontiguousarray(hvecs, dtype=np.float64)
    rho4 = np.ascontiguousarray(rho4, dtype=np.complex128)
    if USE_NUMBA:
        return joint_density_numba(cvecs, hvecs, _group_mode1(rho4))
    return joint_density_numpy(cvecs, hvecs, rho4)


def _group_mode1(rho4: np.ndarray) -> np.ndarray:
    K1, K2 = rho4.shape[0], rho4.shape[1]
    return np.ascontiguousarray(rho4.transpose(0, 2, 1, 3).reshape(K1 * K1, K2 * K2))


def chunk_moments(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    err = np.ascontiguousarray(err, dtype=np.float64)
    if USE_NUMBA:
        return chunk_moments_numba(err)
    return chunk_moments_numpy(err)


def pairwise_reduce(parts: list) -> object:
    """Sum ``parts`` by a fixed binary tree so the result depends only on their order."""
    if not parts:
        raise ValueError("nothing to reduce")
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
