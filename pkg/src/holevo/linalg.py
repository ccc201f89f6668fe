"""Dense complex-matrix primitives shared by every other module.

Operators are plain ``numpy`` arrays. Functions that need a Hermitian input
validate it with :func:`as_hermitian`, which rejects non-finite entries and
asymmetries beyond a relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np


class OperatorError(ValueError):
    """Raised for malformed operator inputs (shape, Hermiticity, finiteness)."""


class UnsolvableError(ValueError):
    """Raised when a Jordan-product equation has no solution on the support of rho."""


@dataclass(frozen=True)
class Tolerances:
    hermiticity: float = 1e-12
    rank: float = 1e-10
    solvability: float = 1e-9
    pinv: float = 1e-10
    canonical_zero: float = 1e-9
    canonical_floor: float = 1e-12
    max_dim: int = 30_000


DEFAULT_TOL = Tolerances()


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise OperatorError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise OperatorError(f"{name} has non-finite entries")
    return A


def as_square(A, name: str = "matrix") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise OperatorError(f"{name} must be square, got shape {A.shape}")
    return A


def as_hermitian(A, name: str = "operator", tol: float = DEFAULT_TOL.hermiticity) -> np.ndarray:
    """Validate Hermiticity relative to the largest entry and return the Hermitian part."""
    A = as_square(A, name)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - A.conj().T), initial=0.0) > tol * max(scale, 1.0):
        raise OperatorError(f"{name} is not Hermitian within tolerance {tol:g}")
    return hermitian_part(A)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return (A + A.conj().T) / 2


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def hermitian_eig(A, tol: float = DEFAULT_TOL.hermiticity) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching unitary eigenvector matrix."""
    A = as_hermitian(A, tol=tol)
    w, V = np.linalg.eigh(A)
    return w[::-1], V[:, ::-1]


def psd_sqrt(A, tol: float = DEFAULT_TOL.hermiticity) -> np.ndarray:
    w, V = np.linalg.eigh(as_hermitian(A, tol=tol))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def matrix_abs(A) -> np.ndarray:
    """|A| = sqrt(A^dagger A), computed from the SVD so it stays PSD for any square A."""
    A = as_square(A)
    _, s, Vh = np.linalg.svd(A)
    out = (Vh.conj().T * s) @ Vh
    return hermitian_part(out)


def trace_norm(A) -> float:
    return float(np.sum(np.linalg.svd(as_square(A), compute_uv=False)))


def jordan_product(A, B) -> np.ndarray:
    A = as_square(A, "A")
    B = as_square(B, "B")
    if A.shape != B.shape:
        raise OperatorError(f"dimension mismatch {A.shape} vs {B.shape}")
    return (A @ B + B @ A) / 2


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def lyapunov_solve(rho, G, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Solve rho o S = G for Hermitian S.

    In the eigenbasis of rho, ``S_ab = 2 G_ab / (l_a + l_b)``. Entries where
    ``l_a + l_b`` falls below the rank tolerance are set to zero, and the
    solve is refused if G has weight there.
    """
    rho = as_hermitian(rho, "rho", tol.hermiticity)
    G = as_hermitian(G, "G", tol.hermiticity)
    if rho.shape != G.shape:
        raise OperatorError(f"dimension mismatch {rho.shape} vs {G.shape}")
    lam, V = np.linalg.eigh(rho)
    scale = max(float(np.max(np.abs(lam))), 1.0)
    if lam[0] < -1e-12 * scale:
        raise OperatorError(f"rho is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    Gt = V.conj().T @ G @ V
    denom = lam[:, None] + lam[None, :]
    support = denom >= tol.rank * scale
    gnorm = np.linalg.norm(G)
    if gnorm > 0 and np.max(np.abs(Gt[~support]), initial=0.0) > tol.solvability * gnorm:
        raise UnsolvableError("G has weight outside the support of the Jordan map of rho")
    St = np.zeros_like(Gt)
    St[support] = 2 * Gt[support] / denom[support]
    return hermitian_part(V @ St @ V.conj().T)


def kron(*ops) -> np.ndarray:
    return reduce(np.kron, ops)


def embed(op: np.ndarray, slot: int, dims: list[int]) -> np.ndarray:
    """Place ``op`` on tensor factor ``slot`` with identities elsewhere."""
    factors = [np.eye(d) for d in dims]
    factors[slot] = op
    return kron(*factors)


def collective_embed(X, M: int, max_dim: int = DEFAULT_TOL.max_dim) -> np.ndarray:
    """(1/sqrt M) * sum_k I^(k-1) (x) X (x) I^(M-k) on the M-fold tensor space."""
    X = as_square(X, "X")
    if M < 1:
        raise OperatorError("M must be positive")
    d = X.shape[0]
    if d**M > max_dim:
        raise OperatorError(f"collective dimension {d}**{M} exceeds budget {max_dim}")
    dims = [d] * M
    total = sum(embed(X, k, dims) for k in range(M))
    return total / np.sqrt(M)


def partial_trace(A, dims: list[int], keep: list[int]) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``."""
    A = as_square(A)
    dims = list(dims)
    if int(np.prod(dims)) != A.shape[0]:
        raise OperatorError(f"dims {dims} do not match operator size {A.shape[0]}")
    keep = sorted(keep)
    n = len(dims)
    T = A.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise OperatorError("too many tensor factors")
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for k in range(n):
        if k not in keep:
            cols[k] = rows[k]
    out = "".join(rows[k] for k in keep) + "".join(cols[k] for k in keep)
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, T)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(dk, dk)


def expm_hermitian(H, t: float = 1.0, sign: float = -1.0) -> np.ndarray:
    """exp(sign * i * H * t) from the eigendecomposition of Hermitian H."""
    w, V = np.linalg.eigh(as_hermitian(H, "H", 1e-10))
    return (V * np.exp(sign * 1j * w * t)) @ V.conj().T


def nearest_psd(A: np.ndarray, floor: float = 0.0) -> tuple[np.ndarray, bool]:
    """Clip the spectrum of a Hermitian matrix at ``floor``; flag whether anything moved."""
    A = hermitian_part(np.asarray(A))
    w, V = np.linalg.eigh(A)
    clipped = bool(np.any(w < floor))
    w = np.maximum(w, floor)
    out = (V * w) @ V.conj().T
    if np.isrealobj(A):
        out = out.real
    return out, clipped
