"""Canonical form of Im Gamma and the transform X = L Y onto quadrature pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import OperatorError


@dataclass(frozen=True)
class CanonicalTransform:
    O: np.ndarray
    nu: np.ndarray
    r: int
    L: np.ndarray
    L_inv: np.ndarray
    zero_tol: float = 0.0

    @property
    def n(self) -> int:
        return self.O.shape[0]

    @property
    def pair_index(self) -> list[tuple[int, int]]:
        return [(2 * j, 2 * j + 1) for j in range(self.r)]

    @property
    def x_index(self) -> list[int]:
        return list(range(2 * self.r, self.n))

    def canonical_im(self) -> np.ndarray:
        """Target Im Gamma_Y: blocks (0 1/2; -1/2 0) then zeros."""
        return canonical_block(self.n, [0.5] * self.r)

    def transport(self, A: np.ndarray) -> np.ndarray:
        """L^-1 A L^-T."""
        return self.L_inv @ A @ self.L_inv.T

    def to_dict(self) -> dict:
        return {
            "O": self.O.tolist(),
            "nu": self.nu.tolist(),
            "r": self.r,
            "L": self.L.tolist(),
            "zero_tol": self.zero_tol,
        }


def canonical_block(n: int, nu) -> np.ndarray:
    out = np.zeros((n, n))
    for j, v in enumerate(nu):
        out[2 * j, 2 * j + 1] = v
        out[2 * j + 1, 2 * j] = -v
    return out


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # the first component whose modulus is (numerically) maximal becomes real positive
    mag = np.abs(v)
    k = int(np.argmax(mag >= mag.max() * (1 - 1e-8)))
    return v * np.exp(-1j * np.angle(v[k]))


def _fix_sign(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    nz = np.flatnonzero(np.abs(u) > tol)
    return -u if nz.size and u[nz[0]] < 0 else u


def antisym_canonical(A, zero_tol: float = 1e-9, floor: float = 1e-12) -> tuple[np.ndarray, np.ndarray, int]:
    """Orthogonal O with O^T A O = (+)_j (0 nu_j; -nu_j 0) (+) 0, nu descending.

    Pairs come from the eigenvectors of iA with eigenvalue -nu: for such a v,
    the real columns (sqrt2 Re v, sqrt2 Im v) give the block with +nu on the
    upper right. The zero block is the Gram-Schmidt completion of the
    standard basis, which keeps the output deterministic.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise OperatorError("A must be square")
    if np.max(np.abs(A + A.T), initial=0.0) > 1e-10:
        raise OperatorError("A is not antisymmetric")
    n = A.shape[0]
    A = (A - A.T) / 2
    w, V = np.linalg.eigh(1j * A)  # ascending: most negative first
    numax = float(np.max(np.abs(w), initial=0.0))
    cut = max(zero_tol * numax, floor)
    cols, nus = [], []
    for idx in range(n):
        if -w[idx] <= cut:
            break
        v = _fix_phase(V[:, idx])
        cols.extend([np.sqrt(2) * v.real, np.sqrt(2) * v.imag])
        nus.append(-w[idx])
    r = len(nus)
    basis = list(cols)
    for e in np.eye(n):
        u = e - sum(np.dot(b, e) * b for b in basis) if basis else e.copy()
        nrm = np.linalg.norm(u)
        if nrm > 1e-8 and len(basis) < n:
            basis.append(_fix_sign(u / nrm))
    O = np.array(basis).T if basis else np.eye(n)
    # re-orthonormalize against eigensolver noise, keeping column directions
    Q, R = np.linalg.qr(O)
    O = Q * np.sign(np.diag(R))
    return O, np.array(nus), r


def build_L(O: np.ndarray, nu: np.ndarray, r: int, n: int | None = None, zero_tol: float = 0.0) -> CanonicalTransform:
    """L = O diag(sqrt(2 nu_1), sqrt(2 nu_1), ..., 1, ..., 1)."""
    n = O.shape[0] if n is None else n
    scale = np.ones(n)
    for j in range(r):
        scale[2 * j] = scale[2 * j + 1] = np.sqrt(2 * nu[j])
    L = O * scale
    L_inv = (O / scale).T
    if np.max(np.abs(L @ L_inv - np.eye(n)), initial=0.0) > 1e-10:
        raise OperatorError("L is numerically singular")
    return CanonicalTransform(O=O, nu=np.asarray(nu, dtype=float), r=r, L=L, L_inv=L_inv, zero_tol=zero_tol)


def canonical_transform(im_gamma, zero_tol: float = 1e-9) -> CanonicalTransform:
    O, nu, r = antisym_canonical(im_gamma, zero_tol)
    return build_L(O, nu, r, zero_tol=zero_tol)


def y_observables(X_ops, ct: CanonicalTransform, rho=None, atol: float = 1e-9) -> np.ndarray:
    """Y_j = sum_k (L^-1)_{jk} X_k.

    With ``rho`` given, the single-object commutator expectations
    (1/2i) tr(rho [Y_j, Y_k]) are checked against the canonical blocks.
    """
    X = np.asarray(X_ops, dtype=complex)
    if X.ndim != 3 or X.shape[0] != ct.n:
        raise OperatorError(f"expected {ct.n} observables, got shape {X.shape}")
    Y = np.einsum("jk,kab->jab", ct.L_inv, X)
    if rho is not None:
        im = commutator_matrix(rho, Y)
        err = np.max(np.abs(im - ct.canonical_im()), initial=0.0)
        if err > atol:
            raise OperatorError(f"Y commutators deviate from canonical form by {err:.2e}")
    return Y


def commutator_matrix(rho: np.ndarray, ops: np.ndarray) -> np.ndarray:
    """(1/2i) tr(rho [A_j, A_k])."""
    ra = np.einsum("ab,jbc->jac", rho, ops)
    t = np.einsum("jab,kba->jk", ra, ops)
    return np.real((t - t.T) / 2j)
