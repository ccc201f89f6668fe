"""Single-mode ancilla operators, Gaussian preparations and readout vectors in a truncated Fock space."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg

from .._kernels import coherent_table, hermite_table
from ..models import TruncationError
from .plan import GdyneSetting


@lru_cache(maxsize=64)
def _ladder(K: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, K, dtype=float)), 1).astype(complex)


def annihilation(K: int) -> np.ndarray:
    return _ladder(K).copy()


def quadratures(K: int) -> tuple[np.ndarray, np.ndarray]:
    """q = (a + a^dag)/sqrt2, p = (a - a^dag)/(i sqrt2)."""
    a = _ladder(K)
    ad = a.conj().T
    return (a + ad) / np.sqrt(2), (a - ad) / (1j * np.sqrt(2))


def gaussian_unitary(setting: GdyneSetting, K: int) -> np.ndarray:
    """Phase rotation after squeezing, exp(i phi n) exp(zeta/2 (a^dag^2 - a^2)), on K levels."""
    a = _ladder(K)
    ad = a.conj().T
    sq = scipy.linalg.expm(setting.zeta / 2 * (ad @ ad - a @ a))
    rot = np.exp(1j * setting.phi * np.arange(K))
    return rot[:, None] * sq


def gaussian_state(K: int, var_q: float, var_p: float, pad: int = 40) -> tuple[np.ndarray, float]:
    """Zero-mean Gaussian state with diagonal covariance, cropped to K levels.

    Built on K + pad levels as squeezed thermal light, then cropped and
    renormalized. Returns the state and the probability lost to the crop.
    """
    nu = np.sqrt(var_q * var_p)
    if nu < 0.5 - 1e-12:
        raise ValueError("variances violate var_q var_p >= 1/4")
    nbar = max(nu - 0.5, 0.0)
    r = 0.25 * np.log(var_p / var_q)  # e^{-2r} nu = var_q
    Kb = K + pad
    if nbar > 0:
        pops = (nbar / (1 + nbar)) ** np.arange(Kb) / (1 + nbar)
    else:
        pops = np.zeros(Kb)
        pops[0] = 1.0
    a = _ladder(Kb)
    ad = a.conj().T
    S = scipy.linalg.expm(r / 2 * (a @ a - ad @ ad))
    big = (S * pops) @ S.conj().T
    rho = big[:K, :K]
    kept = float(np.real(np.trace(rho)))
    return (rho + rho.conj().T) / (2 * kept), 1.0 - kept


def gdyne_vectors(q: np.ndarray, p: np.ndarray, setting: GdyneSetting, K: int) -> np.ndarray:
    """Fock amplitudes (first K levels) of D(alpha) U|0> for each grid point (q, p).

    Uses D(alpha) U = U D(alpha'), with alpha' the point mapped back by the
    seed's symplectic matrix, so only coherent vectors are needed.
    """
    pts = np.stack([np.ravel(q), np.ravel(p)])
    if abs(setting.zeta) < 1e-14:
        # unsqueezed seed is the vacuum whatever the rotation
        return coherent_table((pts[0] + 1j * pts[1]) / np.sqrt(2), K)
    Sinv = np.linalg.inv(setting.symplectic)
    back = Sinv @ pts
    alpha_b = (back[0] + 1j * back[1]) / np.sqrt(2)
    amax = float(np.max(np.abs(alpha_b), initial=0.0))
    Kc = int(np.ceil(amax**2 + 10 * amax + 30))
    Kc = max(Kc, K + 30)
    if Kc > 2000:
        raise TruncationError("general-dyne grid too wide for the seed squeezing")
    U = gaussian_unitary(setting, Kc + 40)[:K, :Kc]
    C = coherent_table(alpha_b, Kc)
    return C @ U.T


def homodyne_vectors(x: np.ndarray, K: int) -> np.ndarray:
    return hermite_table(x, K)


def top_population(rho: np.ndarray, dims: list[int], mode: int) -> float:
    """Probability of the highest retained Fock level of one mode."""
    t = rho.reshape(dims + dims)
    n = len(dims)
    idx = [slice(None)] * (2 * n)
    idx[mode] = dims[mode] - 1
    idx[n + mode] = dims[mode] - 1
    sub = t[tuple(idx)]
    m = int(np.prod([d for i, d in enumerate(dims) if i != mode]))
    return max(0.0, float(np.real(np.trace(sub.reshape(m, m)))))
