"""Measurement design at the preliminary estimate.

A plan fixes the single-object observables X (tr(rho X) = beta), the
transform L, the observables Y = L^-1 X and the readout noise added on each
quadrature pair. Everything downstream (both engines, the estimator) only
needs a plan plus the true state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from ..bounds import GammaMatrix, HNOptions, check_weight, efficient_influence, gamma_matrix, hn_bound
from ..canonical import CanonicalTransform, canonical_transform, y_observables
from ..linalg import jordan_product
from ..models import FiniteDimModel
from .config import SchemeConfig


@dataclass(frozen=True)
class GdyneSetting:
    """Seed state of a general-dyne readout: covariance 1/2 R(phi) diag(e^{2 zeta}, e^{-2 zeta}) R(phi)^T."""

    zeta: float
    phi: float

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.phi), np.sin(self.phi)
        return np.array([[c, -s], [s, c]])

    @property
    def symplectic(self) -> np.ndarray:
        return self.rotation @ np.diag([np.exp(self.zeta), np.exp(-self.zeta)])

    @property
    def cov(self) -> np.ndarray:
        S = self.symplectic
        return S @ S.T / 2


def _block_frame(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, R = np.linalg.eigh((G + G.T) / 2)
    if np.linalg.det(R) < 0:
        R[:, 1] = -R[:, 1]
    return w, R


def optimize_gdyne(G: np.ndarray, zeta: Optional[float] = None) -> GdyneSetting:
    """Seed squeezing minimizing tr(G N) for one pair block of L^T W L.

    The noise is squeezed along the eigenvector of the smaller eigenvalue of
    ``G``; with ``zeta`` given only the orientation is chosen. The minimum is
    sqrt(det G), which the tests use as the closed-form check.
    """
    w, R = _block_frame(G)
    phi = float(np.arctan2(R[1, 0], R[0, 0]))
    if zeta is None:
        g1, g2 = max(w[0], 1e-300), w[1]
        res = minimize_scalar(
            lambda z: 0.5 * (g1 * np.exp(2 * z) + g2 * np.exp(-2 * z)),
            bounds=(-8.0, 8.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        zeta = float(res.x)
    return GdyneSetting(zeta=float(zeta), phi=phi)


@dataclass(frozen=True)
class SchemePlan:
    X: np.ndarray
    beta_check: np.ndarray
    gamma: GammaMatrix
    W: np.ndarray
    ct: CanonicalTransform
    Y: np.ndarray
    cov_y: np.ndarray
    weight_y: np.ndarray
    gdyne: tuple
    influence: str = "hel"
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.ct.n

    def noise_cov(self, cfg: SchemeConfig) -> np.ndarray:
        """Readout noise in Y coordinates at kappa t = pi/2."""
        N = np.zeros((self.n, self.n))
        for (i, j), g in zip(self.ct.pair_index, self.gdyne):
            N[np.ix_([i, j], [i, j])] = g.cov
        for k in self.ct.x_index:
            N[k, k] = cfg.x_var / cfg.gamma_t**2
        return N

    def predicted_cov(self, cfg: SchemeConfig) -> np.ndarray:
        """Covariance of sqrt(M) (beta_hat - beta) in the linearized engine."""
        L = self.ct.L
        return L @ (self.cov_y + self.noise_cov(cfg)) @ L.T

    def predicted_error(self, cfg: SchemeConfig) -> float:
        return float(np.trace(self.W @ self.predicted_cov(cfg)))

    def to_dict(self) -> dict:
        return {
            "influence": self.influence,
            "beta_check": self.beta_check.tolist(),
            "gamma": self.gamma.to_dict(),
            "canonical": self.ct.to_dict(),
            "cov_y": self.cov_y.tolist(),
            "gdyne": [{"zeta": g.zeta, "phi": g.phi} for g in self.gdyne],
        }


def plan_from_moments(X, rho_check, gamma: GammaMatrix, beta_check, W, cfg: SchemeConfig, influence="hel", check_rho=True) -> SchemePlan:
    """Plan from the observables and (possibly estimated) Gamma at the preliminary point."""
    n = gamma.n
    W = check_weight(W) if W is not None else np.eye(n)
    ct = canonical_transform(gamma.im)
    Y = y_observables(X, ct, rho_check if check_rho else None, atol=1e-8)
    cov_y = ct.transport(gamma.re)
    weight_y = ct.L.T @ W @ ct.L
    gd = tuple(
        optimize_gdyne(weight_y[np.ix_([i, j], [i, j])], cfg.gdyne_noise) for (i, j) in ct.pair_index
    )
    return SchemePlan(
        X=np.asarray(X, dtype=complex),
        beta_check=np.asarray(beta_check, dtype=float),
        gamma=gamma,
        W=W,
        ct=ct,
        Y=Y,
        cov_y=(cov_y + cov_y.T) / 2,
        weight_y=(weight_y + weight_y.T) / 2,
        gdyne=gd,
        influence=influence,
    )


def design_scheme(
    model: FiniteDimModel,
    theta_check,
    W=None,
    cfg: Optional[SchemeConfig] = None,
    influence: str = "hel",
    hn_opts: Optional[HNOptions] = None,
) -> SchemePlan:
    """Plan built from the efficient influence ("hel") or the HN minimizer ("hn") at theta_check."""
    cfg = cfg or SchemeConfig()
    pt = model.evaluate(theta_check)
    if influence == "hel":
        delta = efficient_influence(pt).delta
    elif influence == "hn":
        delta = hn_bound(pt, W=W, opts=hn_opts).influence_hn
    else:
        raise ValueError(f"influence must be 'hel' or 'hn', got {influence!r}")
    X = delta + pt.beta[:, None, None] * np.eye(pt.dim)
    g = gamma_matrix(pt.rho, delta)
    return plan_from_moments(X, pt.rho, g, pt.beta, W, cfg, influence)


def state_moments(X: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector tr(rho X_j) and symmetric covariance of the observables under rho."""
    mean = np.real(np.einsum("ab,jba->j", rho, X))
    n = X.shape[0]
    cov = np.empty((n, n))
    for j in range(n):
        for k in range(j, n):
            cov[j, k] = cov[k, j] = np.real(np.trace(rho @ jordan_product(X[j], X[k]))) - mean[j] * mean[k]
    return mean, cov
