"""Bounds for zero-mean thermal Gaussian models.

Scores and influences are quadratic in the mode operators,
``sum_jk R[j, k] a_j^dagger a_k - tr(R upsilon)``, so everything reduces to
m x m matrix algebra with the convention ``upsilon[j, k] = tr(rho a_k^dagger a_j)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .bounds import (
    BoundReport,
    GammaMatrix,
    HNOptions,
    NotEstimableError,
    c_functional,
    check_weight,
    hn_bound,
)
from .linalg import DEFAULT_TOL, OperatorError, Tolerances, hermitian_part
from .models import FiniteDimModel, GaussianPoint, ThermalGaussianModel, thermal_fock_state


class SingularMapError(ValueError):
    """The score map R -> [U R (I + U) + (I + U) R U] / 2 is not invertible."""


def _gpoint(model, theta) -> GaussianPoint:
    return model if isinstance(model, GaussianPoint) else model.evaluate(theta)


def score_map_matrix(upsilon: np.ndarray) -> np.ndarray:
    """Matrix of R -> [U R (I+U) + (I+U) R U] / 2 acting on row-major vec(R)."""
    m = upsilon.shape[0]
    P = np.eye(m) + upsilon
    return (np.kron(upsilon, P.T) + np.kron(P, upsilon.T)) / 2


def gaussian_scores(model: ThermalGaussianModel | GaussianPoint, theta=None, rtol: float = 1e-9) -> np.ndarray:
    """Hermitian coefficient matrices R_i of the quadratic scores."""
    pt = _gpoint(model, theta)
    ups = pt.upsilon
    m = ups.shape[0]
    A = score_map_matrix(ups)
    if np.linalg.cond(A) > 1e12:
        raise SingularMapError("score map is singular (upsilon has zero modes)")
    out = []
    for dU in pt.dupsilon:
        R = np.linalg.solve(A, dU.reshape(-1)).reshape(m, m)
        R = hermitian_part(R)
        res = np.linalg.norm((ups @ R @ (np.eye(m) + ups) + (np.eye(m) + ups) @ R @ ups) / 2 - dU)
        if res > rtol * max(np.linalg.norm(dU), 1.0):
            raise SingularMapError(f"score solve residual {res:.2e} too large")
        out.append(R)
    return np.array(out).reshape(len(pt.dupsilon), m, m)


def gaussian_gamma(D_list, upsilon) -> GammaMatrix:
    """Gamma[l, m] = tr[U D_l (I + U) D_m] for quadratic influences with coefficient matrices D_l."""
    D = np.asarray(D_list, dtype=complex)
    ups = np.asarray(upsilon, dtype=complex)
    if D.ndim != 3 or D.shape[1:] != ups.shape:
        raise OperatorError(f"coefficient shape {D.shape} does not match upsilon {ups.shape}")
    P = np.eye(ups.shape[0]) + ups
    left = np.einsum("ab,lbc,cd->lad", ups, D, P)
    gamma = np.einsum("lab,mba->lm", left, D)
    return GammaMatrix.from_complex(gamma)


def gaussian_fisher(upsilon: np.ndarray, R: np.ndarray) -> np.ndarray:
    F = gaussian_gamma(R, upsilon).re
    return (F + F.T) / 2


def thermal_efficient_influence(
    model: ThermalGaussianModel | GaussianPoint, theta=None, tol: Tolerances = DEFAULT_TOL
) -> np.ndarray:
    """Coefficient matrices D_l of the efficient influence, D_l = sum_i [B F^+]_{li} R_i."""
    pt = _gpoint(model, theta)
    R = gaussian_scores(pt)
    F = gaussian_fisher(pt.upsilon, R)
    Fp = np.linalg.pinv(F, rcond=tol.pinv, hermitian=True)
    coeffs = pt.B @ Fp
    if np.max(np.abs(coeffs @ F - pt.B), initial=0.0) > 1e-8 * max(1.0, np.abs(pt.B).max()):
        raise NotEstimableError("target Jacobian is not in the row space of the Fisher information")
    D = np.einsum("li,iab->lab", coeffs, R)
    return (D + np.conj(np.swapaxes(D, 1, 2))) / 2


def fock_quadratic_influence(D: np.ndarray, upsilon: np.ndarray, basis) -> np.ndarray:
    """sum_jk D[j, k] a_j^dagger a_k - tr(D upsilon) I on a number-truncated Fock basis."""
    return basis.quadratic(D) - np.trace(D @ upsilon) * np.eye(basis.dim)


def fock_gamma(D_list, upsilon, cutoff: int, max_deficit: float = 1e-6) -> tuple[GammaMatrix, float]:
    """Fock-space evaluation of Gamma for quadratic influences; returns (Gamma, truncation deficit)."""
    state = thermal_fock_state(upsilon, cutoff, max_deficit)
    ops = np.array([fock_quadratic_influence(D, upsilon, state.basis) for D in np.asarray(D_list, dtype=complex)])
    rd = np.einsum("ab,jbc->jac", state.rho, ops)
    gamma = np.einsum("jab,kba->jk", rd, ops)
    return GammaMatrix.from_complex(gamma), state.deficit


def fock_model(model: ThermalGaussianModel, cutoff: int, fd_step: float = 1e-4) -> FiniteDimModel:
    """Finite-dimensional model from the Fock-truncated thermal states, derivatives by central differences."""

    def rho_fn(theta):
        return thermal_fock_state(model.upsilon_fn(theta), cutoff, max_deficit=1e-3).rho

    dim = thermal_fock_state(model.upsilon_fn(model.theta0), cutoff, 1e-3).basis.dim
    return FiniteDimModel(
        dim=dim,
        n_params=model.n_params,
        n_targets=model.n_targets,
        rho_fn=rho_fn,
        beta_fn=model.beta_fn,
        jac_fn=model.jac_fn,
        theta0=model.theta0,
        fd_step=fd_step,
        name=f"{model.name}-fock{cutoff}",
    )


def gaussian_bound_report(
    model: ThermalGaussianModel,
    theta=None,
    W=None,
    fock_cutoff: Optional[int] = None,
    im_tol: float = 1e-9,
    opts: Optional[HNOptions] = None,
) -> BoundReport:
    """Hel and C(delta_hel) from the quadratic forms.

    When Im Gamma vanishes the bound chain collapses and HN = Hel = C exactly.
    Otherwise HN needs an optimization over general influences, which is done
    on the Fock-truncated model and requires ``fock_cutoff``.
    """
    pt = _gpoint(model, theta)
    D = thermal_efficient_influence(pt)
    n = D.shape[0]
    W = np.eye(n) if W is None else check_weight(W)
    g = gaussian_gamma(D, pt.upsilon)
    hel = float(np.trace(W @ g.re))
    c_hel = c_functional(g, W)
    diag: dict = {"method": "quadratic-form", "max_abs_im_gamma": float(np.max(np.abs(g.im), initial=0.0))}
    if diag["max_abs_im_gamma"] <= im_tol:
        hn, g_hn, null_dim = c_hel, g, -1
        diag["hn_route"] = "chain-collapse"
    else:
        if fock_cutoff is None:
            raise ValueError("Im Gamma is nonzero; pass fock_cutoff to optimize HN in Fock space")
        fm = fock_model(model, fock_cutoff)
        rep = hn_bound(fm, pt.theta, W, opts)
        hn, g_hn, null_dim = rep.hn, rep.gamma_hn, rep.null_dim
        diag["hn_route"] = "fock-space"
        diag["fock_report"] = {"hel": rep.hel, "c_at_hel": rep.c_at_hel, "hn": rep.hn}
    report = BoundReport(
        hel=hel,
        c_at_hel=c_hel,
        hn=float(min(hn, c_hel)),
        W=W,
        gamma_hel=g,
        gamma_hn=g_hn,
        null_dim=null_dim,
        diagnostics=diag,
        tolerances={"im_tol": im_tol},
    )
    report.check_sandwich()
    return report
