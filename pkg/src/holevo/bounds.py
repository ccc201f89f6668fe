"""Scores, efficient influence, complex covariance and the Helstrom / Holevo-Nagaoka bounds."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .linalg import DEFAULT_TOL, OperatorError, Tolerances, lyapunov_solve, psd_sqrt
from .models import FiniteDimModel, ModelPoint, hermitian_basis


class NotEstimableError(ValueError):
    """The target Jacobian is not in the row space of the quantum Fisher information."""


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GammaMatrix:
    """Gamma[j, k] = tr(rho delta_j delta_k) with its real and imaginary parts."""

    gamma: np.ndarray
    re: np.ndarray
    im: np.ndarray

    @classmethod
    def from_complex(cls, gamma: np.ndarray) -> "GammaMatrix":
        gamma = (gamma + gamma.conj().T) / 2
        return cls(gamma=gamma, re=gamma.real.copy(), im=gamma.imag.copy())

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def to_dict(self) -> dict:
        return {"re": self.re.tolist(), "im": self.im.tolist()}


@dataclass(frozen=True)
class InfluenceVector:
    delta: np.ndarray  # (n, d, d)
    point: ModelPoint
    coeffs: Optional[np.ndarray] = None  # (n, k), delta_j = sum_i coeffs[j, i] S_i
    fisher: Optional[np.ndarray] = None

    def residuals(self) -> tuple[float, float]:
        """Max violation of tr(rho delta_j) = 0 and of tr(drho_i delta_j) = B[j, i]."""
        rho, drho = self.point.rho, self.point.drho
        mean = np.abs(np.einsum("ab,jba->j", rho, self.delta))
        pair = np.real(np.einsum("iab,jba->ji", drho, self.delta))
        return float(mean.max(initial=0.0)), float(np.abs(pair - self.point.B).max(initial=0.0))

    def check(self, mean_tol: float = 1e-9, deriv_tol: float = 1e-8) -> None:
        r0, r1 = self.residuals()
        if r0 > mean_tol or r1 > deriv_tol:
            raise OperatorError(f"influence constraints violated: mean {r0:.2e}, derivative {r1:.2e}")

    def observables(self) -> np.ndarray:
        """X = delta + beta I."""
        d = self.point.dim
        return self.delta + self.point.beta[:, None, None] * np.eye(d)


def _point(model, theta) -> ModelPoint:
    if isinstance(model, ModelPoint):
        return model
    return model.evaluate(theta)


def compute_slds(model: FiniteDimModel | ModelPoint, theta=None, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Symmetric logarithmic derivatives S_i solving drho_i = rho o S_i."""
    pt = _point(model, theta)
    return np.array([lyapunov_solve(pt.rho, g, tol) for g in pt.drho])


def gamma_matrix(rho: np.ndarray, delta: np.ndarray) -> GammaMatrix:
    """Complex covariance of an influence vector, cross-checked against the Jordan/commutator split."""
    delta = np.asarray(delta)
    if delta.ndim != 3 or delta.shape[1:] != rho.shape:
        raise OperatorError(f"influence shape {delta.shape} does not match rho {rho.shape}")
    rd = np.einsum("ab,jbc->jac", rho, delta)
    gamma = np.einsum("jab,kba->jk", rd, delta)
    dr = np.einsum("jab,bc->jac", delta, rho)
    re = np.real(np.einsum("jab,kba->jk", rd, delta) + np.einsum("jab,kba->jk", dr, delta)) / 2
    im = np.real((np.einsum("jab,kba->jk", rd, delta) - np.einsum("jab,kba->jk", dr, delta)) / 2j)
    if np.max(np.abs(gamma - (re + 1j * im)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(gamma))):
        raise OperatorError("Gamma decompositions disagree")
    out = GammaMatrix.from_complex(gamma)
    return GammaMatrix(gamma=out.gamma, re=(re + re.T) / 2, im=(im - im.T) / 2)


def check_weight(W) -> np.ndarray:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] != W.shape[1] or np.max(np.abs(W - W.T), initial=0.0) > 1e-12 * max(1.0, np.abs(W).max()):
        raise OperatorError("W must be a symmetric matrix")
    if np.linalg.eigvalsh(W)[0] <= 0:
        raise OperatorError("W must be positive definite")
    return (W + W.T) / 2


def c_functional(gamma: GammaMatrix, W) -> float:
    """tr(W Re Gamma) + tr|sqrt(W) Im Gamma sqrt(W)|."""
    W = check_weight(W)
    sw = psd_sqrt(W).real
    A = sw @ gamma.im @ sw
    return float(np.trace(W @ gamma.re) + np.sum(np.linalg.svd(A, compute_uv=False)))


def quantum_fisher(rho: np.ndarray, slds: np.ndarray) -> np.ndarray:
    F = np.real(np.einsum("ab,ibc,jca->ij", rho, slds, slds))
    return (F + F.T) / 2


def _estimable_coeffs(B: np.ndarray, F: np.ndarray, tol: Tolerances) -> np.ndarray:
    Fp = np.linalg.pinv(F, rcond=tol.pinv, hermitian=True)
    coeffs = B @ Fp
    if np.max(np.abs(coeffs @ F - B), initial=0.0) > 1e-8 * max(1.0, np.abs(B).max()):
        raise NotEstimableError("target Jacobian is not in the row space of the Fisher information")
    return coeffs


def efficient_influence(model: FiniteDimModel | ModelPoint, theta=None, tol: Tolerances = DEFAULT_TOL) -> InfluenceVector:
    """delta_j = sum_i [B F^+]_{ji} S_i, the influence minimizing tr(W Re Gamma) for every W."""
    pt = _point(model, theta)
    S = compute_slds(pt, tol=tol)
    F = quantum_fisher(pt.rho, S)
    coeffs = _estimable_coeffs(pt.B, F, tol)
    delta = np.einsum("ji,iab->jab", coeffs, S)
    delta = (delta + np.conj(np.swapaxes(delta, 1, 2))) / 2
    inf = InfluenceVector(delta=delta, point=pt, coeffs=coeffs, fisher=F)
    inf.check()
    return inf


def helstrom_bound(model, theta=None, W=None, tol: Tolerances = DEFAULT_TOL) -> float:
    inf = efficient_influence(model, theta, tol)
    n = inf.delta.shape[0]
    W = np.eye(n) if W is None else check_weight(W)
    return float(np.trace(W @ gamma_matrix(inf.point.rho, inf.delta).re))


# ---------------------------------------------------------------- Holevo-Nagaoka


def constraint_null_space(pt: ModelPoint, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal Hermitian operators T with tr(rho T) = 0 and tr(drho_i T) = 0.

    Built from a pivoted QR of the constraint rows in the real coordinates of
    a Hilbert-Schmidt orthonormal Hermitian basis. Returns shape (p, d, d).
    """
    d = pt.dim
    E = hermitian_basis(d)
    C = np.real(np.einsum("cab,eba->ce", np.concatenate([pt.rho[None], pt.drho]), E))
    Q, R, _ = scipy.linalg.qr(C.T, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * max(diag.max(initial=0.0), 1e-300))) if diag.size else 0
    N = Q[:, rank:]
    return np.einsum("ep,eab->pab", N, E)


@dataclass
class HNOptions:
    iterations: int = 5000
    step0: Optional[float] = None  # default 0.1 * C(delta_hel)
    polish: bool = True
    starts: int = 1
    start_scale: float = 0.1
    seed: int = 0
    threads: int = 1
    plateau_rtol: float = 1e-6
    strict: bool = False


@dataclass
class BoundReport:
    hel: float
    c_at_hel: float
    hn: float
    W: np.ndarray
    gamma_hel: GammaMatrix
    gamma_hn: GammaMatrix
    null_dim: int
    diagnostics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: Optional[int] = None
    influence_hel: Optional[np.ndarray] = None
    influence_hn: Optional[np.ndarray] = None

    def sandwich(self, slack: float = 1e-7) -> bool:
        return (
            self.hel - slack <= self.hn
            and self.hn <= self.c_at_hel + slack
            and self.c_at_hel <= 2 * self.hel + slack
        )

    def check_sandwich(self, slack: float = 1e-7) -> None:
        if not self.sandwich(slack):
            raise AssertionError(
                f"bound chain violated: hel={self.hel!r} hn={self.hn!r} c={self.c_at_hel!r}"
            )

    def to_dict(self) -> dict:
        return {
            "hel": self.hel,
            "hn": self.hn,
            "c_at_hel": self.c_at_hel,
            "W": np.asarray(self.W).tolist(),
            "null_dim": self.null_dim,
            "gamma_hel": self.gamma_hel.to_dict(),
            "gamma_hn": self.gamma_hn.to_dict(),
            "diagnostics": self.diagnostics,
            "tolerances": self.tolerances,
            "seed": self.seed,
        }


class _HNObjective:
    """C(delta(c)) and a subgradient, with delta(c) = delta_hel + c @ T."""

    def __init__(self, rho, delta0, T, W):
        self.rho = rho
        self.n, self.d = delta0.shape[0], delta0.shape[1]
        self.p = T.shape[0]
        self.delta0 = delta0.reshape(self.n, -1)
        self.T = T.reshape(self.p, -1)
        self.W = W
        self.sw = psd_sqrt(W).real

    def delta(self, c: np.ndarray) -> np.ndarray:
        c = c.reshape(self.n, self.p)
        return (self.delta0 + c @ self.T).reshape(self.n, self.d, self.d)

    def gamma(self, c) -> GammaMatrix:
        return gamma_matrix(self.rho, self.delta(c))

    def value_grad(self, c, mu: float = 0.0):
        dl = self.delta(c)
        rd = np.einsum("ab,jbc->jac", self.rho, dl)
        gam = np.einsum("jab,kba->jk", rd, dl)
        gam = (gam + gam.conj().T) / 2
        A = self.sw @ gam.imag @ self.sw
        U, s, Vt = np.linalg.svd(A)
        if mu > 0:
            # smoothed trace norm sum sqrt(s^2 + mu^2) - mu
            val_im = float(np.sum(np.sqrt(s * s + mu * mu) - mu))
            Gs = U @ np.diag(s / np.sqrt(s * s + mu * mu)) @ Vt
        else:
            val_im = float(s.sum())
            keep = s > 1e-14 * max(1.0, s.max(initial=0.0))
            Gs = U[:, keep] @ Vt[keep]
        val = float(np.trace(self.W @ gam.real)) + val_im
        G = self.sw @ Gs @ self.sw
        Z = self.W - 1j * G
        # d Gamma_jk / d c_{j a} = tr(rho T_a delta_k); d Gamma_jk / d c_{k a} = tr(rho delta_j T_a)
        dr = np.einsum("jab,bc->jac", dl, self.rho).reshape(self.n, -1)
        rdf = rd.reshape(self.n, -1)
        Tt = self.T.reshape(self.p, self.d, self.d).transpose(0, 2, 1).reshape(self.p, -1)
        A1 = Tt @ dr.T  # A1[a, k] = tr(T_a delta_k rho) = tr(rho T_a delta_k)
        B1 = Tt @ rdf.T  # B1[a, j] = tr(T_a rho delta_j) = tr(rho delta_j T_a)
        grad = np.real(Z @ A1.T + Z.T @ B1.T)
        return val, grad.ravel()


def _subgradient_run(obj: _HNObjective, c0: np.ndarray, opts: HNOptions, step0: float):
    c = c0.copy()
    best_c, best_v = c.copy(), obj.value_grad(c)[0]
    history = []
    gnorm = 0.0
    for it in range(1, opts.iterations + 1):
        v, g = obj.value_grad(c)
        if v < best_v:
            best_v, best_c = v, c.copy()
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            break
        c = c - (step0 / np.sqrt(it)) * g / gnorm
        if it % max(1, opts.iterations // 20) == 0:
            history.append(best_v)
    v, g = obj.value_grad(c)
    if v < best_v:
        best_v, best_c = v, c.copy()
    return best_c, best_v, gnorm, history


def _polish(obj: _HNObjective, c0: np.ndarray):
    c, best_v = c0.copy(), obj.value_grad(c0)[0]
    for mu in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        res = scipy.optimize.minimize(
            lambda x: obj.value_grad(x, mu), c, jac=True, method="L-BFGS-B", options={"maxiter": 500}
        )
        v = obj.value_grad(res.x)[0]
        if v < best_v:
            best_v, c = v, res.x
    return c, best_v


def hn_bound(
    model: FiniteDimModel | ModelPoint,
    theta=None,
    W=None,
    opts: Optional[HNOptions] = None,
    tol: Tolerances = DEFAULT_TOL,
) -> BoundReport:
    """Holevo-Nagaoka bound by minimizing C over the affine set of influence operators."""
    opts = opts or HNOptions()
    inf = efficient_influence(model, theta, tol)
    pt = inf.point
    n = pt.n_targets
    W = np.eye(n) if W is None else check_weight(W)
    g_hel = gamma_matrix(pt.rho, inf.delta)
    hel = float(np.trace(W @ g_hel.re))
    c_hel = c_functional(g_hel, W)
    T = constraint_null_space(pt, tol.rank)
    p = T.shape[0]
    diag: dict = {"null_dim": p, "method": "subgradient"}
    if p == 0 or n == 1 and np.allclose(g_hel.im, 0):
        hn, c_best = c_hel, np.zeros(n * p)
        diag.update(iterations=0, converged=True, subgradient_norm=0.0)
    else:
        obj = _HNObjective(pt.rho, inf.delta, T, W)
        step0 = opts.step0 if opts.step0 is not None else 0.1 * c_hel
        rng = np.random.default_rng(opts.seed)
        starts = [np.zeros(n * p)] + [
            rng.normal(scale=opts.start_scale, size=n * p) for _ in range(max(0, opts.starts - 1))
        ]
        if opts.threads > 1 and len(starts) > 1:
            with ThreadPoolExecutor(opts.threads) as ex:
                runs = list(ex.map(lambda c0: _subgradient_run(obj, c0, opts, step0), starts))
        else:
            runs = [_subgradient_run(obj, c0, opts, step0) for c0 in starts]
        idx = int(np.argmin([r[1] for r in runs]))
        c_best, hn, gnorm, history = runs[idx]
        plateau = True
        if len(history) >= 4:
            tail = history[-1] - history[int(0.9 * len(history)) - 1]
            plateau = abs(tail) <= opts.plateau_rtol * max(abs(hn), 1.0) * 10
        sub_value = hn
        if opts.polish:
            c_pol, v_pol = _polish(obj, c_best)
            if v_pol < hn:
                c_best, hn = c_pol, v_pol
        diag.update(
            iterations=opts.iterations,
            starts=len(starts),
            subgradient_norm=gnorm,
            subgradient_value=sub_value,
            polished_value=hn,
            best_history=history,
            subgradient_plateau=bool(plateau),
            polished=bool(opts.polish),
            converged=bool(plateau or opts.polish),
        )
        if not diag["converged"]:
            msg = "HN subgradient run did not plateau; the reported value is the best feasible iterate"
            if opts.strict:
                raise RuntimeError(msg)
            warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        hn = min(hn, c_hel)
    if p:
        obj = _HNObjective(pt.rho, inf.delta, T, W)
        delta_hn = obj.delta(c_best)
    else:
        delta_hn = inf.delta
    g_hn = gamma_matrix(pt.rho, delta_hn)
    feas = InfluenceVector(delta=delta_hn, point=pt).residuals()
    diag["feasibility_residuals"] = {"mean": feas[0], "derivative": feas[1]}
    report = BoundReport(
        hel=hel,
        c_at_hel=c_hel,
        hn=float(hn),
        W=W,
        gamma_hel=g_hel,
        gamma_hn=g_hn,
        null_dim=p,
        diagnostics=diag,
        tolerances={"rank": tol.rank, "pinv": tol.pinv, "solvability": tol.solvability},
        seed=opts.seed,
        influence_hel=inf.delta,
        influence_hn=delta_hn,
    )
    report.check_sandwich()
    return report
