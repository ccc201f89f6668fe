"""Two-step estimation and the separable baseline.

Step one spends a small fraction of the copies on projective measurements
of single-object observables to estimate beta and Gamma; step two runs the
collective scheme on the rest with the transform built from those estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..bounds import GammaMatrix, efficient_influence, gamma_matrix
from ..linalg import commutator, jordan_product, nearest_psd
from ..models import FiniteDimModel, NonparametricModel, hermitian_basis
from .config import RunResult, SchemeConfig
from .linear import simulate_plan
from .plan import design_scheme, plan_from_moments
from .rng import generator

MIN_ACQUISITION = 100


class AcquisitionError(ValueError):
    pass


@dataclass
class AcquisitionResult:
    n_copies: int
    measured: list[str]
    allocation: list[int]
    beta_hat: np.ndarray
    gamma_hat: GammaMatrix
    projected: bool
    diagnostics: dict = field(default_factory=dict)


def _hs_coords(ops: np.ndarray) -> np.ndarray:
    E = hermitian_basis(ops.shape[1])
    return np.real(np.einsum("eab,jba->je", E, ops))


def acquisition_design(b: np.ndarray, tol: float = 1e-10):
    """Observables to measure and how each needed expectation follows from them.

    Needed: b_j, b_j o b_k (j <= k) and [b_j, b_k]/2i (j < k). A pivoted
    greedy pass picks a subset of these whose traceless parts span all the
    others; every needed operator is then c0 I + sum_i c_i B_i.
    Returns (labels, needed ops, measured ops, coefficient matrix with the
    identity coefficient in column 0).
    """
    n, d = b.shape[0], b.shape[1]
    labels, needed = [], []
    for j in range(n):
        labels.append(("mean", j, j))
        needed.append(b[j])
    for j in range(n):
        for k in range(j, n):
            labels.append(("jordan", j, k))
            needed.append(jordan_product(b[j], b[k]))
    for j in range(n):
        for k in range(j + 1, n):
            labels.append(("commutator", j, k))
            needed.append(commutator(b[j], b[k]) / 2j)
    needed = np.array(needed)
    coords = _hs_coords(needed)
    trace_part = coords[:, 0]  # coefficient on I/sqrt(d)
    traceless = coords[:, 1:]
    # pivoted greedy pass: take the operator with the largest relative part
    # outside the current span, which keeps the reconstruction well conditioned
    norms = np.linalg.norm(traceless, axis=1)
    kept, Q = [], np.zeros((traceless.shape[1], 0))
    while True:
        resid = traceless - (traceless @ Q) @ Q.T
        rel = np.where(norms > tol, np.linalg.norm(resid, axis=1) / np.maximum(norms, tol), 0.0)
        i = int(np.argmax(rel))
        if rel[i] <= 1e-8:
            break
        kept.append(i)
        Q = np.column_stack([Q, resid[i] / np.linalg.norm(resid[i])])
    kept.sort()
    measured = needed[kept]
    coef = np.zeros((len(needed), 1 + len(kept)))
    coef[:, 0] = trace_part / np.sqrt(d)
    if kept:
        mcoords = traceless[kept]
        sol, *_ = np.linalg.lstsq(mcoords.T, traceless.T, rcond=None)
        if np.max(np.abs(mcoords.T @ sol - traceless.T), initial=0.0) > 1e-8:
            raise AcquisitionError("needed operators are not in the span of the measured ones")
        # each measured op carries its own trace part
        coef[:, 1:] = sol.T
        coef[:, 0] -= sol.T @ (coords[kept, 0] / np.sqrt(d))
    return labels, needed, measured, coef


def _projective_mean(op: np.ndarray, rho: np.ndarray, shots: int, rng: np.random.Generator) -> float:
    w, V = np.linalg.eigh(op)
    probs = np.clip(np.real(np.einsum("ak,ab,bk->k", V.conj(), rho, V)), 0, None)
    # merge degenerate eigenvalues so the outcome alphabet is the spectrum
    vals, groups = [], []
    for i, lam in enumerate(w):
        if vals and abs(lam - vals[-1]) <= 1e-9 * max(1.0, abs(lam)):
            groups[-1] += probs[i]
        else:
            vals.append(lam)
            groups.append(probs[i])
    p = np.array(groups) / np.sum(groups)
    counts = rng.multinomial(shots, p)
    return float(np.dot(counts, vals) / shots)


def acquire(b: np.ndarray, rho_true: np.ndarray, n_copies: int, seed: int = 0) -> AcquisitionResult:
    """Simulated acquisition: each chosen observable is measured in its eigenbasis on an equal share of copies."""
    labels, needed, measured, coef = acquisition_design(b)
    m = len(measured)
    if n_copies < max(MIN_ACQUISITION, m):
        raise AcquisitionError(f"{n_copies} acquisition copies is below the minimum {max(MIN_ACQUISITION, m)}")
    base, rest = divmod(n_copies, m)
    alloc = [base + (1 if i < rest else 0) for i in range(m)]
    means = np.array(
        [_projective_mean(op, rho_true, s, generator(seed, "acquisition", i)) for i, (op, s) in enumerate(zip(measured, alloc))]
    )
    est = coef[:, 0] + coef[:, 1:] @ means
    n = b.shape[0]
    lookup = dict(zip(labels, est))
    beta = np.array([lookup[("mean", j, j)] for j in range(n)])
    G = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for k in range(j, n):
            G[j, k] = G[k, j] = lookup[("jordan", j, k)] - beta[j] * beta[k]
        for k in range(j + 1, n):
            c = lookup[("commutator", j, k)]
            G[j, k] += 1j * c
            G[k, j] -= 1j * c
    floor = 1e-9 * max(float(np.real(np.trace(G))), 1e-12)
    Gp, clipped = nearest_psd(G, floor)
    if clipped:
        G = Gp
    return AcquisitionResult(
        n_copies=n_copies,
        measured=[f"op{i}" for i in range(m)],
        allocation=alloc,
        beta_hat=beta,
        gamma_hat=GammaMatrix.from_complex(G),
        projected=bool(clipped),
        diagnostics={"n_measured": m},
    )


def two_step_protocol(
    model: FiniteDimModel,
    theta_true,
    N: int,
    fraction: float,
    cfg: Optional[SchemeConfig] = None,
    W=None,
    oracle: bool = False,
) -> RunResult:
    """Acquisition on floor(f N) copies, then the Gaussian engine on the remaining M copies.

    The reported ``scaled_error`` is N tr(W V) with N the total copy count.
    With ``oracle`` the plan is built at the true point and no copies are
    spent on acquisition.
    """
    cfg = cfg or SchemeConfig()
    if not isinstance(model, NonparametricModel):
        raise TypeError("the two-step protocol needs a spin or nonparametric model")
    pt = model.evaluate(theta_true)
    rho = pt.rho
    n_acq = 0 if oracle else int(np.floor(fraction * N))
    M = N - n_acq
    if M < 1:
        raise AcquisitionError("no copies left for the collective step")
    run_cfg = cfg.replace(M=M)
    if oracle:
        plan = design_scheme(model, theta_true, W, run_cfg)
        acq_diag = {"oracle": True}
    else:
        acq = acquire(model.observables, rho, n_acq, cfg.seed)
        plan = plan_from_moments(model.observables, None, acq.gamma_hat, acq.beta_hat, W, run_cfg, check_rho=False)
        true_gamma = gamma_matrix(rho, efficient_influence(pt).delta)
        acq_diag = {
            "oracle": False,
            "n_acquisition": n_acq,
            "allocation": acq.allocation,
            "beta_check": acq.beta_hat,
            "beta_check_error": float(np.linalg.norm(acq.beta_hat - pt.beta)),
            "gamma_check_error": float(np.max(np.abs(acq.gamma_hat.gamma - true_gamma.gamma))),
            "projected": acq.projected,
        }
    res = simulate_plan(plan, pt.beta, run_cfg, rho_true=rho, n_copies=N)
    res.diagnostics["acquisition"] = acq_diag
    res.diagnostics["fraction"] = float(fraction)
    res.diagnostics["N"] = int(N)
    return res


@dataclass
class BaselineResult:
    analytic: float
    hel: float
    n: int
    monte_carlo: Optional[float] = None
    monte_carlo_se: Optional[float] = None
    repetitions: int = 0

    def to_dict(self) -> dict:
        return {
            "analytic": self.analytic,
            "hel": self.hel,
            "n": self.n,
            "monte_carlo": self.monte_carlo,
            "monte_carlo_se": self.monte_carlo_se,
            "repetitions": self.repetitions,
        }


def separable_baseline(model: FiniteDimModel, theta, N: int, W=None, repetitions: int = 2000, seed: int = 0) -> BaselineResult:
    """n Hel for N/n copies per observable X_j, plus a Monte Carlo of the batch sample means."""
    pt = model.evaluate(theta)
    inf = efficient_influence(pt)
    n = pt.n_targets
    if W is not None and not np.allclose(np.asarray(W, float), np.eye(n)):
        raise ValueError("the separable baseline is defined for W = I")
    hel = float(np.trace(gamma_matrix(pt.rho, inf.delta).re))
    out = BaselineResult(analytic=n * hel, hel=hel, n=n)
    if repetitions:
        X = inf.observables()
        batch = N // n
        if batch < 1:
            raise ValueError("N must be at least the number of targets")
        rng = generator(seed, "baseline", 0)
        loss = np.zeros(repetitions)
        for j in range(n):
            w, V = np.linalg.eigh(X[j])
            p = np.clip(np.real(np.einsum("ak,ab,bk->k", V.conj(), pt.rho, V)), 0, None)
            counts = rng.multinomial(batch, p / p.sum(), size=repetitions)
            est = counts @ w / batch
            loss += N * (est - pt.beta[j]) ** 2
        out.monte_carlo = float(loss.mean())
        out.monte_carlo_se = float(loss.std() / np.sqrt(repetitions))
        out.repetitions = repetitions
    return out
