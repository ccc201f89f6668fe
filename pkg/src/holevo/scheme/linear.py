"""Gaussian (large-M) engine.

The collective observables are replaced by their Gaussian limit and pushed
through the exact linear input-output maps of the couplings:

    q'(t)  = sin(kt) y_q + cos(kt) q'(0)        (same for p')
    q''(t) = q''(0) + gamma t y_x

followed by the general-dyne noise on each pair.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from .._kernels import chunk_moments, pairwise_reduce
from ..models import FiniteDimModel
from .config import RunResult, SchemeConfig
from .plan import SchemePlan, design_scheme, state_moments
from .rng import chunk_sizes, generator


class MissingChannelError(ValueError):
    pass


def readout_to_y(outcomes: np.ndarray, plan: SchemePlan, cfg: SchemeConfig) -> np.ndarray:
    """Pairs are read as-is; x channels are rescaled by 1/(gamma t)."""
    out = np.array(outcomes, dtype=float, copy=True)
    if out.ndim != 2 or out.shape[1] != plan.n:
        raise MissingChannelError(f"expected {plan.n} readout channels, got shape {np.shape(outcomes)}")
    if not np.all(np.isfinite(out)):
        raise MissingChannelError("readouts contain missing (non-finite) entries")
    xi = plan.ct.x_index
    if xi:
        if cfg.gamma_t == 0:
            raise MissingChannelError("gamma t = 0: x channels carry no signal")
        out[:, xi] /= cfg.gamma_t
    return out


def estimator(outcomes: np.ndarray, plan: SchemePlan, cfg: SchemeConfig, M: Optional[int] = None) -> np.ndarray:
    """beta_hat = L y / sqrt(M) per sample."""
    M = cfg.M if M is None else M
    y = readout_to_y(outcomes, plan, cfg)
    return y @ plan.ct.L.T / np.sqrt(M)


def linear_readout_moments(plan: SchemePlan, rho_true, cfg: SchemeConfig, M: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form mean and covariance of the raw readouts in the Gaussian engine."""
    M = cfg.M if M is None else M
    mx, cx = state_moments(plan.X, rho_true)
    Linv = plan.ct.L_inv
    my = np.sqrt(M) * Linv @ mx
    cy = Linv @ cx @ Linv.T
    kt = cfg.kappa * cfg.t
    n = plan.n
    T = np.zeros((n, n))  # readout = T y + ancilla/gdyne noise
    noise = np.zeros((n, n))
    for j, (a, b) in enumerate(plan.ct.pair_index):
        T[a, a] = T[b, b] = np.sin(kt)
        blk = np.cos(kt) ** 2 * cfg.pair_var * np.eye(2) + plan.gdyne[j].cov
        noise[np.ix_([a, b], [a, b])] = blk
    for k in plan.ct.x_index:
        T[k, k] = cfg.gamma_t
        noise[k, k] = cfg.x_var
    return T @ my, T @ cy @ T.T + noise


def _chunk(plan, cfg, mean_y, sqrt_cov, beta_true, n_copies, index, size, W):
    n, ct = plan.n, plan.ct
    z = generator(cfg.seed, "latent", index).standard_normal((size, n))
    anc = generator(cfg.seed, "ancilla", index).standard_normal((size, n))
    gd = generator(cfg.seed, "gdyne", index).standard_normal((size, 2 * ct.r))
    y_inf = mean_y + z @ sqrt_cov.T
    kt = cfg.kappa * cfg.t
    readout = np.empty((size, n))
    for j, (a, b) in enumerate(ct.pair_index):
        cols = [a, b]
        noise = gd[:, 2 * j : 2 * j + 2] @ plan.gdyne[j].symplectic.T / np.sqrt(2)
        readout[:, cols] = (
            np.sin(kt) * y_inf[:, cols] + np.cos(kt) * np.sqrt(cfg.pair_var) * anc[:, cols] + noise
        )
    for k in ct.x_index:
        readout[:, k] = np.sqrt(cfg.x_var) * anc[:, k] + cfg.gamma_t * y_inf[:, k]
    beta_hat = estimator(readout, plan, cfg)
    err = beta_hat - beta_true
    loss = n_copies * np.einsum("si,ij,sj->s", err, W, err)
    e1, e2 = chunk_moments(err)
    r1, r2 = chunk_moments(readout)
    yx = readout_to_y(readout, plan, cfg)[:, ct.x_index] if ct.x_index else np.zeros((size, 0))
    l1, l2 = chunk_moments(y_inf[:, ct.x_index]) if ct.x_index else (np.zeros(0), np.zeros((0, 0)))
    x1, x2 = chunk_moments(yx) if ct.x_index else (np.zeros(0), np.zeros((0, 0)))
    acc = {
        "e1": e1, "e2": e2, "r1": r1, "r2": r2,
        "l1": l1, "l2": l2, "x1": x1, "x2": x2,
        "loss1": np.array([loss.sum()]), "loss2": np.array([loss @ loss]),
    }
    keep = (readout, beta_hat) if cfg.store_outcomes else None
    return acc, keep


def _reduce(accs: list[dict]) -> dict:
    return {k: pairwise_reduce([a[k] for a in accs]) for k in accs[0]}


def simulate_plan(
    plan: SchemePlan,
    beta_true,
    cfg: SchemeConfig,
    rho_true: Optional[np.ndarray] = None,
    n_copies: Optional[int] = None,
) -> RunResult:
    """Run the Gaussian engine for a given plan.

    The Y statistics are those of the true state when ``rho_true`` is given
    (mean sqrt(M) L^-1 tr(rho X), covariance L^-1 Cov(X) L^-T); otherwise the
    plan's covariance at the preliminary point is used with mean
    sqrt(M) L^-1 beta_true.
    """
    M = cfg.M
    n_copies = M if n_copies is None else int(n_copies)
    beta_true = np.asarray(beta_true, dtype=float)
    Linv = plan.ct.L_inv
    if rho_true is not None:
        mx, cx = state_moments(plan.X, rho_true)
        mean_y = np.sqrt(M) * Linv @ mx
        cov_y = Linv @ cx @ Linv.T
    else:
        mean_y = np.sqrt(M) * Linv @ beta_true
        cov_y = plan.cov_y
    w, V = np.linalg.eigh((cov_y + cov_y.T) / 2)
    sqrt_cov = V * np.sqrt(np.clip(w, 0, None))
    sizes = chunk_sizes(cfg.samples, cfg.chunk)

    def job(i):
        return _chunk(plan, cfg, mean_y, sqrt_cov, beta_true, n_copies, i, sizes[i], plan.W)

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    acc = _reduce([p[0] for p in parts])
    S = cfg.samples
    Vmat = acc["e2"] / S
    Vmat = (Vmat + Vmat.T) / 2
    bias = acc["e1"] / S
    rmean = acc["r1"] / S
    rcov = acc["r2"] / S - np.outer(rmean, rmean)
    loss_mean = float(acc["loss1"][0] / S)
    loss_var = float(acc["loss2"][0] / S) - loss_mean**2
    se = float(np.sqrt(max(loss_var, 0.0) / S))
    diag = {
        "kappa_t": cfg.kappa * cfg.t,
        "gamma_t": cfg.gamma_t,
        "predicted_error": plan.predicted_error(cfg),
        "predicted_cov": plan.predicted_cov(cfg),
        "gdyne": [{"zeta": g.zeta, "phi": g.phi} for g in plan.gdyne],
        "nu": plan.ct.nu,
        "latent_mean": mean_y,
    }
    if plan.ct.x_index:
        lm = acc["l1"] / S
        xm = acc["x1"] / S
        lvar = np.diag(acc["l2"] / S) - lm**2
        xvar = np.diag(acc["x2"] / S) - xm**2
        diag["x_readout_var"] = xvar
        diag["x_latent_var"] = lvar
        diag["x_excess_var"] = xvar - lvar
        diag["x_excess_predicted"] = np.full(len(xm), cfg.x_var / cfg.gamma_t**2)
    outcomes = beta_hat = None
    if cfg.store_outcomes:
        outcomes = np.concatenate([p[1][0] for p in parts])
        beta_hat = np.concatenate([p[1][1] for p in parts])
    return RunResult(
        V=Vmat,
        scaled_error=float(n_copies * np.trace(plan.W @ Vmat)),
        scaled_error_se=se,
        n_copies=n_copies,
        M=M,
        bias=bias,
        readout_mean=rmean,
        readout_cov=(rcov + rcov.T) / 2,
        samples=S,
        engine="linearized",
        outcomes=outcomes,
        beta_hat=beta_hat,
        diagnostics=diag,
        config=cfg.to_dict(),
    )


def linearized_simulate(
    model: FiniteDimModel,
    theta_true,
    theta_check,
    cfg: Optional[SchemeConfig] = None,
    W=None,
    influence: str = "hel",
) -> RunResult:
    cfg = cfg or SchemeConfig()
    plan = design_scheme(model, theta_check, W, cfg, influence)
    beta_true = model.evaluate(theta_true, check=False).beta
    res = simulate_plan(plan, beta_true, cfg, rho_true=model.rho(theta_true))
    res.diagnostics["theta_check"] = np.asarray(theta_check, dtype=float)
    res.diagnostics["plan"] = plan.to_dict()
    return res
