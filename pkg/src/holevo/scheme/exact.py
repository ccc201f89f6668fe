"""Small-M Fock-space engine.

The M objects and the ancillas evolve under

    H = kappa sum_pairs (q^(M) p' - p^(M) q') + gamma sum_x x^(M) p''

with q^(M) etc. the collective versions of the plan's Y observables. For
qubits the collective operators are block diagonal over total spin, so each
block is evolved separately; other dimensions use the full tensor product.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .._kernels import joint_density, quadratic_forms
from ..linalg import DEFAULT_TOL, collective_embed, embed, kron
from ..models import FiniteDimModel, TruncationError, spin_matrices
from .config import RunResult, SchemeConfig
from .fock import gaussian_state, gdyne_vectors, homodyne_vectors, quadratures, top_population
from .linear import estimator, linear_readout_moments
from .plan import SchemePlan, design_scheme
from .rng import chunk_sizes, generator

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


class BudgetError(ValueError):
    pass


class GridMassError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    weight: float
    Y: np.ndarray  # (n, D, D) collective observables restricted to the block
    rho: np.ndarray  # normalized block state


def qubit_blocks(Y: np.ndarray, rho: np.ndarray, M: int) -> list[Block]:
    """Total-spin decomposition of rho^{(x)M} and of the collective Y^(M).

    A qubit observable y0 I + y.sigma gives sqrt(M) y0 I + (2/sqrt(M)) y.J on
    the spin-j block; the product state contributes weight
    mult(j) * tr(block) with the usual multiplicity C(M, M/2-j) - C(M, M/2-j-1).
    """
    y0 = np.real(np.einsum("jaa->j", Y)) / 2
    yv = np.real(np.einsum("kab,jba->jk", PAULI, Y)) / 2
    bloch = np.real(np.einsum("kab,ba->k", PAULI, rho))
    rad = float(np.linalg.norm(bloch))
    p, q = (1 + rad) / 2, (1 - rad) / 2
    out = []
    j = M / 2
    while j >= 0:
        k = int(round(M / 2 - j))
        mult = comb(M, k) - (comb(M, k - 1) if k >= 1 else 0)
        dim = int(round(2 * j + 1))
        s = spin_matrices(dim) if dim > 1 else np.zeros((3, 1, 1), dtype=complex)
        if rad > 1e-15:
            w, V = np.linalg.eigh(np.einsum("k,kab->ab", bloch / rad, s))
            w = np.round(2 * w) / 2  # exact half-integers so that 0**0 stays 1 for pure states
            pops = p ** (M / 2 + w) * q ** (M / 2 - w)
            blk = (V * pops) @ V.conj().T
        else:
            blk = np.eye(dim) * 0.5**M
        tr = float(np.real(np.trace(blk)))
        if tr * mult > 0:
            Yb = np.sqrt(M) * y0[:, None, None] * np.eye(dim) + (2 / np.sqrt(M)) * np.einsum("jk,kab->jab", yv, s)
            out.append(Block(weight=mult * tr, Y=Yb, rho=blk / tr))
        j -= 1
    return out


def tensor_blocks(Y: np.ndarray, rho: np.ndarray, M: int, max_dim: int) -> list[Block]:
    d = rho.shape[0]
    if d**M > max_dim:
        raise BudgetError(f"object space dimension {d}^{M} exceeds {max_dim}")
    Yc = np.array([collective_embed(y, M, max_dim) for y in Y])
    return [Block(weight=1.0, Y=Yc, rho=kron(*([rho] * M)))]


def _ancilla_roles(plan: SchemePlan) -> list[tuple[str, list[int]]]:
    roles = [("pair", [a, b]) for a, b in plan.ct.pair_index]
    roles += [("x", [k]) for k in plan.ct.x_index]
    return roles


def ancilla_operators(n_anc: int, K: int) -> list[tuple[np.ndarray, np.ndarray]]:
    q, p = quadratures(K)
    dims = [K] * n_anc
    return [(embed(q, i, dims), embed(p, i, dims)) for i in range(n_anc)]


def coupling_hamiltonian(Yb: np.ndarray, roles, anc_ops, kappa: float, gamma: float) -> np.ndarray:
    D = Yb.shape[1]
    A = anc_ops[0][0].shape[0] if anc_ops else 1
    H = np.zeros((D * A, D * A), dtype=complex)
    for (kind, idx), (qa, pa) in zip(roles, anc_ops):
        if kind == "pair":
            if kappa:
                H += kappa * (np.kron(Yb[idx[0]], pa) - np.kron(Yb[idx[1]], qa))
        elif gamma:
            H += gamma * np.kron(Yb[idx[0]], pa)
    return (H + H.conj().T) / 2


def build_hamiltonian(Y_ops, ct, M: int, cfg: SchemeConfig) -> np.ndarray:
    """Full collective Hamiltonian on object^(x)M (x) ancillas (pairs first, then x channels)."""
    Y_ops = np.asarray(Y_ops, dtype=complex)
    d = Y_ops.shape[1]
    n_anc = ct.r + len(ct.x_index)
    total = d**M * cfg.ancilla_cutoff**n_anc
    if total > min(cfg.max_exact_dim, DEFAULT_TOL.max_dim):
        raise BudgetError(f"total dimension {total} exceeds the budget")
    Yc = np.array([collective_embed(y, M) for y in Y_ops])
    roles = [("pair", [a, b]) for a, b in ct.pair_index] + [("x", [k]) for k in ct.x_index]
    ops = ancilla_operators(n_anc, cfg.ancilla_cutoff)
    if not roles:
        return np.zeros((d**M, d**M), dtype=complex)
    return coupling_hamiltonian(Yc, roles, ops, np.sqrt(M) * cfg.kappa1, np.sqrt(M) * cfg.gamma1)


class ExactEngine:
    """Evolution of object blocks (x) ancillas with eigendecompositions reused across times."""

    def __init__(self, plan: SchemePlan, rho_true: np.ndarray, cfg: SchemeConfig, blocks: Optional[list[Block]] = None):
        if cfg.M > cfg.exact_M_cap:
            raise BudgetError(f"M = {cfg.M} exceeds the exact-engine cap {cfg.exact_M_cap}")
        self.plan, self.cfg = plan, cfg
        self.roles = _ancilla_roles(plan)
        n_anc = len(self.roles)
        if n_anc == 0:
            raise ValueError("nothing to measure: the plan has no channels")
        if n_anc > 2 or sum(k == "pair" for k, _ in self.roles) > 1:
            raise BudgetError("the exact engine supports at most two ancillas with at most one quadrature pair")
        K = cfg.ancilla_cutoff
        self.K, self.n_anc = K, n_anc
        self.anc_dims = [K] * n_anc
        A = K**n_anc
        self.anc_ops = ancilla_operators(n_anc, K)
        states, crop = [], []
        for kind, _ in self.roles:
            if kind == "pair":
                s, dft = gaussian_state(K, cfg.pair_var, cfg.pair_var)
            else:
                s, dft = gaussian_state(K, cfg.x_var, cfg.x_var_p)
            states.append(s)
            crop.append(dft)
        self.crop_deficit = crop
        if max(crop) > cfg.deficit_tol:
            raise TruncationError(f"initial ancilla state loses {max(crop):.2e} to the Fock cutoff {K}")
        self.rho_anc0 = kron(*states)
        if blocks is None:
            d = rho_true.shape[0]
            if d == 2:
                blocks = qubit_blocks(plan.Y, rho_true, cfg.M)
            else:
                blocks = tensor_blocks(plan.Y, rho_true, cfg.M, cfg.max_exact_dim // A)
        self.blocks = blocks
        self._eig = []
        for b in blocks:
            D = b.rho.shape[0]
            if D * A > cfg.max_exact_dim:
                raise BudgetError(f"block dimension {D}*{A} exceeds max_exact_dim {cfg.max_exact_dim}")
            H = coupling_hamiltonian(b.Y, self.roles, self.anc_ops, cfg.kappa, cfg.gamma)
            E, V = np.linalg.eigh(H)
            r0 = V.conj().T @ np.kron(b.rho, self.rho_anc0) @ V
            self._eig.append((E, V, r0, D))

    def block_states(self, t: float):
        for (E, V, r0, D), b in zip(self._eig, self.blocks):
            ph = np.exp(-1j * E * t)
            yield b.weight, V @ (r0 * np.outer(ph, ph.conj())) @ V.conj().T, D

    def ancilla_state(self, t: float, check_positivity: bool = False) -> tuple[np.ndarray, dict]:
        A = self.K**self.n_anc
        out = np.zeros((A, A), dtype=complex)
        min_eig = np.inf
        for w, rt, D in self.block_states(t):
            out += w * np.einsum("iaib->ab", rt.reshape(D, A, D, A))
            if check_positivity:
                min_eig = min(min_eig, float(np.linalg.eigvalsh((rt + rt.conj().T) / 2)[0]))
        out = (out + out.conj().T) / 2
        info = {"trace": float(np.real(np.trace(out)))}
        if check_positivity:
            info["min_eig_total"] = min_eig
        info["top_population"] = [top_population(out, self.anc_dims, i) for i in range(self.n_anc)]
        return out, info

    def checked_state(self, t: float, checkpoints=(0.25, 0.5, 0.75, 1.0)) -> tuple[np.ndarray, dict]:
        """Ancilla state at t after trace, positivity and truncation checks at intermediate times."""
        deficits = []
        for c in checkpoints[:-1]:
            _, inf = self.ancilla_state(c * t)
            deficits.append(max(inf["top_population"]))
        rho, info = self.ancilla_state(t, check_positivity=True)
        deficits.append(max(info["top_population"]))
        if abs(info["trace"] - 1) > 1e-10:
            raise RuntimeError(f"evolution lost trace: {info['trace']!r}")
        if info["min_eig_total"] < -1e-10:
            raise RuntimeError(f"evolved state lost positivity: {info['min_eig_total']:.2e}")
        deficit = max(deficits) + max(self.crop_deficit)
        info["checkpoint_top_population"] = deficits
        info["truncation_deficit"] = deficit
        info["commutator_defect"] = self.K * max(deficits)
        if deficit > self.cfg.deficit_tol:
            raise TruncationError(f"truncation deficit {deficit:.2e} exceeds {self.cfg.deficit_tol}")
        if info["commutator_defect"] > 0.05:
            raise TruncationError("ancilla cutoff too small: [q, p] deviates from i on the occupied levels")
        return rho, info

    def ancilla_moments(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and symmetrized covariance of the ancilla quadratures in readout order."""
        ops = []
        for (kind, _), (qa, pa) in zip(self.roles, self.anc_ops):
            ops.extend([qa, pa] if kind == "pair" else [qa])
        m = np.array([np.real(np.trace(rho @ o)) for o in ops])
        c = np.array([[np.real(np.trace(rho @ (a @ b + b @ a))) / 2 for b in ops] for a in ops]) - np.outer(m, m)
        return m, c

    # ------------------------------------------------------------ readout

    def _axes(self, rho):
        """Per-ancilla outcome grids: list of (points (G, k), cell weight, vectors (G, K))."""
        cfg = self.cfg
        m, c = self.ancilla_moments(rho)
        axes, pos = [], 0
        for j, (kind, _) in enumerate(self.roles):
            if kind == "pair":
                setting = self.plan.gdyne[0]
                g = np.linspace(-cfg.grid_halfwidth, cfg.grid_halfwidth, cfg.grid_points)
                h = g[1] - g[0]
                Q, P = np.meshgrid(g + m[pos], g + m[pos + 1], indexing="ij")
                vecs = gdyne_vectors(Q, P, setting, self.K)
                axes.append((np.stack([Q.ravel(), P.ravel()], 1), h * h / (2 * np.pi), vecs, h))
                pos += 2
            else:
                half = cfg.homodyne_halfwidth_sd * np.sqrt(max(c[pos, pos], 1e-12))
                g = np.linspace(-half, half, cfg.homodyne_bins) + m[pos]
                h = g[1] - g[0]
                axes.append((g[:, None], h, homodyne_vectors(g, self.K).astype(complex), h))
                pos += 1
        return axes

    def outcome_density(self, rho: np.ndarray):
        """Discretized joint outcome probabilities and the per-axis grids."""
        axes = self._axes(rho)
        if self.n_anc == 1:
            pts, wcell, vecs, _ = axes[0]
            P = quadratic_forms(vecs, rho) * wcell
        else:
            (p1, w1, v1, _), (p2, w2, v2, _) = axes
            rho4 = rho.reshape(self.K, self.K, self.K, self.K)
            if np.allclose(v2.imag, 0):
                P = joint_density(v1, v2.real, rho4) * (w1 * w2)
            else:  # pragma: no cover - two pair ancillas are refused earlier
                raise BudgetError("two general-dyne channels are not supported")
        return np.clip(P, 0, None), axes

    def readout(self, t: Optional[float] = None) -> dict:
        cfg = self.cfg
        t = cfg.t if t is None else t
        rho, info = self.checked_state(t)
        P, axes = self.outcome_density(rho)
        mass = float(P.sum())
        info["grid_mass"] = mass
        if abs(1 - mass) > cfg.mass_tol:
            raise GridMassError(f"grid mass deficit {1 - mass:.2e} exceeds {cfg.mass_tol}")
        P = P / mass
        # grid moments in plan channel order
        coords = self._grid_coords(axes)
        flat = P.ravel()
        mean = flat @ coords
        cov = (coords * flat[:, None]).T @ coords - np.outer(mean, mean)
        am, ac = self.ancilla_moments(rho)
        return {"P": flat, "axes": axes, "grid_mean": mean, "grid_cov": cov, "ancilla_mean": am, "ancilla_cov": ac, "info": info, "rho": rho}

    def _grid_coords(self, axes) -> np.ndarray:
        pts = [a[0] for a in axes]
        if len(pts) == 1:
            raw = pts[0]
        else:
            G1, G2 = len(pts[0]), len(pts[1])
            raw = np.concatenate([np.repeat(pts[0], G2, axis=0), np.tile(pts[1], (G1, 1))], axis=1)
        return self._to_plan_order(raw)

    def _to_plan_order(self, raw: np.ndarray) -> np.ndarray:
        out = np.empty((raw.shape[0], self.plan.n))
        pos = 0
        for kind, idx in self.roles:
            w = len(idx)
            out[:, idx] = raw[:, pos : pos + w]
            pos += w
        return out

    def sample(self, P: np.ndarray, axes, n: int) -> np.ndarray:
        """Draw readouts from the discretized density with uniform jitter inside each cell."""
        cdf = np.cumsum(P)
        cdf /= cdf[-1]
        coords = self._grid_coords(axes)
        spacing = np.concatenate([[a[3]] * a[0].shape[1] for a in axes])
        spacing = self._to_plan_order(spacing[None, :])[0]
        out = []
        for c, size in enumerate(chunk_sizes(n, self.cfg.chunk)):
            rng = generator(self.cfg.seed, "exact", c)
            idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), cdf.size - 1)
            jitter = (rng.random((size, self.plan.n)) - 0.5) * spacing
            out.append(coords[idx] + jitter)
        return np.concatenate(out)


def exact_run(plan: SchemePlan, rho_true, beta_true, cfg: SchemeConfig) -> RunResult:
    eng = ExactEngine(plan, rho_true, cfg)
    ro = eng.readout()
    outcomes = eng.sample(ro["P"], ro["axes"], cfg.samples)
    beta_hat = estimator(outcomes, plan, cfg)
    err = beta_hat - np.asarray(beta_true, dtype=float)
    V = err.T @ err / cfg.samples
    loss = cfg.M * np.einsum("si,ij,sj->s", err, plan.W, err)
    rmean = outcomes.mean(axis=0)
    rcov = np.cov(outcomes.T, bias=True).reshape(plan.n, plan.n)
    lm, lc = linear_readout_moments(plan, rho_true, cfg)
    diag = {
        "linear_mean": lm,
        "linear_cov": lc,
        "mean_gap": float(np.linalg.norm(ro["grid_mean"] - lm) / max(np.linalg.norm(lm), 1e-12)),
        "cov_gap": float(np.linalg.norm(ro["grid_cov"] - lc) / np.linalg.norm(lc)),
        "grid_mean": ro["grid_mean"],
        "grid_cov": ro["grid_cov"],
        "ancilla_mean": ro["ancilla_mean"],
        "ancilla_cov": ro["ancilla_cov"],
        "truncation_deficit": ro["info"]["truncation_deficit"],
        "checkpoint_top_population": ro["info"]["checkpoint_top_population"],
        "grid_mass": ro["info"]["grid_mass"],
        "trace": ro["info"]["trace"],
        "min_eig_total": ro["info"]["min_eig_total"],
        "blocks": len(eng.blocks),
        "kappa_t": cfg.kappa * cfg.t,
        "gamma_t": cfg.gamma_t,
    }
    return RunResult(
        V=(V + V.T) / 2,
        scaled_error=float(cfg.M * np.trace(plan.W @ V)),
        scaled_error_se=float(loss.std() / np.sqrt(cfg.samples)),
        n_copies=cfg.M,
        M=cfg.M,
        bias=err.mean(axis=0),
        readout_mean=rmean,
        readout_cov=(rcov + rcov.T) / 2,
        samples=cfg.samples,
        engine="exact",
        outcomes=outcomes if cfg.store_outcomes else None,
        beta_hat=beta_hat if cfg.store_outcomes else None,
        diagnostics=diag,
        config=cfg.to_dict(),
    )


def exact_evolve_and_measure(
    model: FiniteDimModel,
    theta_true,
    theta_check,
    cfg: Optional[SchemeConfig] = None,
    W=None,
    influence: str = "hel",
) -> RunResult:
    # the default ancilla settings of SchemeConfig target the Gaussian engine;
    # small-M runs need gamma t of order one and an unsqueezed x ancilla
    cfg = cfg or SchemeConfig(M=4, gamma1=1.0, x_var=0.5, samples=20_000)
    plan = design_scheme(model, theta_check, W, cfg, influence)
    res = exact_run(plan, model.rho(theta_true), model.evaluate(theta_true, check=False).beta, cfg)
    res.diagnostics["theta_check"] = np.asarray(theta_check, dtype=float)
    return res


def gaussian_overlap(m1, c1, m2, c2) -> float:
    """Bhattacharyya coefficient of two Gaussian densities."""
    m1, m2 = np.asarray(m1, float), np.asarray(m2, float)
    c = (np.asarray(c1) + np.asarray(c2)) / 2
    dm = m1 - m2
    db = dm @ np.linalg.solve(c, dm) / 8 + 0.5 * np.log(
        np.linalg.det(c) / np.sqrt(np.linalg.det(c1) * np.linalg.det(c2))
    )
    return float(np.exp(-db))


def kappa_t_sweep(plan: SchemePlan, rho_true, cfg: SchemeConfig, values) -> list[dict]:
    """Overlap of the pair-ancilla quadrature statistics with the collective Y pair statistics.

    The target is the Gaussian with the exact mean and covariance of
    (q^(M), p^(M)) under the true product state; one eigendecomposition is
    shared by all interaction times.
    """
    if plan.ct.r == 0:
        raise ValueError("the plan has no quadrature pair")
    eng = ExactEngine(plan, rho_true, cfg)
    a, b = plan.ct.pair_index[0]
    tm = np.zeros(2)
    tc = np.zeros((2, 2))
    for blk in eng.blocks:
        ops = [blk.Y[a], blk.Y[b]]
        mb = np.array([np.real(np.trace(blk.rho @ o)) for o in ops])
        tm += blk.weight * mb
        tc += blk.weight * np.array([[np.real(np.trace(blk.rho @ (x @ y + y @ x))) / 2 for y in ops] for x in ops])
    tc -= np.outer(tm, tm)
    rows = []
    for kt in values:
        rho, info = eng.checked_state(float(kt) / cfg.kappa)
        m, c = eng.ancilla_moments(rho)
        rows.append(
            {
                "kappa_t": float(kt),
                "fidelity": gaussian_overlap(m[:2], c[:2, :2], tm, tc),
                "ancilla_mean": m[:2],
                "ancilla_cov": c[:2, :2],
                "truncation_deficit": info["truncation_deficit"],
            }
        )
    return rows
