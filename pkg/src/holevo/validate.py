"""Quick invariant suite on built-in fixtures (the ``validate`` command)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import efficient_influence, gamma_matrix, hn_bound
from .canonical import canonical_transform
from .gaussian import fock_gamma, gaussian_bound_report, gaussian_gamma
from .linalg import jordan_product, lyapunov_solve
from .models import make_spin_model, qubit_restricted_model, random_model, random_real_thermal_model
from .scheme.config import SchemeConfig
from .scheme.linear import linearized_simulate
from .scheme.plan import optimize_gdyne


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float


def _qubit_fixture() -> str:
    rep = hn_bound(make_spin_model(2, (0.4, 0, 0)))
    ok = abs(rep.hel - 0.59) < 1e-9 and abs(rep.c_at_hel - 0.99) < 1e-9 and abs(rep.hn - 0.99) < 1e-9 and rep.null_dim == 0
    assert ok, f"hel={rep.hel} c={rep.c_at_hel} hn={rep.hn} null_dim={rep.null_dim}"
    return f"hel={rep.hel:.12g} hn={rep.hn:.12g}"


def _sandwich() -> str:
    rng = np.random.default_rng(7)
    models = [qubit_restricted_model(0.5)] + [random_model(d, k, 2, rng) for d, k in ((2, 3), (3, 4), (3, 8))]
    worst = -math.inf
    for m in models:
        rep = hn_bound(m)
        rep.check_sandwich()
        worst = max(worst, rep.hel - rep.hn, rep.hn - rep.c_at_hel, rep.c_at_hel - 2 * rep.hel)
    return f"{len(models)} models, worst slack {worst:.2e}"


def _lyapunov() -> str:
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = A @ A.conj().T
    rho /= np.trace(rho).real
    G = rng.normal(size=(4, 4))
    G = G + G.T
    S = lyapunov_solve(rho, G)
    res = np.max(np.abs(jordan_product(rho, S) - G))
    assert res < 1e-10, res
    return f"residual {res:.1e}"


def _canonical() -> str:
    pt = make_spin_model(2, (0.4, 0, 0)).evaluate()
    g = gamma_matrix(pt.rho, efficient_influence(pt).delta)
    ct = canonical_transform(g.im)
    scale = ct.L[:, :2]
    ok = ct.r == 1 and abs(abs(np.linalg.norm(scale[:, 0])) - math.sqrt(0.4)) < 1e-10
    assert ok, ct.to_dict()
    return f"nu={ct.nu.tolist()}"


def _gaussian() -> str:
    rng = np.random.default_rng(5)
    m = random_real_thermal_model(2, 3, rng)
    rep = gaussian_bound_report(m, m.theta0)
    assert abs(rep.hn - rep.hel) < 1e-7 and abs(rep.c_at_hel - rep.hel) < 1e-7
    D = np.array([np.diag([1.0])])
    g, _ = fock_gamma(D, np.array([[0.5]]), 40)
    assert abs(g.re[0, 0] - 0.75) < 1e-5
    assert abs(gaussian_gamma(D, np.array([[0.5]])).re[0, 0] - 0.75) < 1e-12
    return f"hel=hn={rep.hel:.6g}; number variance {g.re[0, 0]:.8f}"


def _gdyne() -> str:
    G = np.array([[2.0, 0.3], [0.3, 0.5]])
    s = optimize_gdyne(G)
    val = float(np.trace(G @ s.cov))
    assert abs(val - math.sqrt(np.linalg.det(G))) < 1e-9
    return f"tr(GN)={val:.10f}"


def _linear_engine() -> str:
    m = make_spin_model(2, (0.4, 0, 0))
    res = linearized_simulate(m, m.theta0, m.theta0, SchemeConfig(samples=100_000, seed=3))
    pred = res.diagnostics["predicted_error"]
    z = (res.scaled_error - pred) / res.scaled_error_se
    assert abs(z) < 4, z
    return f"N*error={res.scaled_error:.4f} predicted={pred:.4f}"


def _reproducible() -> str:
    m = make_spin_model(2, (0.4, 0, 0))
    cfg = SchemeConfig(samples=5000, chunk=1000, seed=11)
    a = linearized_simulate(m, m.theta0, m.theta0, cfg).scaled_error
    b = linearized_simulate(m, m.theta0, m.theta0, cfg.replace(threads=2)).scaled_error
    assert a == b
    return "bitwise equal across thread counts"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("qubit fixture values", _qubit_fixture),
    ("bound chain", _sandwich),
    ("lyapunov residual", _lyapunov),
    ("canonical transform", _canonical),
    ("gaussian chain collapse and Fock oracle", _gaussian),
    ("general-dyne optimum", _gdyne),
    ("linearized engine vs prediction", _linear_engine),
    ("seeded reproducibility", _reproducible),
]


def run_checks() -> list[Check]:
    out = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail, ok = fn(), True
        except Exception as exc:  # report, do not abort the table
            detail, ok = f"{type(exc).__name__}: {exc}", False
        out.append(Check(name, ok, detail, time.perf_counter() - t0))
    return out


def format_table(checks: list[Check]) -> str:
    w = max(len(c.name) for c in checks)
    lines = [f"{'check':<{w}}  result  detail"]
    for c in checks:
        lines.append(f"{c.name:<{w}}  {'PASS' if c.passed else 'FAIL'}    {c.detail}")
    return "\n".join(lines)
