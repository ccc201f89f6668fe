"""Acceptance criteria, one check per criterion.

Runs under pytest (one PASS/FAIL line per criterion is printed in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from holevo.bounds import efficient_influence, gamma_matrix, hn_bound
from holevo.canonical import canonical_transform, y_observables
from holevo.gaussian import fock_gamma, gaussian_bound_report, gaussian_gamma, thermal_efficient_influence
from holevo.models import (
    make_spin_model,
    qubit_restricted_model,
    random_model,
    random_real_thermal_model,
    spin_matrices,
)
from holevo.scheme import (
    SchemeConfig,
    design_scheme,
    exact_run,
    kappa_t_sweep,
    linearized_simulate,
    separable_baseline,
)

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = (0.4, 0.0, 0.0)


def _fixture():
    return make_spin_model(2, FIXTURE)


def crit_1():
    rng = np.random.default_rng(2024)
    models = [random_model(d, k, n, rng) for d, k, n in [(2, 3, 2), (3, 8, 2), (3, 5, 3), (2, 2, 2), (3, 4, 2)] * 10]
    models += [_fixture(), make_spin_model(3, [0.1] * 8), qubit_restricted_model(0.5)]
    worst = -math.inf
    for m in models:
        rep = hn_bound(m)
        worst = max(worst, rep.hel - rep.hn, rep.hn - rep.c_at_hel, rep.c_at_hel - 2 * rep.hel)
    return worst <= 1e-7, f"{len(models)} models, worst chain violation {worst:.2e} (tol 1e-7)"


def crit_2():
    rep = hn_bound(_fixture())
    errs = [abs(rep.hel - 0.59), abs(rep.c_at_hel - 0.99), abs(rep.hn - 0.99)]
    ok = max(errs) <= 1e-9 and rep.null_dim == 0
    return ok, f"Hel={rep.hel:.12f} C={rep.c_at_hel:.12f} HN={rep.hn:.12f} null_dim={rep.null_dim}"


def crit_3():
    pt = _fixture().evaluate()
    inf = efficient_influence(pt)
    ct = canonical_transform(gamma_matrix(pt.rho, inf.delta).im)
    s = spin_matrices(2)
    Y = y_observables(inf.observables(), ct, pt.rho)
    # up to sign, the pair is (s2, s3) / sqrt(0.4) and the commuting block is s1
    targets = [s[1] / math.sqrt(0.4), s[2] / math.sqrt(0.4), s[0]]
    err = max(min(np.max(np.abs(Y[j] - t)), np.max(np.abs(Y[j] + t))) for j, t in enumerate(targets))
    scale_err = abs(np.linalg.norm(ct.L[:, 0]) - math.sqrt(0.4))
    ok = ct.r == 1 and err <= 1e-10 and scale_err <= 1e-10
    return ok, f"r={ct.r} operator error {err:.1e} scale error {scale_err:.1e}"


def crit_4():
    rng = np.random.default_rng(4)
    worst_im = worst_gap = 0.0
    n = 24
    for i in range(n):
        m = random_real_thermal_model(2, 2 + i % 2, rng)
        rep = gaussian_bound_report(m, m.theta0)
        worst_im = max(worst_im, rep.diagnostics["max_abs_im_gamma"])
        worst_gap = max(worst_gap, abs(rep.hn - rep.hel), abs(rep.c_at_hel - rep.hel))
    ok = worst_im <= 1e-9 and worst_gap <= 1e-7
    return ok, f"{n} models, max|Im Gamma| {worst_im:.1e}, max chain gap {worst_gap:.1e}"


def crit_5():
    g, _ = fock_gamma(np.array([[[1.0]]]), np.array([[0.5]]), 40)
    var_err = abs(g.re[0, 0] - 0.75)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(3):
        m = random_real_thermal_model(2, 3, rng)
        pt = m.evaluate()
        D = thermal_efficient_influence(pt)
        exact = gaussian_gamma(D, pt.upsilon).gamma
        fock, _ = fock_gamma(D, pt.upsilon, 40)
        worst = max(worst, float(np.max(np.abs(exact - fock.gamma))))
    ok = var_err <= 1e-5 and worst <= 1e-5
    return ok, f"number variance error {var_err:.1e}, two-mode Gamma error {worst:.1e}"


def crit_6():
    m = _fixture()
    res = linearized_simulate(m, m.theta0, m.theta0, SchemeConfig(samples=1_000_000, seed=2024))
    base = separable_baseline(m, m.theta0, 10**4, repetitions=0).analytic
    z = (res.scaled_error - 0.99) / res.scaled_error_se
    ok = abs(z) <= 3 and res.scaled_error < base
    return ok, f"N*error={res.scaled_error:.5f} +/- {res.scaled_error_se:.5f} (z={z:+.2f}), baseline {base:.4f}"


def _exact_cfg(M, **kw):
    return SchemeConfig(M=M, gamma1=1.0, x_var=0.5, ancilla_cutoff=12, samples=2000, seed=7).replace(**kw)


def crit_7():
    m = _fixture()
    theta, check = np.array([0.4, 0.05, -0.05]), np.array([0.4, 0.0, 0.0])
    gaps, deficits = [], []
    for M in (2, 4, 6):
        cfg = _exact_cfg(M)
        plan = design_scheme(m, check, None, cfg)
        res = exact_run(plan, m.rho(theta), m.evaluate(theta, check=False).beta, cfg)
        gaps.append(res.diagnostics["mean_gap"])
        deficits.append(res.diagnostics["truncation_deficit"])
    limit = 10 * (1 / math.sqrt(6) + deficits[-1])
    ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] <= limit
    return ok, "mean gaps " + ", ".join(f"{g:.4f}" for g in gaps) + f"; limit at M=6 {limit:.3f}; deficit {deficits[-1]:.1e}"


def crit_8():
    m = _fixture()
    theta, check = np.array([0.4, 0.05, -0.05]), np.array([0.4, 0.0, 0.0])
    cfg = _exact_cfg(6, gamma1=0.5)
    plan = design_scheme(m, check, None, cfg)
    values = [math.pi / 4, math.pi / 2, 3 * math.pi / 4]
    rows = kappa_t_sweep(plan, m.rho(theta), cfg, values)
    fid = [r["fidelity"] for r in rows]
    ok = int(np.argmax(fid)) == 1
    return ok, "fidelity " + ", ".join(f"{f:.5f}" for f in fid) + " at kt = pi/4, pi/2, 3pi/4"


def crit_9():
    m = _fixture()
    out, ok = [], True
    for gt in (1.0, 2.0, 5.0, 10.0):
        cfg = SchemeConfig(samples=1_000_000, x_var=0.5, gamma1=gt / (math.pi / 2), seed=9)
        res = linearized_simulate(m, m.theta0, m.theta0, cfg)
        meas = float(res.diagnostics["x_excess_var"][0])
        pred = float(res.diagnostics["x_excess_predicted"][0])
        rel = abs(meas / pred - 1)
        ok &= rel <= 0.2
        out.append(f"{gt:g}:{rel:.3f}")
    return ok, "relative deviation by gamma t " + " ".join(out)


def crit_10():
    cfg = ROOT / "configs" / "qubit_linear.yaml"
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            cmd = [sys.executable, "-m", "holevo.cli", "run", "--config", str(cfg), "--out", str(out), "--override", "scheme.samples=20000"]
            subprocess.run(cmd, check=True, capture_output=True)
            blobs.append((out / "report.json").read_bytes())
    return blobs[0] == blobs[1], f"report.json {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}"


CRITERIA = [
    (1, "bound chain on random and built-in models", crit_1),
    (2, "qubit fixture values", crit_2),
    (3, "canonical transform of the fixture", crit_3),
    (4, "real mutual coherence collapses the chain", crit_4),
    (5, "Gaussian Gamma against the Fock oracle", crit_5),
    (6, "linearized scheme attains C", crit_6),
    (7, "exact engine approaches the Gaussian engine", crit_7),
    (8, "transfer fidelity peaks at kt = pi/2", crit_8),
    (9, "homodyne excess variance", crit_9),
    (10, "byte-identical reports", crit_10),
]


def _line(num, name, ok, detail):
    return f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"


@pytest.mark.parametrize("num,name,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, name, fn):
    from conftest import ACCEPTANCE_LINES

    try:
        ok, detail = fn()
    except Exception as exc:
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    line = _line(num, name, ok, detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for num, name, fn in CRITERIA:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed += not ok
        print(_line(num, name, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
