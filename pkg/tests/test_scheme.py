import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holevo.linalg import collective_embed
from holevo.models import gell_mann, make_nonparametric_model, make_spin_model, qubit_restricted_model, spin_matrices
from holevo.scheme import (
    AcquisitionError,
    ConfigError,
    SchemeConfig,
    acquire,
    acquisition_design,
    design_scheme,
    estimator,
    exact_run,
    linearized_simulate,
    optimize_gdyne,
    separable_baseline,
    simulate_plan,
    two_step_protocol,
)
from holevo.scheme.exact import (
    BudgetError,
    ExactEngine,
    build_hamiltonian,
    gaussian_overlap,
    qubit_blocks,
    tensor_blocks,
)
from holevo.scheme.fock import gaussian_state, gdyne_vectors, quadratures
from holevo.scheme.linear import MissingChannelError, linear_readout_moments
from holevo.scheme.plan import GdyneSetting
from holevo.scheme.rng import chunk_sizes, generator

FIX = (0.4, 0.0, 0.0)


@pytest.fixture(scope="module")
def fixture_plan():
    return design_scheme(make_spin_model(2, FIX), FIX)


# ---------------------------------------------------------------- config and rng


def test_config_validation():
    with pytest.raises(ConfigError):
        SchemeConfig(pair_var=0.3)
    with pytest.raises(ConfigError):
        SchemeConfig(x_var=0.0)
    cfg = SchemeConfig(M=100, kappa1=2.0)
    assert cfg.kappa * cfg.t == pytest.approx(math.pi / 2)


def test_streams_independent_of_order():
    a = generator(3, "latent", 5).standard_normal(4)
    generator(3, "gdyne", 5).standard_normal(100)
    b = generator(3, "latent", 5).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, generator(3, "ancilla", 5).standard_normal(4))
    assert chunk_sizes(10, 4) == [4, 4, 2]


# ---------------------------------------------------------------- general-dyne


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-0.9, 0.9))
def test_gdyne_optimum_is_sqrt_det(a, b, corr):
    G = np.array([[a, corr * math.sqrt(a * b)], [corr * math.sqrt(a * b), b]])
    s = optimize_gdyne(G)
    assert np.linalg.det(s.cov) == pytest.approx(0.25, rel=1e-10)
    assert np.trace(G @ s.cov) == pytest.approx(math.sqrt(np.linalg.det(G)), rel=1e-8)


def test_heterodyne_seed_for_isotropic_weight():
    s = optimize_gdyne(np.eye(2))
    assert abs(s.zeta) < 1e-6
    assert np.allclose(s.cov, np.eye(2) / 2, atol=1e-6)


def test_gdyne_vectors_reproduce_seed_covariance():
    setting = GdyneSetting(zeta=0.3, phi=0.4)
    K = 30
    g = np.linspace(-6, 6, 121)
    Q, P = np.meshgrid(g, g, indexing="ij")
    vecs = gdyne_vectors(Q, P, setting, K)
    # readout of vacuum: density |<0|D U 0>|^2 / 2pi, covariance 1/2 I + seed covariance
    dens = np.abs(vecs[:, 0]) ** 2 * (g[1] - g[0]) ** 2 / (2 * np.pi)
    pts = np.stack([Q.ravel(), P.ravel()], 1)
    mean = dens @ pts
    cov = (pts * dens[:, None]).T @ pts - np.outer(mean, mean)
    assert dens.sum() == pytest.approx(1, abs=1e-6)
    assert np.allclose(cov, np.eye(2) / 2 + setting.cov, atol=1e-5)


def test_gaussian_state_variances():
    K = 30
    rho, deficit = gaussian_state(K, 0.25, 1.0)
    q, p = quadratures(K)
    assert deficit < 1e-8
    assert np.trace(rho @ q @ q).real == pytest.approx(0.25, abs=1e-6)
    assert np.trace(rho @ p @ p).real == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------- linearized engine


def test_estimator_is_exact_without_noise(fixture_plan):
    cfg = SchemeConfig(M=50)
    rng = np.random.default_rng(0)
    y = rng.normal(size=(10, fixture_plan.n))
    readout = y.copy()
    readout[:, fixture_plan.ct.x_index] *= cfg.gamma_t
    beta = estimator(readout, fixture_plan, cfg)
    assert np.allclose(beta, y @ fixture_plan.ct.L.T / math.sqrt(50))


def test_missing_channels_refused(fixture_plan):
    cfg = SchemeConfig()
    with pytest.raises(MissingChannelError):
        estimator(np.zeros((3, fixture_plan.n - 1)), fixture_plan, cfg)
    bad = np.zeros((3, fixture_plan.n))
    bad[1, 0] = np.nan
    with pytest.raises(MissingChannelError):
        estimator(bad, fixture_plan, cfg)


def test_covariance_matches_prediction(fixture_plan):
    cfg = SchemeConfig(samples=200_000, seed=1)
    m = make_spin_model(2, FIX)
    res = simulate_plan(fixture_plan, m.evaluate().beta, cfg, rho_true=m.rho(m.theta0))
    pred = fixture_plan.predicted_cov(cfg) / cfg.M
    # each entry of a sample covariance has standard error sqrt((s_ii s_jj + s_ij^2) / S)
    se = np.sqrt((np.outer(np.diag(pred), np.diag(pred)) + pred**2) / cfg.samples)
    assert np.all(np.abs(res.V - pred) <= 3 * se + 1e-12)
    assert np.allclose(res.bias, 0, atol=4 * np.sqrt(np.diag(pred) / cfg.samples).max())


def test_doubling_M_halves_trace():
    m = make_spin_model(2, FIX)
    a = linearized_simulate(m, FIX, FIX, SchemeConfig(M=500, samples=100_000, seed=2))
    b = linearized_simulate(m, FIX, FIX, SchemeConfig(M=1000, samples=100_000, seed=2))
    assert np.trace(b.V) / np.trace(a.V) == pytest.approx(0.5, rel=1e-3)


def test_threads_do_not_change_results():
    m = make_spin_model(2, FIX)
    cfg = SchemeConfig(samples=50_000, chunk=7_000, seed=4)
    a = linearized_simulate(m, FIX, FIX, cfg)
    b = linearized_simulate(m, FIX, FIX, cfg.replace(threads=4))
    assert a.scaled_error == b.scaled_error
    assert np.array_equal(a.V, b.V)


def test_stored_outcomes_and_csv():
    m = make_spin_model(2, FIX)
    res = linearized_simulate(m, FIX, FIX, SchemeConfig(samples=1000, store_outcomes=True))
    assert res.outcomes.shape == (1000, 3) and res.beta_hat.shape == (1000, 3)
    lines = res.outcomes_csv().splitlines()
    assert len(lines) == 1001


# ---------------------------------------------------------------- exact engine


@pytest.mark.parametrize("M", [1, 2, 3])
def test_qubit_blocks_match_tensor_product(fixture_plan, M):
    rho = make_spin_model(2, (0.3, 0.1, -0.2)).rho([0.3, 0.1, -0.2])
    Y = fixture_plan.Y
    blocks = qubit_blocks(Y, rho, M)
    full = tensor_blocks(Y, rho, M, 4096)[0]
    assert sum(b.weight * b.rho.shape[0] ** 0 for b in blocks) == pytest.approx(1.0)
    for j in range(Y.shape[0]):
        for k in range(Y.shape[0]):
            m_blocks = sum(b.weight * np.trace(b.rho @ b.Y[j] @ b.Y[k]) for b in blocks)
            m_full = np.trace(full.rho @ full.Y[j] @ full.Y[k])
            assert m_blocks == pytest.approx(m_full, abs=1e-12)


def test_hamiltonian_hermitian_200_dim(fixture_plan):
    # two ancillas at cutoff 10 on one qubit: 2 * 100 = 200
    cfg = SchemeConfig(M=1, ancilla_cutoff=10)
    H = build_hamiltonian(fixture_plan.Y, fixture_plan.ct, 1, cfg)
    assert H.shape == (200, 200)
    assert np.allclose(H, H.conj().T)


def test_hamiltonian_vanishes_without_coupling(fixture_plan):
    cfg = SchemeConfig(M=1, ancilla_cutoff=5, kappa1=1e-300, gamma1=0.0)
    H = build_hamiltonian(fixture_plan.Y, fixture_plan.ct, 1, cfg.replace(kappa1=0.0, t_override=1.0))
    assert np.allclose(H, 0)


def test_budget_refused(fixture_plan):
    with pytest.raises(BudgetError):
        build_hamiltonian(fixture_plan.Y, fixture_plan.ct, 6, SchemeConfig(M=6, max_exact_dim=1000))


def _exact_cfg(**kw):
    return SchemeConfig(M=2, gamma1=1.0, x_var=0.5, samples=2000, seed=3).replace(**kw)


def test_no_coupling_leaves_ancillas_untouched(fixture_plan):
    m = make_spin_model(2, FIX)
    cfg = _exact_cfg(kappa1=0.0, gamma1=0.0, t_override=1.0)
    eng = ExactEngine(fixture_plan, m.rho(m.theta0), cfg)
    rho_t, info = eng.checked_state(1.0)
    assert np.allclose(rho_t, eng.rho_anc0, atol=1e-12)


def test_trace_and_positivity_preserved(fixture_plan):
    m = make_spin_model(2, FIX)
    eng = ExactEngine(fixture_plan, m.rho([0.4, 0.05, -0.05]), _exact_cfg())
    _, info = eng.checked_state(_exact_cfg().t)
    assert abs(info["trace"] - 1) < 1e-10
    assert info["min_eig_total"] > -1e-10
    assert info["truncation_deficit"] < 1e-3


def test_linear_readout_mean_scales_with_sqrt_M(fixture_plan):
    m = make_spin_model(2, FIX)
    rho = m.rho([0.4, 0.05, -0.05])
    m1, c1 = linear_readout_moments(fixture_plan, rho, _exact_cfg(M=1))
    m4, c4 = linear_readout_moments(fixture_plan, rho, _exact_cfg(M=4))
    assert np.allclose(m4[:2], 2 * m1[:2], atol=1e-12)
    assert np.allclose(c4[:2, :2], c1[:2, :2], atol=1e-12)


def test_exact_pair_means_approach_linear_values(fixture_plan):
    m = make_spin_model(2, FIX)
    rho = m.rho([0.4, 0.05, -0.05])
    gaps = []
    for M in (1, 2):
        cfg = _exact_cfg(M=M)
        eng = ExactEngine(fixture_plan, rho, cfg)
        r, _ = eng.checked_state(cfg.t)
        exact = eng.ancilla_moments(r)[0][:2]
        linear = linear_readout_moments(fixture_plan, rho, cfg)[0][:2]
        gaps.append(np.linalg.norm(exact - linear) / np.linalg.norm(linear))
    assert gaps[1] < gaps[0]


def test_gaussian_overlap_basic():
    c = np.eye(2)
    assert gaussian_overlap([0, 0], c, [0, 0], c) == pytest.approx(1.0)
    assert gaussian_overlap([0, 0], c, [1, 0], c) == pytest.approx(math.exp(-1 / 8))


def test_exact_engine_refuses_more_than_two_ancillas():
    rho = make_spin_model(3, [0.1] * 8).rho([0.1] * 8)
    m = make_nonparametric_model(3, rho, gell_mann(3)[:4])
    plan = design_scheme(m, m.theta0)
    with pytest.raises(BudgetError):
        ExactEngine(plan, m.rho(m.theta0), _exact_cfg())


# ---------------------------------------------------------------- protocol and baseline


def test_acquisition_reconstructs_exactly():
    b = spin_matrices(3)
    labels, needed, measured, coef = acquisition_design(b)
    d = 3
    recon = coef[:, :1, None] * np.eye(d)[None] + np.einsum("ni,iab->nab", coef[:, 1:], measured)
    assert np.allclose(recon, needed, atol=1e-10)
    assert np.abs(coef).max() < 10


def test_acquisition_error_shrinks():
    m = make_spin_model(2, FIX)
    rho = m.rho(m.theta0)
    errs = []
    for n in (10_000, 1_000_000):
        acq = acquire(m.observables, rho, n, seed=1)
        errs.append(np.linalg.norm(acq.beta_hat - np.array(FIX)))
    assert errs[1] < errs[0]
    with pytest.raises(AcquisitionError):
        acquire(m.observables, rho, 10)


def test_oracle_protocol_matches_linear_engine():
    m = make_spin_model(2, FIX)
    cfg = SchemeConfig(samples=50_000, seed=5)
    res = two_step_protocol(m, FIX, 1000, 0.0, cfg, oracle=True)
    ref = linearized_simulate(m, FIX, FIX, cfg.replace(M=1000))
    assert res.scaled_error == pytest.approx(ref.scaled_error, rel=1e-12)


def test_protocol_cost_grows_with_fraction():
    m = make_spin_model(2, FIX)
    cfg = SchemeConfig(samples=200_000, seed=6)
    vals = [two_step_protocol(m, FIX, 10**6, f, cfg).scaled_error for f in (0.01, 0.1, 0.5)]
    assert vals[0] < vals[1] < vals[2]
    # spending a fraction f on acquisition costs about 1/(1-f)
    assert vals[2] == pytest.approx(2 * 0.99, rel=0.03)


def test_protocol_needs_nonparametric_model():
    with pytest.raises(TypeError):
        two_step_protocol(qubit_restricted_model(0.5), (0, 0), 1000, 0.1)


def test_baseline_single_target_equals_hel():
    m = make_spin_model(2, FIX)
    base = separable_baseline(m, FIX, 3000, repetitions=4000, seed=2)
    assert base.analytic == pytest.approx(3 * 0.59)
    assert abs(base.monte_carlo - base.analytic) < 4 * base.monte_carlo_se


def test_baseline_rejects_non_identity_weight():
    m = make_spin_model(2, FIX)
    with pytest.raises(ValueError):
        separable_baseline(m, FIX, 100, W=np.diag([1.0, 2.0, 3.0]))


def test_collective_embedding_normalization():
    X = spin_matrices(2)[0]
    assert np.allclose(collective_embed(X, 1), X)


def test_exact_covariance_close_to_gaussian_at_M6():
    m = make_spin_model(2, FIX)
    theta = [0.4, 0.05, -0.05]
    cfg = _exact_cfg(M=6, samples=1000)
    plan = design_scheme(m, FIX, None, cfg)
    res = exact_run(plan, m.rho(theta), m.evaluate(theta, check=False).beta, cfg)
    assert res.diagnostics["cov_gap"] <= 0.25
    assert res.diagnostics["grid_mass"] == pytest.approx(1.0, abs=1e-3)
