import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holevo.bounds import (
    HNOptions,
    c_functional,
    check_weight,
    compute_slds,
    efficient_influence,
    gamma_matrix,
    helstrom_bound,
    hn_bound,
    quantum_fisher,
)
from holevo.linalg import jordan_product
from holevo.models import make_spin_model, qubit_restricted_model, random_model

PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def test_fixture_against_direct_2x2_algebra():
    # oracle: the full model has a unique influence s_j - beta_j, so Gamma is direct
    rho = np.eye(2) / 2 + 0.4 * PAULI[0]
    s = PAULI / 2
    beta = np.array([np.trace(rho @ x).real for x in s])
    d = s - beta[:, None, None] * np.eye(2)
    G = np.array([[np.trace(rho @ a @ b) for b in d] for a in d])
    hel = G.real.trace()
    c = hel + np.abs(np.linalg.eigvals(G.imag)).sum()
    assert hel == pytest.approx(0.59, abs=1e-12)
    assert c == pytest.approx(0.99, abs=1e-12)
    rep = hn_bound(make_spin_model(2, (0.4, 0, 0)))
    assert rep.hel == pytest.approx(hel, abs=1e-9)
    assert rep.c_at_hel == pytest.approx(c, abs=1e-9)
    assert rep.hn == pytest.approx(c, abs=1e-9)
    assert rep.null_dim == 0


def test_sld_equation_and_fisher():
    pt = make_spin_model(2, (0.2, -0.1, 0.3)).evaluate()
    S = compute_slds(pt)
    for k in range(pt.n_params):
        assert np.allclose(jordan_product(pt.rho, S[k]), pt.drho[k], atol=1e-12)
    F = quantum_fisher(pt.rho, S)
    assert np.allclose(F, F.T)
    assert np.all(np.linalg.eigvalsh(F) > 0)


def test_influence_conditions(rng):
    m = random_model(3, 5, 2, rng)
    inf = efficient_influence(m)
    mean_res, deriv_res = inf.residuals()
    assert mean_res < 1e-10 and deriv_res < 1e-9


def _grid_min(f, centre, half, n):
    best, arg = np.inf, centre
    for a in np.linspace(centre[0] - half, centre[0] + half, n):
        for b in np.linspace(centre[1] - half, centre[1] + half, n):
            v = f(a, b)
            if v < best:
                best, arg = v, (a, b)
    return best, arg


@pytest.mark.parametrize("theta", [(0.0, 0.0), (0.3, -0.2)])
def test_restricted_qubit_hn_matches_grid_oracle(theta):
    m = qubit_restricted_model(0.5)
    rep = hn_bound(m, theta)
    assert rep.null_dim == 1
    pt = m.evaluate(theta)
    d0 = rep.influence_hel
    # the single null direction: zero mean and orthogonal to both directions
    T = PAULI[2] - 0.5 * np.eye(2)
    assert abs(np.trace(pt.rho @ T)) < 1e-12

    def f(a, b):
        return c_functional(gamma_matrix(pt.rho, d0 + np.array([a * T, b * T])), np.eye(2))

    best, arg = _grid_min(f, (0.0, 0.0), 2.0, 201)
    best, arg = _grid_min(f, arg, 0.04, 81)
    assert rep.hn <= best + 1e-9
    assert rep.hn == pytest.approx(best, abs=1e-5)
    assert rep.hel <= rep.hn <= rep.c_at_hel


def test_restricted_qubit_off_axis_values():
    rep = hn_bound(qubit_restricted_model(0.5), (0.3, -0.2))
    assert rep.hn == pytest.approx(2.48, abs=1e-7)
    assert rep.hel < rep.hn < rep.c_at_hel


@given(st.integers(0, 10_000), st.sampled_from([(2, 3, 2), (3, 4, 2), (3, 8, 3), (2, 2, 1)]))
def test_bound_chain_property(seed, shape):
    m = random_model(*shape, np.random.default_rng(seed))
    rep = hn_bound(m, opts=HNOptions(iterations=1500))
    assert rep.sandwich(1e-7)


@given(st.integers(0, 10_000))
def test_single_target_hn_equals_hel(seed):
    m = random_model(3, 4, 1, np.random.default_rng(seed))
    rep = hn_bound(m)
    assert rep.hn == pytest.approx(rep.hel, abs=1e-9)
    assert rep.c_at_hel == pytest.approx(rep.hel, abs=1e-9)


def test_weighted_helstrom_scales_linearly():
    m = make_spin_model(2, (0.4, 0, 0))
    W = np.diag([1.0, 2.0, 3.0])
    assert helstrom_bound(m, W=2 * W) == pytest.approx(2 * helstrom_bound(m, W=W))


def test_weight_checks():
    with pytest.raises(ValueError):
        check_weight(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValueError):
        check_weight(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_report_serializes():
    rep = hn_bound(qubit_restricted_model(0.5))
    d = rep.to_dict()
    assert set(d) >= {"hel", "hn", "c_at_hel", "null_dim", "gamma_hel", "diagnostics"}
    assert d["diagnostics"]["converged"]
