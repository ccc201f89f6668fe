import numpy as np
import pytest

from holevo.models import (
    FockBasis,
    ModelError,
    TruncationError,
    check_spin_algebra,
    fock_coherence,
    gell_mann,
    make_affine_model,
    make_spin_model,
    qubit_restricted_model,
    random_model,
    rho_to_coords,
    spin_matrices,
    thermal_fock_state,
)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_gell_mann_orthonormal(d):
    E = gell_mann(d)
    assert E.shape == (d * d - 1, d, d)
    G = np.real(np.einsum("iab,jba->ij", E, E))
    assert np.allclose(G, G[0, 0] * np.eye(d * d - 1))
    assert np.allclose(np.trace(E, axis1=1, axis2=2), 0)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_spin_algebra(d):
    s = spin_matrices(d)
    assert check_spin_algebra(s) < 1e-12
    casimir = sum(x @ x for x in s)
    j = (d - 1) / 2
    assert np.allclose(casimir, j * (j + 1) * np.eye(d))


def test_spin_model_fixture():
    m = make_spin_model(2, (0.4, 0.0, 0.0))
    pt = m.evaluate()
    assert np.allclose(pt.rho, [[0.5, 0.4], [0.4, 0.5]])
    assert np.allclose(pt.beta, [0.4, 0.0, 0.0])
    assert np.allclose(rho_to_coords(pt.rho), [0.4, 0, 0])


def test_spin_model_wrong_size():
    with pytest.raises(ModelError):
        make_spin_model(3, (0.1, 0.2, 0.3))


def test_affine_derivatives_match_finite_differences(rng):
    m = random_model(3, 4, 2, rng)
    pt = m.evaluate()
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (m.rho(e) - m.rho(-e)) / (2 * h)
        assert np.allclose(fd, pt.drho[i], atol=1e-8)
        bfd = (m.evaluate(e).beta - m.evaluate(-e).beta) / (2 * h)
        assert np.allclose(bfd, pt.B[:, i], atol=1e-8)


def test_affine_rejects_traced_direction():
    with pytest.raises(ModelError):
        make_affine_model(np.eye(2) / 2, [np.eye(2)], [np.eye(2)])


def test_restricted_leaves_psd_cone():
    m = qubit_restricted_model(0.5)
    with pytest.raises(ModelError):
        m.rho([1.5, 0.0])


def test_fock_basis_and_budget():
    b = FockBasis.build(2, 4)
    assert b.dim == 10
    a0 = b.annihilation(0)
    n0 = a0.T @ a0
    assert np.allclose(np.diag(n0), [s[0] for s in b.states])
    with pytest.raises(TruncationError):
        FockBasis.build(3, 40, max_dim=100)


def test_thermal_state_recovers_coherence():
    ups = np.array([[0.3, 0.1 + 0.05j], [0.1 - 0.05j, 0.2]])
    st = thermal_fock_state(ups, 30)
    assert abs(np.trace(st.rho) - 1) < 1e-12
    assert np.allclose(fock_coherence(st), ups, atol=1e-6)


def test_thermal_state_deficit_guard():
    with pytest.raises(TruncationError):
        thermal_fock_state(np.array([[5.0]]), 5)
