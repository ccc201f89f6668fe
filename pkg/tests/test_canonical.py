import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holevo.canonical import antisym_canonical, canonical_block, canonical_transform, commutator_matrix, y_observables
from holevo.linalg import OperatorError
from holevo.models import random_density


def _antisym(rng, n, rank_pairs=None):
    A = rng.normal(size=(n, n))
    A = A - A.T
    if rank_pairs is not None:
        O, _ = np.linalg.qr(rng.normal(size=(n, n)))
        nu = rng.uniform(0.2, 1.0, size=rank_pairs)
        A = O @ canonical_block(n, sorted(nu, reverse=True)) @ O.T
    return A


@given(st.integers(1, 7), st.integers(0, 10_000))
def test_block_form_property(n, seed):
    rng = np.random.default_rng(seed)
    A = _antisym(rng, n)
    O, nu, r = antisym_canonical(A)
    assert np.allclose(O.T @ O, np.eye(n), atol=1e-10)
    assert np.allclose(O.T @ A @ O, canonical_block(n, nu), atol=1e-9)
    assert np.all(np.diff(nu) <= 1e-12)
    assert 2 * r <= n


@given(st.integers(0, 10_000))
def test_transform_gives_canonical_pairs(seed):
    rng = np.random.default_rng(seed)
    A = _antisym(rng, 5, rank_pairs=1)
    ct = canonical_transform(A)
    assert ct.r == 1 and ct.x_index == [2, 3, 4]
    assert np.allclose(ct.transport(A), ct.canonical_im(), atol=1e-10)
    assert np.allclose(ct.L @ ct.L_inv, np.eye(5))


def test_zero_matrix_is_all_commuting():
    ct = canonical_transform(np.zeros((3, 3)))
    assert ct.r == 0 and np.allclose(ct.L, np.eye(3))


def test_rejects_non_antisymmetric():
    with pytest.raises(OperatorError):
        antisym_canonical(np.eye(2))


def test_y_observables_commutators(rng):
    rho = random_density(3, rng)
    X = []
    for _ in range(3):
        H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        X.append((H + H.conj().T) / 2)
    X = np.array(X)
    ct = canonical_transform(commutator_matrix(rho, X))
    Y = y_observables(X, ct, rho)
    assert np.allclose(commutator_matrix(rho, Y), ct.canonical_im(), atol=1e-10)
    with pytest.raises(OperatorError):
        y_observables(X[:2], ct)
