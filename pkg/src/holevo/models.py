"""Parametric quantum statistical models.

Finite-dimensional models are described by callables of the parameter
vector ``theta``; evaluating one at a point gives a :class:`ModelPoint` with
the state, its coordinate derivatives, the target vector and its Jacobian.

Thermal Gaussian models are described by their mutual coherence matrix,
with the convention ``upsilon[j, k] = tr(rho a_k^dagger a_j)``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .linalg import (
    DEFAULT_TOL,
    OperatorError,
    as_hermitian,
    commutator,
    expm_hermitian,
    hermitian_part,
)


class ModelError(ValueError):
    """Raised when a model is evaluated outside its domain of validity."""


class TruncationError(ValueError):
    """Raised when a Fock-space truncation loses more weight than allowed."""


# ---------------------------------------------------------------- operator bases


def gell_mann(d: int) -> np.ndarray:
    """Generalized Gell-Mann matrices, shape (d*d - 1, d, d), with tr(l_a l_b) = 2 delta_ab.

    Ordered as in the standard d = 3 convention: for each k = 1..d-1 the
    symmetric and antisymmetric pairs (j, k), j < k, then the k-th diagonal
    element. For d = 2 this gives the Pauli matrices in order.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    mats = []
    for k in range(1, d):
        for j in range(k):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1j
            a[k, j] = 1j
            mats.extend([s, a])
        diag = np.zeros(d)
        diag[:k] = 1
        diag[k] = -k
        mats.append(np.diag(diag * np.sqrt(2 / (k * (k + 1)))).astype(complex))
    return np.array(mats)


def hermitian_basis(d: int) -> np.ndarray:
    """Hilbert-Schmidt orthonormal Hermitian basis of d x d matrices: I/sqrt(d) then l_a/sqrt(2)."""
    return np.concatenate([np.eye(d, dtype=complex)[None] / np.sqrt(d), gell_mann(d) / np.sqrt(2)])


def spin_matrices(d: int) -> np.ndarray:
    """Spin operators (s_x, s_y, s_z) of a d-level object, spin j = (d - 1) / 2."""
    j = (d - 1) / 2
    m = j - np.arange(d)
    sp = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        sp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    sx = (sp + sp.conj().T) / 2
    sy = (sp - sp.conj().T) / (2j)
    sz = np.diag(m).astype(complex)
    return np.array([sx, sy, sz])


PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in itertools.permutations(range(3)):
        eps[i, j, k] = np.linalg.det(np.eye(3)[[i, j, k]])
    return eps


# ---------------------------------------------------------------- finite differences


def finite_difference_derivatives(rho_fn: Callable, theta, step: float = 1e-5) -> np.ndarray:
    """Central-difference derivatives of ``rho_fn`` along each coordinate, Hermitized."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta, dtype=float)
    out = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        try:
            plus = np.asarray(rho_fn(theta + e))
            minus = np.asarray(rho_fn(theta - e))
        except (ModelError, OperatorError) as exc:
            raise ModelError(f"theta is at the boundary of validity along coordinate {i}") from exc
        out.append(hermitian_part((plus - minus) / (2 * step)))
    return np.array(out)


# ---------------------------------------------------------------- finite-dimensional models


@dataclass(frozen=True)
class ModelPoint:
    """A model evaluated at one parameter value."""

    theta: np.ndarray
    rho: np.ndarray
    drho: np.ndarray  # (k, d, d)
    beta: np.ndarray  # (n,)
    B: np.ndarray  # (n, k), B[j, i] = d beta_j / d theta_i

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def n_targets(self) -> int:
        return self.beta.size

    @property
    def n_params(self) -> int:
        return self.drho.shape[0]

    def check(self, trace_tol: float = 1e-12, psd_floor: float = 1e-12, dtrace_tol: float = 1e-10) -> None:
        tr = np.trace(self.rho).real
        if abs(tr - 1) > trace_tol:
            raise ModelError(f"tr(rho) = {tr!r} deviates from 1")
        lam = np.linalg.eigvalsh(self.rho)
        if lam[0] < -psd_floor:
            raise ModelError(f"rho is not PSD (min eigenvalue {lam[0]:.3e})")
        dtr = np.abs(np.trace(self.drho, axis1=1, axis2=2)) if self.drho.size else np.zeros(0)
        if np.any(dtr > dtrace_tol):
            raise ModelError(f"derivatives are not traceless (max |tr| = {dtr.max():.3e})")


@dataclass(frozen=True)
class FiniteDimModel:
    """theta -> rho(theta) with targets beta(theta).

    ``drho_fn`` may be omitted, in which case derivatives come from central
    differences with step ``fd_step``.
    """

    dim: int
    n_params: int
    n_targets: int
    rho_fn: Callable[[np.ndarray], np.ndarray]
    beta_fn: Callable[[np.ndarray], np.ndarray]
    jac_fn: Callable[[np.ndarray], np.ndarray]
    drho_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    theta0: Optional[np.ndarray] = None
    fd_step: float = 1e-5
    name: str = "finite-dim"

    def rho(self, theta) -> np.ndarray:
        return np.asarray(self.rho_fn(np.asarray(theta, dtype=float)), dtype=complex)

    def drho(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.drho_fn is None:
            return finite_difference_derivatives(self.rho_fn, theta, self.fd_step)
        return np.asarray(self.drho_fn(theta), dtype=complex)

    def evaluate(self, theta=None, check: bool = True) -> ModelPoint:
        if theta is None:
            if self.theta0 is None:
                raise ModelError("no parameter value given and the model has no theta0")
            theta = self.theta0
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.n_params:
            raise ModelError(f"expected {self.n_params} parameters, got {theta.size}")
        pt = ModelPoint(
            theta=theta,
            rho=hermitian_part(self.rho(theta)),
            drho=self.drho(theta).reshape(self.n_params, self.dim, self.dim),
            beta=np.atleast_1d(np.asarray(self.beta_fn(theta), dtype=float)),
            B=np.asarray(self.jac_fn(theta), dtype=float).reshape(self.n_targets, self.n_params),
        )
        if check:
            pt.check()
        return pt


@dataclass(frozen=True)
class NonparametricModel(FiniteDimModel):
    """rho(theta) = I/d + sum_a theta_a l_a over all density operators; beta_j = tr(rho b_j)."""

    observables: np.ndarray = field(default_factory=lambda: np.zeros((0, 1, 1)))


@dataclass(frozen=True)
class SpinModel(NonparametricModel):
    """Nonparametric model whose targets are the spin expectations tr(rho s_j)."""

    @property
    def spins(self) -> np.ndarray:
        return self.observables


def _coords_to_rho(d: int, basis: np.ndarray, theta: np.ndarray) -> np.ndarray:
    rho = np.eye(d, dtype=complex) / d + np.einsum("a,aij->ij", theta, basis)
    lam = np.linalg.eigvalsh(rho)
    if lam[0] < -1e-12:
        raise ModelError(f"coordinates give a non-PSD state (min eigenvalue {lam[0]:.3e})")
    return rho


def rho_to_coords(rho: np.ndarray) -> np.ndarray:
    """Gell-Mann coordinates c_a = tr(rho l_a) / 2, the inverse of rho = I/d + sum c_a l_a."""
    d = rho.shape[0]
    return np.real(np.einsum("aij,ji->a", gell_mann(d), rho)) / 2


def make_nonparametric_model(d: int, rho, observables, cls=NonparametricModel, name: str = "nonparametric"):
    """Nonparametric model over all d-level states with targets tr(rho b_j).

    The k = d*d - 1 coordinate directions are the generalized Gell-Mann
    matrices, so the derivatives are exact and B[j, a] = tr(l_a b_j).
    """
    basis = gell_mann(d)
    rho = as_hermitian(rho, "rho", 1e-10)
    if rho.shape != (d, d):
        raise ModelError(f"rho must be {d}x{d}")
    b = np.array([as_hermitian(o, "observable", 1e-10) for o in np.asarray(observables, dtype=complex)])
    if b.ndim != 3 or b.shape[1:] != (d, d):
        raise ModelError(f"observables must have shape (n, {d}, {d})")
    lam = np.linalg.eigvalsh(rho)
    if lam[0] <= DEFAULT_TOL.rank:
        warnings.warn(
            "rho is rank deficient: the influence operator is no longer unique",
            stacklevel=2,
        )
    n = b.shape[0]
    B = np.real(np.einsum("aij,bji->ba", basis, b))
    theta0 = rho_to_coords(rho)

    def rho_fn(theta):
        return _coords_to_rho(d, basis, theta)

    def beta_fn(theta):
        return np.real(np.einsum("ij,bji->b", rho_fn(theta), b))

    return cls(
        dim=d,
        n_params=d * d - 1,
        n_targets=n,
        rho_fn=rho_fn,
        beta_fn=beta_fn,
        jac_fn=lambda theta: B,
        drho_fn=lambda theta: basis,
        theta0=theta0,
        name=name,
        observables=b,
    )


def make_spin_model(d: int, coords) -> SpinModel:
    """Spin model of a d-level object at Gell-Mann coordinates ``coords``.

    For d = 2, rho = I/2 + sum_j c_j sigma_j and beta_j = c_j.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.size != d * d - 1:
        raise ModelError(f"expected {d * d - 1} coordinates for d = {d}")
    rho = _coords_to_rho(d, gell_mann(d), coords)
    return make_nonparametric_model(d, rho, spin_matrices(d), cls=SpinModel, name=f"spin-d{d}")


def make_affine_model(rho0, directions, observables, theta0=None, name: str = "affine") -> FiniteDimModel:
    """rho(theta) = rho0 + sum_i theta_i G_i with targets tr(rho b_j).

    ``directions`` must be traceless Hermitian. Used for restricted submodels.
    """
    rho0 = as_hermitian(rho0, "rho0", 1e-10)
    G = np.array([as_hermitian(g, "direction", 1e-10) for g in np.asarray(directions, dtype=complex)])
    b = np.array([as_hermitian(o, "observable", 1e-10) for o in np.asarray(observables, dtype=complex)])
    d = rho0.shape[0]
    k = G.shape[0]
    if np.any(np.abs(np.trace(G, axis1=1, axis2=2)) > 1e-10):
        raise ModelError("directions must be traceless")

    def rho_fn(theta):
        rho = rho0 + np.einsum("i,ijk->jk", theta, G)
        if np.linalg.eigvalsh(rho)[0] < -1e-12:
            raise ModelError("state leaves the PSD cone")
        return rho

    B = np.real(np.einsum("ijk,bkj->bi", G, b))
    return FiniteDimModel(
        dim=d,
        n_params=k,
        n_targets=b.shape[0],
        rho_fn=rho_fn,
        beta_fn=lambda theta: np.real(np.einsum("ij,bji->b", rho_fn(theta), b)),
        jac_fn=lambda theta: B,
        drho_fn=lambda theta: G,
        theta0=np.zeros(k) if theta0 is None else np.asarray(theta0, dtype=float),
        name=name,
    )


def qubit_restricted_model(z: float = 0.5) -> FiniteDimModel:
    """Qubit with Bloch vector (theta_1, theta_2, z); targets (tr rho sigma_1, tr rho sigma_2)."""
    rho0 = np.eye(2, dtype=complex) / 2 + z * PAULI[2] / 2
    return make_affine_model(rho0, PAULI[:2] / 2, PAULI[:2], name="qubit-restricted")


def random_density(d: int, rng: np.random.Generator, min_eig: float = 0.02) -> np.ndarray:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = G @ G.conj().T
    rho /= np.trace(rho).real
    rho = (1 - d * min_eig) * rho + min_eig * np.eye(d)
    return hermitian_part(rho)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return hermitian_part(G)


def random_model(d: int, k: int, n: int, rng: np.random.Generator) -> FiniteDimModel:
    """Random affine model: full-rank rho0, k traceless directions, n random observables."""
    rho0 = random_density(d, rng)
    G = []
    for _ in range(k):
        h = random_hermitian(d, rng)
        G.append(h - np.trace(h) / d * np.eye(d))
    b = [random_hermitian(d, rng) for _ in range(n)]
    return make_affine_model(rho0, G, b, name=f"random-d{d}-k{k}-n{n}")


# ---------------------------------------------------------------- thermal Gaussian models


@dataclass(frozen=True)
class GaussianPoint:
    theta: np.ndarray
    upsilon: np.ndarray  # (m, m)
    dupsilon: np.ndarray  # (k, m, m)
    beta: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class ThermalGaussianModel:
    """Zero-mean thermal Gaussian state of m modes parameterized through upsilon(theta)."""

    n_modes: int
    n_params: int
    n_targets: int
    upsilon_fn: Callable[[np.ndarray], np.ndarray]
    dupsilon_fn: Callable[[np.ndarray], np.ndarray]
    beta_fn: Callable[[np.ndarray], np.ndarray]
    jac_fn: Callable[[np.ndarray], np.ndarray]
    theta0: Optional[np.ndarray] = None
    real_psf: bool = False
    name: str = "thermal"

    def evaluate(self, theta=None) -> GaussianPoint:
        theta = self.theta0 if theta is None else theta
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        ups = as_hermitian(self.upsilon_fn(theta), "upsilon", 1e-10)
        if np.linalg.eigvalsh(ups)[0] < -1e-12:
            raise ModelError("mutual coherence matrix is not PSD")
        if self.real_psf and np.max(np.abs(ups.imag)) > 1e-12:
            raise ModelError("real_psf model produced a complex mutual coherence matrix")
        return GaussianPoint(
            theta=theta,
            upsilon=ups,
            dupsilon=np.asarray(self.dupsilon_fn(theta), dtype=complex).reshape(self.n_params, self.n_modes, self.n_modes),
            beta=np.atleast_1d(np.asarray(self.beta_fn(theta), dtype=float)),
            B=np.asarray(self.jac_fn(theta), dtype=float).reshape(self.n_targets, self.n_params),
        )


def make_linear_thermal_model(base, components, theta0, targets=None, name="thermal-linear") -> ThermalGaussianModel:
    """upsilon(theta) = base + sum_i theta_i components[i]; targets A @ theta (A defaults to I)."""
    base = np.asarray(base, dtype=complex)
    comps = np.asarray(components, dtype=complex)
    k, m = comps.shape[0], base.shape[0]
    A = np.eye(k) if targets is None else np.asarray(targets, dtype=float).reshape(-1, k)
    real = bool(np.all(np.abs(base.imag) == 0) and np.all(np.abs(comps.imag) == 0))
    return ThermalGaussianModel(
        n_modes=m,
        n_params=k,
        n_targets=A.shape[0],
        upsilon_fn=lambda th: base + np.einsum("i,ijk->jk", th, comps),
        dupsilon_fn=lambda th: comps,
        beta_fn=lambda th: A @ th,
        jac_fn=lambda th: A,
        theta0=np.asarray(theta0, dtype=float),
        real_psf=real,
        name=name,
    )


def random_real_thermal_model(m: int, k: int, rng: np.random.Generator, max_occupation: float = 0.5):
    """Random real-upsilon model: positive-definite base plus k real symmetric directions."""
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    occ = rng.uniform(0.1, max_occupation, size=m)
    base = Q @ np.diag(occ) @ Q.T
    comps = []
    for _ in range(k):
        S = rng.normal(size=(m, m))
        comps.append((S + S.T) * 0.05)
    targets = rng.normal(size=(k, k)) + 2 * np.eye(k)
    return make_linear_thermal_model(base, comps, np.zeros(k), targets, name=f"thermal-real-m{m}-k{k}")


# ---------------------------------------------------------------- Fock space


@dataclass(frozen=True)
class FockBasis:
    """Occupation states of m modes with total photon number below ``cutoff``.

    Number-conserving operators act exactly inside this basis.
    """

    n_modes: int
    cutoff: int
    states: tuple

    @classmethod
    def build(cls, n_modes: int, cutoff: int, max_dim: int = DEFAULT_TOL.max_dim) -> "FockBasis":
        states = [s for s in itertools.product(range(cutoff), repeat=n_modes) if sum(s) < cutoff]
        states.sort(key=lambda s: (sum(s), tuple(-x for x in s)))
        if len(states) > max_dim:
            raise TruncationError(f"Fock basis of {len(states)} states exceeds budget {max_dim}")
        return cls(n_modes, cutoff, tuple(states))

    @property
    def dim(self) -> int:
        return len(self.states)

    def annihilation(self, mode: int) -> np.ndarray:
        index = {s: i for i, s in enumerate(self.states)}
        a = np.zeros((self.dim, self.dim))
        for i, s in enumerate(self.states):
            if s[mode] > 0:
                t = list(s)
                t[mode] -= 1
                a[index[tuple(t)], i] = np.sqrt(s[mode])
        return a

    def quadratic(self, D: np.ndarray) -> np.ndarray:
        """sum_jk D[j, k] a_j^dagger a_k."""
        a = [self.annihilation(j) for j in range(self.n_modes)]
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for j in range(self.n_modes):
            for k in range(self.n_modes):
                if D[j, k] != 0:
                    out += D[j, k] * a[j].T @ a[k]
        return out


@dataclass(frozen=True)
class FockState:
    rho: np.ndarray
    deficit: float
    basis: FockBasis


def thermal_fock_state(upsilon, cutoff: int, max_deficit: float = 1e-6) -> FockState:
    """Fock-basis density matrix of the zero-mean thermal state with coherence ``upsilon``.

    Diagonalize upsilon = U diag(nbar) U^dagger, build the product of
    single-mode thermal states, then rotate by the passive unitary that maps
    the eigenmodes onto the physical modes. The deficit is the thermal weight
    with total photon number >= cutoff, dropped before renormalizing.
    """
    ups = as_hermitian(upsilon, "upsilon", 1e-10)
    m = ups.shape[0]
    nbar, U = np.linalg.eigh(ups)
    if nbar[0] < -1e-12:
        raise ModelError("mutual coherence matrix is not PSD")
    nbar = np.clip(nbar, 0.0, None)
    basis = FockBasis.build(m, cutoff)
    occ = np.array(basis.states, dtype=float)
    weights = np.prod(nbar**occ / (1 + nbar) ** (occ + 1), axis=1)
    deficit = float(1.0 - weights.sum())
    if deficit > max_deficit:
        raise TruncationError(f"truncation deficit {deficit:.3e} exceeds {max_deficit:.1e}")
    rho_b = np.diag(weights / weights.sum()).astype(complex)

    # passive generator h with U = exp(-i h); V = exp(-i sum h_jk a_j^dag a_k)
    T, Z = scipy.linalg.schur(U.astype(complex), output="complex")
    phases = np.angle(np.diag(T))
    h = -(Z * phases) @ Z.conj().T
    G = basis.quadratic(h)
    V = expm_hermitian(hermitian_part(G), 1.0, -1.0)
    rho = hermitian_part(V @ rho_b @ V.conj().T)
    return FockState(rho=rho, deficit=deficit, basis=basis)


def fock_coherence(state: FockState) -> np.ndarray:
    """upsilon[j, k] = tr(rho a_k^dagger a_j) from a Fock-space state."""
    b = state.basis
    a = [b.annihilation(j) for j in range(b.n_modes)]
    out = np.zeros((b.n_modes, b.n_modes), dtype=complex)
    for j in range(b.n_modes):
        for k in range(b.n_modes):
            out[j, k] = np.trace(state.rho @ a[k].T @ a[j])
    return out


def check_spin_algebra(s: np.ndarray, tol: float = 1e-12) -> float:
    """Max deviation of [s_j, s_k] from i eps_jkl s_l."""
    eps = levi_civita()
    worst = 0.0
    for j in range(3):
        for k in range(3):
            rhs = 1j * np.einsum("l,lab->ab", eps[j, k], s)
            worst = max(worst, float(np.max(np.abs(commutator(s[j], s[k]) - rhs))))
    if worst > tol:
        raise OperatorError(f"spin commutation relations violated by {worst:.3e}")
    return worst
