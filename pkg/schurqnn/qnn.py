"""The randomized ansatz and its loss, gradient and Hessian.

The ansatz is

    U(θ) = e^{iHt''} K_1 ⋯ K_p e^{−iHt'},   K_i = e^{−iHt_i} e^{iAθ_i} e^{iHt_i}

and the loss is ℓ(θ) = (1/M) Σ_x ⟨x|U O_x U†|x⟩.

Everything is evaluated in the eigenbasis of H, where the Hamiltonian
factors are diagonal and each K_i costs two products with the fixed
change of basis Q = V_H† V_A.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import typing

import numpy as np
import numpy.typing as npt

import schurqnn._json
import schurqnn.algebra
import schurqnn.errors
import schurqnn.linalg
import schurqnn.model
from schurqnn._json import Json
from schurqnn.linalg import Eigensystem, Matrix

__all__ = [
    'ParameterVector', 'AnsatzSpec', 'sample_ansatz', 'build_unitary',
    'point_losses', 'loss', 'sector_losses', 'adjusted_loss', 'gradient',
    'loss_and_gradient', 'hessian', 'rotated_generators',
]

logger = logging.getLogger(__name__)

ParameterVector: typing.TypeAlias = npt.NDArray[np.float64]

#: Largest tolerated imaginary residue of an analytically real quantity.
IMAG_TOL = 1e-10

@dataclasses.dataclass(frozen=True, eq=False)
class AnsatzSpec:
    """Sampled times plus the cached eigensystems of H and A."""

    #: Inner times t_1 … t_p.
    times: npt.NDArray[np.float64]
    #: Time t' of the rightmost evolution.
    t_prime: float
    #: Time t'' of the leftmost evolution.
    t_double_prime: float
    #: Horizon the times were drawn from.
    T: float
    #: Eigensystem of the Hamiltonian.
    hamiltonian: Eigensystem
    #: Eigensystem of the rotation generator A.
    generator_a: Eigensystem
    #: Seed the times were drawn with, if known.
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.hamiltonian.dim != self.generator_a.dim:
            raise schurqnn.errors.DimensionMismatch(
                f'H has dim {self.hamiltonian.dim} but A has dim {self.generator_a.dim}'
            )
        every = np.concatenate([self.times, [self.t_prime, self.t_double_prime]])
        if np.any(every < 0) or np.any(every > self.T):
            raise ValueError(f'times must lie in [0, {self.T}]')
        a = self.generator_a.values
        if a[0] < -1e-10 * max(1.0, float(np.max(np.abs(a)))):
            raise ValueError(f'A must be positive semidefinite, has eigenvalue {a[0]:.3g}')

    @property
    def p(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @functools.cached_property
    def a_in_h(self) -> Matrix:
        """Q = V_H† V_A, the eigenvectors of A written in the eigenbasis of H."""
        return self.hamiltonian.vectors.conj().T @ self.generator_a.vectors

    def truncate(self, p: int) -> typing.Self:
        """The same ansatz keeping only the first ``p`` inner factors."""
        if not 0 <= p <= self.p:
            raise ValueError(f'cannot truncate {self.p} factors to {p}')
        return dataclasses.replace(self, times=self.times[:p])

    def to_json(self) -> Json:
        return {
            'p': self.p,
            'T': self.T,
            'times': schurqnn._json.to_json(self.times),
            't_prime': self.t_prime,
            't_double_prime': self.t_double_prime,
            'seed': self.seed,
        }

def _eigensystem(op: Eigensystem | np.ndarray) -> Eigensystem:
    if isinstance(op, Eigensystem):
        return op
    return schurqnn.linalg.hermitian_eig(op)

def sample_ansatz(
        p: int,
        T: float,
        hamiltonian: Eigensystem | np.ndarray,
        generator_a: Eigensystem | np.ndarray,
        rng: np.random.Generator,
        seed: int | None = None,
) -> AnsatzSpec:
    """Draw t_1 … t_p, t', t'' i.i.d. uniform on [0, T], in that order."""
    if p < 0:
        raise ValueError(f'p must be non-negative, got {p}')
    if not T > 0:
        raise ValueError(f'T must be positive, got {T}')
    draws = rng.uniform(0, T, p + 2)
    return AnsatzSpec(
        times = draws[:p],
        t_prime = float(draws[p]),
        t_double_prime = float(draws[p + 1]),
        T = T,
        hamiltonian = _eigensystem(hamiltonian),
        generator_a = _eigensystem(generator_a),
        seed = seed,
    )

def _check_theta(spec: AnsatzSpec, theta: npt.ArrayLike) -> ParameterVector:
    t = np.asarray(theta, dtype=float).reshape(-1)
    if t.shape != (spec.p,):
        raise schurqnn.errors.DimensionMismatch(f'expected {spec.p} parameters, got {t.shape[0]}')
    if not np.all(np.isfinite(t)):
        raise ValueError('parameters must be finite')
    return t

def _check_dataset(spec: AnsatzSpec, dataset: schurqnn.model.Dataset) -> None:
    if dataset.dim != spec.dim:
        raise schurqnn.errors.DimensionMismatch(f'dataset lives in dim {dataset.dim}, ansatz in dim {spec.dim}')
    if dataset.M == 0:
        raise schurqnn.errors.DimensionMismatch('dataset is empty')

def build_unitary(spec: AnsatzSpec, theta: npt.ArrayLike) -> Matrix:
    """U(θ) as a dense matrix in the computational basis."""
    theta = _check_theta(spec, theta)
    h, a = spec.hamiltonian, spec.generator_a
    u = h.evolve(spec.t_double_prime, +1)
    for t, th in zip(spec.times, theta):
        u = u @ h.evolve(t, -1) @ a.evolve(th, +1) @ h.evolve(t, +1)
    return u @ h.evolve(spec.t_prime, -1)

def _apply_k(spec: AnsatzSpec, i: int, theta_i: float, x: Matrix, adjoint: bool = False) -> Matrix:
    """Apply K_i (or K_i†) to the columns of ``x`` in the H eigenbasis."""
    forward = spec.hamiltonian.phases(spec.times[i], +1)[:, None]
    rotation = spec.generator_a.phases(theta_i, -1 if adjoint else +1)[:, None]
    q = spec.a_in_h
    return forward.conj() * (q @ (rotation * (q.conj().T @ (forward * x))))

def _rotated_a_pairing(spec: AnsatzSpec, i: int, left: Matrix, right: Matrix) -> npt.NDArray[np.complex128]:
    """Per-column ⟨left| Ã_i |right⟩ with Ã_i = e^{−iHt_i} A e^{iHt_i}."""
    forward = spec.hamiltonian.phases(spec.times[i], +1)[:, None]
    q = spec.a_in_h
    l = q.conj().T @ (forward * left)
    r = q.conj().T @ (forward * right)
    return np.sum(l.conj() * (spec.generator_a.values[:, None] * r), axis=0)

@dataclasses.dataclass
class _Forward:
    # α_0 … α_p in the H eigenbasis, one column per point
    alphas: list[Matrix]
    # O_x U†|x⟩ in the computational basis
    observed: Matrix
    values: npt.NDArray[np.float64]

def _real(z: npt.NDArray[np.complex128], what: str) -> npt.NDArray[np.float64]:
    residue = float(np.max(np.abs(z.imag), initial=0.0))
    if residue > IMAG_TOL:
        raise schurqnn.errors.NumericalError(f'{what} has imaginary residue {residue:.3g}')
    return z.real

def _forward(spec: AnsatzSpec, theta: ParameterVector, states: Matrix, diagonals: npt.NDArray[np.float64]) -> _Forward:
    h = spec.hamiltonian
    psi = h.phases(spec.t_double_prime, -1)[:, None] * (h.vectors.conj().T @ states)
    alphas = [psi]
    for i in range(spec.p):
        alphas.append(_apply_k(spec, i, theta[i], alphas[-1], adjoint=True))
    # U†|x⟩ back in the computational basis
    u = h.vectors @ (h.phases(spec.t_prime, +1)[:, None] * alphas[-1])
    observed = diagonals * u
    values = _real(np.sum(u.conj() * observed, axis=0), 'loss')
    return _Forward(alphas=alphas, observed=observed, values=values)

def _diagonals(dataset: schurqnn.model.Dataset) -> npt.NDArray[np.float64]:
    return np.column_stack([schurqnn.model.observable_diagonal(x) for x in dataset.points])

def point_losses(spec: AnsatzSpec, theta: npt.ArrayLike, dataset: schurqnn.model.Dataset) -> npt.NDArray[np.float64]:
    """⟨x|U O_x U†|x⟩ for every point, without the 1/M."""
    theta = _check_theta(spec, theta)
    _check_dataset(spec, dataset)
    return _forward(spec, theta, dataset.states(), _diagonals(dataset)).values

def loss(spec: AnsatzSpec, theta: npt.ArrayLike, dataset: schurqnn.model.Dataset) -> float:
    return float(np.mean(point_losses(spec, theta, dataset)))

def sector_losses(
        spec: AnsatzSpec,
        theta: npt.ArrayLike,
        dataset: schurqnn.model.Dataset,
        decomp: schurqnn.algebra.KrylovDecomposition,
) -> dict[int, float]:
    """(1/M) Σ_x ℓ_x^λ for each sector λ of the system decomposition.

    ℓ_x^λ evaluates the loss on the (unnormalized) part of |x⟩ inside
    sector λ. The values add up to :func:`loss` whenever H and A respect
    the sector structure.
    """
    theta = _check_theta(spec, theta)
    _check_dataset(spec, dataset)
    if decomp.dim * 2 ** dataset.n_a != spec.dim:
        raise schurqnn.errors.DimensionMismatch('decomposition does not match the system register')
    states = dataset.states()
    diagonals = _diagonals(dataset)
    eye = np.eye(2 ** dataset.n_a)
    out = {}
    for s in decomp.sectors:
        projected = np.kron(decomp.projector(s.id), eye) @ states
        out[s.id] = float(np.sum(_forward(spec, theta, projected, diagonals).values)) / dataset.M
    return out

def adjusted_loss(value: float) -> float:
    """Shift the loss from [−1, 0] to [0, 1]."""
    return value + 1.0

def _gradient(spec: AnsatzSpec, theta: ParameterVector, fwd: _Forward) -> ParameterVector:
    h = spec.hamiltonian
    m = fwd.observed.shape[1]
    # β_p = e^{−iHt'} O_x e^{iHt'} α_p, then β_{i−1} = K_i β_i
    beta = h.phases(spec.t_prime, -1)[:, None] * (h.vectors.conj().T @ fwd.observed)
    grad = np.zeros(spec.p)
    for i in reversed(range(spec.p)):
        pairing = _rotated_a_pairing(spec, i, fwd.alphas[i + 1], beta)
        grad[i] = -2 * np.sum(pairing.imag) / m
        beta = _apply_k(spec, i, theta[i], beta)
    return grad

def gradient(spec: AnsatzSpec, theta: npt.ArrayLike, dataset: schurqnn.model.Dataset) -> ParameterVector:
    """∂_i ℓ = (i/M) Σ_x ⟨x̃|[C_i, Z_x]|x̃⟩ via one forward and one backward sweep."""
    return loss_and_gradient(spec, theta, dataset)[1]

def loss_and_gradient(spec: AnsatzSpec, theta: npt.ArrayLike, dataset: schurqnn.model.Dataset) -> tuple[float, ParameterVector]:
    theta = _check_theta(spec, theta)
    _check_dataset(spec, dataset)
    fwd = _forward(spec, theta, dataset.states(), _diagonals(dataset))
    return float(np.mean(fwd.values)), _gradient(spec, theta, fwd)

def rotated_generators(spec: AnsatzSpec, theta: npt.ArrayLike) -> tuple[Matrix, Matrix]:
    """C_i = P_i Ã_i P_i† for every i, and P_p, both in the H eigenbasis.

    Returns a p×D×D stack and the D×D product P_p = K_1 ⋯ K_p.
    """
    theta = _check_theta(spec, theta)
    q = spec.a_in_h
    product = np.eye(spec.dim, dtype=complex)
    out = np.zeros((spec.p, spec.dim, spec.dim), dtype=complex)
    for i in range(spec.p):
        product = _apply_k(spec, i, theta[i], product.conj().T, adjoint=True).conj().T
        forward = spec.hamiltonian.phases(spec.times[i], +1)
        left = product @ (forward.conj()[:, None] * q)
        out[i] = (left * spec.generator_a.values) @ left.conj().T
    return out, product

def hessian(spec: AnsatzSpec, theta: npt.ArrayLike, dataset: schurqnn.model.Dataset) -> npt.NDArray[np.float64]:
    """∂_j ∂_i ℓ = −(1/M) Σ_x ⟨x̃|[C_j, [C_i, Z_x]]|x̃⟩ for j ≤ i, mirrored."""
    theta = _check_theta(spec, theta)
    _check_dataset(spec, dataset)
    h = spec.hamiltonian
    generators, product = rotated_generators(spec, theta)
    psi = h.phases(spec.t_double_prime, -1)[:, None] * (h.vectors.conj().T @ dataset.states())
    out = np.zeros((spec.p, spec.p))
    evolved = h.phases(spec.t_prime, -1)
    for k, x in enumerate(dataset.points):
        diag = schurqnn.model.observable_diagonal(x)
        observable = (h.vectors.conj().T * diag) @ h.vectors
        z = product @ (evolved[:, None] * observable * evolved.conj()[None, :]) @ product.conj().T
        v = psi[:, k]
        c = generators @ v
        y = generators @ (z @ v) - c @ z.T
        # y_i = [C_i, Z] ψ, entry (j, i) = −2 Re ⟨C_j ψ | y_i⟩
        g = -2 * (c.conj() @ y.T).real
        out += np.triu(g) + np.triu(g, 1).T
    return out / dataset.M
