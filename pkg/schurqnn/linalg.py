"""Dense complex linear algebra shared by every other module.

Operators are plain two-dimensional ``complex128`` arrays. Functions that
need a Hermitian operator check it with :func:`check_hermitian`.

Random matrices follow one convention throughout: a standard complex
Gaussian entry has independent real and imaginary parts, each of
variance 1/2, so ``E|z|^2 = 1``.
"""

from __future__ import annotations

import dataclasses
import functools
import typing

import numpy as np
import numpy.typing as npt
import scipy.linalg as la

import schurqnn.errors

__all__ = [
    'Matrix', 'Vector', 'RealVector', 'HERMITIAN_TOL', 'RANK_TOL',
    'as_operator', 'check_hermitian', 'Eigensystem', 'hermitian_eig',
    'evolve', 'ginibre', 'haar_unitary', 'numerical_rank', 'nullspace',
    'kron', 'commutator', 'embed', 'PAULI_I', 'PAULI_X', 'PAULI_Y', 'PAULI_Z',
]

Matrix: typing.TypeAlias = npt.NDArray[np.complex128]
Vector: typing.TypeAlias = npt.NDArray[np.complex128]
RealVector: typing.TypeAlias = npt.NDArray[np.float64]

#: Maximum entrywise deviation from the conjugate transpose, relative
#: to max(1, largest entry).
HERMITIAN_TOL = 1e-12

#: Default relative singular value cutoff for rank and nullspace.
RANK_TOL = 1e-8

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

def as_operator(op: npt.ArrayLike, name: str = 'operator') -> Matrix:
    """Convert to a square, finite complex matrix."""
    m = np.asarray(op, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise schurqnn.errors.DimensionMismatch(f'{name} must be square, got shape {m.shape}')
    if not np.all(np.isfinite(m)):
        raise ValueError(f'{name} has non-finite entries')
    return m

def check_hermitian(op: npt.ArrayLike, tol: float = HERMITIAN_TOL, name: str = 'operator') -> Matrix:
    m = as_operator(op, name)
    scale = max(1.0, float(np.max(np.abs(m))))
    dev = float(np.max(np.abs(m - m.conj().T)))
    if dev > tol * scale:
        raise schurqnn.errors.NotHermitian(f'{name} deviates from its adjoint by {dev:.3g}')
    return m

@dataclasses.dataclass(frozen=True, eq=False)
class Eigensystem:
    """Eigendecomposition ``op = V diag(w) V†`` of a Hermitian operator."""

    #: Eigenvalues, ascending.
    values: RealVector
    #: Unitary whose columns are the eigenvectors.
    vectors: Matrix

    @property
    def dim(self) -> int:
        return len(self.values)

    def phases(self, t: float, sign: int = 1) -> Vector:
        """The diagonal of ``exp(sign·i·op·t)`` in the eigenbasis."""
        if sign not in (1, -1):
            raise ValueError(f'sign must be +1 or -1, got {sign}')
        return np.exp(sign * 1j * t * self.values)

    def evolve(self, t: float, sign: int = 1) -> Matrix:
        return (self.vectors * self.phases(t, sign)) @ self.vectors.conj().T

    def to_eigenbasis(self, op: Matrix) -> Matrix:
        return self.vectors.conj().T @ op @ self.vectors

    @functools.cached_property
    def matrix(self) -> Matrix:
        return (self.vectors * self.values) @ self.vectors.conj().T

def hermitian_eig(op: npt.ArrayLike) -> Eigensystem:
    m = check_hermitian(op)
    # symmetrize away the tolerated residue before handing to LAPACK
    w, v = la.eigh((m + m.conj().T) / 2)
    return Eigensystem(values=w, vectors=v)

def evolve(op: npt.ArrayLike, t: float, sign: int = 1) -> Matrix:
    """Compute ``exp(sign·i·op·t)`` for Hermitian ``op``."""
    return hermitian_eig(op).evolve(t, sign)

def ginibre(rows: int, cols: int, rng: np.random.Generator, size: tuple[int, ...] = ()) -> Matrix:
    """Matrix (or stack of matrices) of i.i.d. standard complex Gaussians."""
    if rows < 1 or cols < 1:
        raise ValueError(f'ginibre needs positive shape, got {rows}x{cols}')
    shape = (*size, rows, cols)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

def haar_unitary(dim: int, rng: np.random.Generator, size: tuple[int, ...] = ()) -> Matrix:
    """Haar-distributed unitary (or stack of them) via QR of a Ginibre matrix."""
    if dim < 1:
        raise ValueError(f'haar_unitary needs dim >= 1, got {dim}')
    z = ginibre(dim, dim, rng, size)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]

def numerical_rank(op: npt.ArrayLike, tol: float = RANK_TOL) -> int:
    """Count singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError('tol must be positive')
    m = np.asarray(op)
    if m.size == 0:
        return 0
    s = la.svdvals(m)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))

def nullspace(matrix: npt.ArrayLike, tol: float = RANK_TOL) -> Matrix:
    """Orthonormal basis (as columns) of the kernel of ``matrix``."""
    if tol <= 0:
        raise ValueError('tol must be positive')
    m = np.asarray(matrix, dtype=complex)
    if not np.any(m):
        return np.eye(m.shape[1], dtype=complex)
    return la.null_space(m, rcond=tol)

def kron(*ops: npt.ArrayLike) -> Matrix:
    return functools.reduce(np.kron, ops, np.ones((1, 1), dtype=complex))

def commutator(a: Matrix, b: Matrix) -> Matrix:
    return a @ b - b @ a

def embed(local: npt.ArrayLike, first: int, n_qubits: int) -> Matrix:
    """Place a local operator on qubits ``first, first+1, ...`` of a chain.

    Qubit 0 is the most significant bit of the computational index.
    """
    m = np.asarray(local, dtype=complex)
    width = int(round(np.log2(m.shape[0])))
    if 2 ** width != m.shape[0] or first < 0 or first + width > n_qubits:
        raise schurqnn.errors.DimensionMismatch(
            f'cannot place a {m.shape[0]}-dim operator at qubit {first} of {n_qubits}'
        )
    left = np.eye(2 ** first, dtype=complex)
    right = np.eye(2 ** (n_qubits - first - width), dtype=complex)
    return kron(left, m, right)
