"""Concrete fragmented systems: generators, Hamiltonian, A, datasets.

Tensor order is always system ⊗ ancilla, with the ancilla register as
the least significant part of the computational index. Within each
register qubit 0 is the most significant bit.
"""

from __future__ import annotations

import collections
import dataclasses
import logging
import math
import typing

import numpy as np
import numpy.typing as npt

import schurqnn._json
import schurqnn.algebra
import schurqnn.errors
import schurqnn.linalg
from schurqnn._json import Json
from schurqnn.linalg import Matrix, Vector

__all__ = [
    'TL_PROJECTOR', 'PHI_PLUS', 'tl_generators', 'SystemSpec',
    'build_hamiltonian', 'build_A', 'encode_labels', 'DataPoint', 'Dataset',
    'build_observable', 'observable_diagonal', 'bell_datasets',
    'assign_sectors', 'schur_dataset',
]

logger = logging.getLogger(__name__)

#: Local Temperley–Lieb term 2|Φ+⟩⟨Φ+| on two adjacent qubits.
TL_PROJECTOR = np.array([
    [1, 0, 0, 1],
    [0, 0, 0, 0],
    [0, 0, 0, 0],
    [1, 0, 0, 1],
], dtype=complex)

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)

def tl_generators(L: int) -> list[Matrix]:
    """Temperley–Lieb generators on an open chain of ``L`` qubits."""
    if L < 2:
        raise schurqnn.errors.UsageError(f'Temperley–Lieb chains need L >= 2, got {L}')
    return [schurqnn.linalg.embed(TL_PROJECTOR, i, L) for i in range(L - 1)]

@dataclasses.dataclass(frozen=True, eq=False)
class SystemSpec:
    """A system register with its generators, plus an ancilla register."""

    #: Number of system qubits.
    L: int
    #: Number of ancilla qubits.
    n_a: int
    #: Hermitian generators h_i acting on the system register.
    generators: list[Matrix]
    #: Seed used for the Hamiltonian coefficients.
    seed: int = 0
    #: Name of the generator family.
    model: str = 'temperley-lieb'

    def __post_init__(self) -> None:
        if self.n_a < 1:
            raise schurqnn.errors.UsageError(f'need at least one ancilla qubit, got {self.n_a}')
        for i, g in enumerate(self.generators):
            schurqnn.linalg.check_hermitian(g, name=f'generator {i}')
            if g.shape[0] != 2 ** self.L:
                raise schurqnn.errors.DimensionMismatch(f'generator {i} has dim {g.shape[0]}, expected {2 ** self.L}')

    @classmethod
    def temperley_lieb(cls, L: int, n_a: int = 1, seed: int = 0) -> typing.Self:
        return cls(L=L, n_a=n_a, generators=tl_generators(L), seed=seed)

    @property
    def system_dim(self) -> int:
        return 2 ** self.L

    @property
    def ancilla_dim(self) -> int:
        return 2 ** self.n_a

    @property
    def dim(self) -> int:
        return self.system_dim * self.ancilla_dim

def _ancilla_paulis(n_a: int) -> list[Matrix]:
    return [
        schurqnn.linalg.embed(pauli, j, n_a)
        for j in range(n_a)
        for pauli in (schurqnn.linalg.PAULI_X, schurqnn.linalg.PAULI_Y, schurqnn.linalg.PAULI_Z)
    ]

def build_hamiltonian(
        spec: SystemSpec,
        rng: np.random.Generator,
        *,
        system_coefficients: npt.ArrayLike | None = None,
        ancilla_coefficients: npt.ArrayLike | None = None,
) -> Matrix:
    """H = (Σ c_i h_i) ⊗ (Σ_j c'_{j,x} X_j + c'_{j,y} Y_j + c'_{j,z} Z_j).

    Coefficients not given explicitly are drawn i.i.d. standard normal,
    system first, then the ancilla in (qubit, x/y/z) order.
    """
    paulis = _ancilla_paulis(spec.n_a)
    c = rng.standard_normal(len(spec.generators)) if system_coefficients is None else np.asarray(system_coefficients, dtype=float)
    c_anc = rng.standard_normal(len(paulis)) if ancilla_coefficients is None else np.asarray(ancilla_coefficients, dtype=float).ravel()
    if c.shape != (len(spec.generators),) or c_anc.shape != (len(paulis),):
        raise schurqnn.errors.DimensionMismatch('wrong number of Hamiltonian coefficients')

    system = np.tensordot(c, np.asarray(spec.generators), axes=1)
    ancilla = np.tensordot(c_anc, np.asarray(paulis), axes=1)
    return np.kron(system, ancilla)

def build_A(spec: SystemSpec, kind: typing.Literal['rotating', 'system'] = 'rotating') -> Matrix:
    """The positive generator A of the trainable rotations.

    ``rotating`` is (h_1 − λ_min)⊗(I + X)/2 on the first ancilla qubit,
    ``system`` is (h_1 − λ_min)⊗I.
    """
    if not spec.generators:
        raise schurqnn.errors.UsageError('system has no generators')
    h = spec.generators[0]
    shifted = h - np.linalg.eigvalsh(h)[0] * np.eye(spec.system_dim)
    match kind:
        case 'rotating':
            local = (schurqnn.linalg.PAULI_I + schurqnn.linalg.PAULI_X) / 2
            ancilla = schurqnn.linalg.embed(local, 0, spec.n_a)
        case 'system':
            ancilla = np.eye(spec.ancilla_dim, dtype=complex)
        case _:
            raise schurqnn.errors.UsageError(f'unknown A kind {kind!r}')
    return np.kron(shifted, ancilla)

def encode_labels(class_count: int) -> tuple[int, list[str]]:
    """Ancilla width and consecutive binary labels for ``class_count`` classes."""
    if class_count < 1:
        raise ValueError(f'need at least one class, got {class_count}')
    n_a = max(1, math.ceil(math.log2(class_count)))
    return n_a, [format(k, f'0{n_a}b') for k in range(class_count)]

@dataclasses.dataclass(eq=False)
class DataPoint:
    #: Normalized state on system ⊗ ancilla.
    state: Vector
    #: Target ancilla bitstring.
    label: str
    #: Sector this state lies in, if known.
    sector: int | None = None

    @property
    def n_a(self) -> int:
        return len(self.label)

    @property
    def label_index(self) -> int:
        return int(self.label, 2)

    def system_part(self) -> Vector:
        """The system vector, assuming the ancilla is in |0…0⟩."""
        return self.state.reshape(-1, 2 ** self.n_a)[:, 0]

    def to_json(self) -> Json:
        return {
            'amplitudes': schurqnn._json.to_json(self.state),
            'label': self.label,
            'sector': self.sector,
        }

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        if not isinstance(v, dict):
            raise schurqnn.errors.ParseError('expected object', where='data point')
        try:
            state = schurqnn._json.complex_array(v['amplitudes'])
            label = v['label']
            sector = v.get('sector')
        except KeyError as e:
            raise schurqnn.errors.ParseError(f'missing {e}', where='data point')
        if not isinstance(label, str) or not label or set(label) - {'0', '1'}:
            raise schurqnn.errors.ParseError(f'bad label {label!r}', where='data point')
        if sector is not None and not isinstance(sector, int):
            raise schurqnn.errors.ParseError(f'bad sector {sector!r}', where='data point')
        return cls(state=state, label=label, sector=sector)

@dataclasses.dataclass(eq=False)
class Dataset:
    #: Number of system qubits.
    L: int
    #: Number of ancilla qubits.
    n_a: int
    #: The data points.
    points: list[DataPoint]

    def __post_init__(self) -> None:
        # N = Σ N_λ never exceeds the system dimension
        if self.M > 2 ** self.L:
            raise schurqnn.errors.DimensionMismatch(f'{self.M} points exceed the system dimension {2 ** self.L}')
        dim = 2 ** (self.L + self.n_a)
        for i, x in enumerate(self.points):
            if x.state.shape != (dim,):
                raise schurqnn.errors.DimensionMismatch(f'point {i} has shape {x.state.shape}, expected ({dim},)')
            if len(x.label) != self.n_a:
                raise schurqnn.errors.DimensionMismatch(f'point {i} label {x.label!r} is not {self.n_a} bits')
            if abs(np.linalg.norm(x.state) - 1) > 1e-10:
                raise schurqnn.errors.DimensionMismatch(f'point {i} is not normalized')

    @property
    def M(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return 2 ** (self.L + self.n_a)

    def counts(self) -> dict[int | None, int]:
        """Per-sector counts M_λ."""
        return dict(collections.Counter(x.sector for x in self.points))

    def states(self) -> Matrix:
        """All states as the columns of a dim×M matrix."""
        return np.column_stack([x.state for x in self.points])

    def widen(self, n_a: int) -> typing.Self:
        """Prepend idle ancilla qubits, keeping every label's index."""
        if n_a < self.n_a:
            raise schurqnn.errors.UsageError(f'dataset needs {self.n_a} ancilla qubits, got {n_a}')
        extra = _ancilla_zero(n_a - self.n_a)
        points = []
        for x in self.points:
            grid = x.state.reshape(-1, 2 ** self.n_a)
            state = np.einsum('sa,e->sea', grid, extra).reshape(-1)
            points.append(DataPoint(state=state, label='0' * (n_a - self.n_a) + x.label, sector=x.sector))
        return dataclasses.replace(self, n_a=n_a, points=points)

    def to_json(self) -> Json:
        return {'L': self.L, 'n_a': self.n_a, 'points': [x.to_json() for x in self.points]}

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        if not isinstance(v, dict) or not isinstance(v.get('points'), list):
            raise schurqnn.errors.ParseError('expected object with points', where='dataset')
        L, n_a = v.get('L'), v.get('n_a')
        if not isinstance(L, int) or not isinstance(n_a, int):
            raise schurqnn.errors.ParseError('L and n_a must be integers', where='dataset')
        return cls(L=L, n_a=n_a, points=[DataPoint.from_json(x) for x in v['points']])

def observable_diagonal(point: DataPoint) -> npt.NDArray[np.float64]:
    """Diagonal of O_x = −I ⊗ |label⟩⟨label| in the computational basis."""
    n_anc = 2 ** point.n_a
    diag = np.zeros(len(point.state))
    diag[point.label_index::n_anc] = -1.0
    return diag

def build_observable(point: DataPoint) -> Matrix:
    return np.diag(observable_diagonal(point)).astype(complex)

def _ancilla_zero(n_a: int) -> Vector:
    e = np.zeros(2 ** n_a, dtype=complex)
    e[0] = 1
    return e

def _basis_state(bits: str) -> Vector:
    e = np.zeros(2 ** len(bits), dtype=complex)
    e[int(bits, 2)] = 1
    return e

def _labelled(L: int, systems: list[Vector]) -> Dataset:
    n_a, labels = encode_labels(len(systems))
    anc = _ancilla_zero(n_a)
    points = [DataPoint(state=np.kron(s, anc), label=label) for s, label in zip(systems, labels)]
    return Dataset(L=L, n_a=n_a, points=points)

def bell_datasets() -> tuple[Dataset, Dataset]:
    """The 4-qubit and 8-qubit classification sets built from Bell pairs."""
    four = _labelled(4, [
        np.kron(np.kron(_basis_state('0'), PHI_PLUS), _basis_state('1')),
        np.kron(PHI_PLUS, PHI_PLUS),
    ])
    eight = _labelled(8, [np.kron(PHI_PLUS, _basis_state('010101'))])
    return four, eight

def assign_sectors(dataset: Dataset, decomp: schurqnn.algebra.KrylovDecomposition) -> Dataset:
    """Tag every point with the sector carrying most of its weight."""
    points = []
    for i, x in enumerate(dataset.points):
        weights = decomp.sector_weights(x.system_part())
        sector = int(np.argmax(weights))
        if weights[sector] < 1 - 1e-8:
            logger.warning('point %d is spread over sectors %s', i, np.round(weights, 6).tolist())
        points.append(dataclasses.replace(x, sector=sector))
    return dataclasses.replace(dataset, points=points)

def schur_dataset(
        decomp: schurqnn.algebra.KrylovDecomposition,
        L: int,
        classes: typing.Sequence[tuple[int, int, int]] | None = None,
) -> Dataset:
    """Data points |λ, q, copy⟩ ⊗ |0⟩ taken from the decomposition basis.

    ``classes`` lists (sector, q, copy) triples, one label each; by
    default the first irrep vector of the first copy of every selected
    sector.
    """
    if classes is None:
        classes = [(i, 0, 0) for i in decomp.selected]
    if not classes:
        raise schurqnn.errors.UsageError('schur dataset needs at least one class')
    n_a, labels = encode_labels(len(classes))
    anc = _ancilla_zero(n_a)
    points = []
    for (sector, q, copy), label in zip(classes, labels):
        col = decomp.basis_change[:, decomp.sector(sector).column(q, copy)]
        points.append(DataPoint(state=np.kron(col, anc), label=label, sector=sector))
    return Dataset(L=L, n_a=n_a, points=points)
