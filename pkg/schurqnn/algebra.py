"""Decompose a Hilbert space into the sectors of a generated *-algebra.

The algebra generated by Hermitian operators ``h_1 ... h_m`` splits the
space as a direct sum over sectors λ of (irrep of dimension N_λ) ⊗
(multiplicity space of dimension N'_λ). The basis change produced here
orders columns sector by sector, copy by copy, so that column
``start + copy·N_λ + q`` is vector ``q`` of copy ``copy`` in sector λ.
"""

from __future__ import annotations

import collections
import dataclasses
import logging
import typing

import numpy as np
import scipy.linalg as la

import schurqnn._json
import schurqnn.errors
import schurqnn.linalg
from schurqnn._json import Json
from schurqnn.linalg import Matrix

__all__ = [
    'CommutantBasis', 'Sector', 'KrylovDecomposition', 'commutant_basis',
    'hermitian_elements', 'bicommutant_dim', 'krylov_decomposition',
    'project_block', 'verify_block_structure',
]

logger = logging.getLogger(__name__)

#: Tolerance for block-structure residuals.
BLOCK_TOL = 1e-8

#: Relative eigenvalue gaps below this but above ``_MERGE_GAP`` are ambiguous.
EIGEN_GAP = 1e-6
_MERGE_GAP = 1e-9

#: Largest dimension decomposed through the commutant by default.
COMMUTANT_MAX_DIM = 32

#: Largest supported dimension.
MAX_DIM = 4096

@dataclasses.dataclass(frozen=True, eq=False)
class CommutantBasis:
    """Trace-orthonormal basis of all operators commuting with the generators."""

    #: The basis elements, each a dim×dim matrix.
    elements: list[Matrix]
    #: The dimension of the underlying space.
    space_dim: int

    @property
    def dim(self) -> int:
        return len(self.elements)

    def random_hermitian(self, rng: np.random.Generator) -> Matrix:
        """A random real combination, made Hermitian and normalized."""
        coefficients = rng.standard_normal(self.dim)
        c = np.tensordot(coefficients, np.asarray(self.elements), axes=1)
        c = c + c.conj().T
        norm = np.linalg.norm(c)
        if norm == 0:
            # every element was anti-Hermitian; rotate by i
            c = 1j * np.tensordot(coefficients, np.asarray(self.elements), axes=1)
            c = c + c.conj().T
            norm = np.linalg.norm(c)
        return c / norm

@dataclasses.dataclass(frozen=True)
class Sector:
    #: Sector label λ, its position in the sorted sector list.
    id: int
    #: Irrep dimension N_λ.
    irrep_dim: int
    #: Number of copies N'_λ.
    multiplicity: int
    #: First column of this sector in the basis change.
    start: int

    @property
    def size(self) -> int:
        return self.irrep_dim * self.multiplicity

    @property
    def stop(self) -> int:
        return self.start + self.size

    @property
    def columns(self) -> slice:
        return slice(self.start, self.stop)

    def copy_columns(self, copy: int) -> slice:
        """Columns spanning one copy of the irrep."""
        if not 0 <= copy < self.multiplicity:
            raise IndexError(f'sector {self.id} has no copy {copy}')
        first = self.start + copy * self.irrep_dim
        return slice(first, first + self.irrep_dim)

    def column(self, q: int, copy: int) -> int:
        if not 0 <= q < self.irrep_dim:
            raise IndexError(f'sector {self.id} has no irrep vector {q}')
        return self.copy_columns(copy).start + q

    def to_json(self) -> Json:
        return {'id': self.id, 'irrep_dim': self.irrep_dim, 'multiplicity': self.multiplicity}

@dataclasses.dataclass(frozen=True, eq=False)
class KrylovDecomposition:
    """Basis change and sector list for a generated algebra."""

    #: Unitary whose columns are the adapted basis.
    basis_change: Matrix
    #: Sectors in column order.
    sectors: list[Sector]
    #: Sector ids retained for the task.
    selected: list[int]

    @property
    def dim(self) -> int:
        return self.basis_change.shape[0]

    @property
    def total_irrep_dim(self) -> int:
        """N, the summed irrep dimension over selected sectors."""
        return sum(self.sectors[i].irrep_dim for i in self.selected)

    def sector(self, sector_id: int) -> Sector:
        try:
            return self.sectors[sector_id]
        except IndexError:
            raise KeyError(f'no sector {sector_id}') from None

    def to_block_basis(self, op: Matrix) -> Matrix:
        v = self.basis_change
        return v.conj().T @ op @ v

    def projector(self, sector_id: int) -> Matrix:
        cols = self.basis_change[:, self.sector(sector_id).columns]
        return cols @ cols.conj().T

    def sector_weights(self, state: np.ndarray) -> np.ndarray:
        """Squared norm of ``state`` inside each sector."""
        coeffs = self.basis_change.conj().T @ state
        return np.array([np.sum(np.abs(coeffs[s.columns]) ** 2) for s in self.sectors])

    def select(self, ids: typing.Iterable[int]) -> typing.Self:
        ids = sorted(set(ids))
        for i in ids:
            self.sector(i)
        if not ids:
            raise schurqnn.errors.UsageError('at least one sector must be selected')
        return dataclasses.replace(self, selected=ids)

    def with_ancilla(self, n_a: int) -> typing.Self:
        """Refine to system ⊗ ancilla, multiplying irrep dims by 2^n_a.

        Column ``start + copy·N·N_a + q·N_a + a`` of the result is column
        ``q`` of the system copy tensored with ancilla basis state ``a``.
        """
        n_anc = 2 ** n_a
        v = self.basis_change
        dim = self.dim * n_anc
        out = np.zeros((dim, dim), dtype=complex)
        sectors = []
        for s in self.sectors:
            start = s.start * n_anc
            for copy in range(s.multiplicity):
                for q in range(s.irrep_dim):
                    col = v[:, s.column(q, copy)]
                    for a in range(n_anc):
                        idx = start + (copy * s.irrep_dim + q) * n_anc + a
                        out[a::n_anc, idx] = col
            sectors.append(dataclasses.replace(s, irrep_dim=s.irrep_dim * n_anc, start=start))
        return dataclasses.replace(self, basis_change=out, sectors=sectors)

    def to_json(self) -> Json:
        return {
            'dim': self.dim,
            'sectors': [s.to_json() for s in self.sectors],
            'selected': list(self.selected),
            'basis_change': schurqnn._json.to_json(self.basis_change),
        }

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        if not isinstance(v, dict):
            raise schurqnn.errors.ParseError('expected object', where='decomposition')
        try:
            basis = schurqnn._json.complex_array(v['basis_change'])
            sectors = []
            start = 0
            for i, s in enumerate(v['sectors']):
                sectors.append(Sector(id=i, irrep_dim=int(s['irrep_dim']), multiplicity=int(s['multiplicity']), start=start))
                start += sectors[-1].size
            selected = [int(i) for i in v.get('selected', range(len(sectors)))]
        except (KeyError, TypeError, ValueError) as e:
            raise schurqnn.errors.ParseError(f'malformed decomposition: {e}', where='decomposition')
        if basis.shape != (start, start) or v.get('dim', start) != start:
            raise schurqnn.errors.ParseError('sector sizes do not match basis_change', where='decomposition')
        return cls(basis_change=basis, sectors=sectors, selected=selected)

def _check_generators(generators: typing.Sequence[np.ndarray]) -> list[Matrix]:
    if not generators:
        raise ValueError('need at least one generator')
    out = [schurqnn.linalg.check_hermitian(g, name=f'generator {i}') for i, g in enumerate(generators)]
    dims = {g.shape[0] for g in out}
    if len(dims) != 1:
        raise schurqnn.errors.DimensionMismatch(f'generators have differing dims {sorted(dims)}')
    return out

def commutant_basis(generators: typing.Sequence[np.ndarray], tol: float = schurqnn.linalg.RANK_TOL) -> CommutantBasis:
    """Solve ``[X, h] = 0`` for every generator as one linear system."""
    gens = _check_generators(generators)
    d = gens[0].shape[0]
    eye = np.eye(d)
    # row-major vec: vec(hX) = (h ⊗ I) vec(X), vec(Xh) = (I ⊗ hᵀ) vec(X)
    constraint = np.vstack([np.kron(h, eye) - np.kron(eye, h.T) for h in gens])
    kernel = schurqnn.linalg.nullspace(constraint, tol)
    elements = [kernel[:, k].reshape(d, d) for k in range(kernel.shape[1])]
    logger.debug('commutant of %d generators in dim %d has dim %d', len(gens), d, len(elements))
    return CommutantBasis(elements=elements, space_dim=d)

def hermitian_elements(basis: CommutantBasis) -> list[Matrix]:
    """Hermitian spanning set of a *-closed basis."""
    out = []
    for c in basis.elements:
        for h in ((c + c.conj().T) / 2, (c - c.conj().T) / 2j):
            if np.linalg.norm(h) > schurqnn.linalg.RANK_TOL:
                out.append(h)
    return out

def bicommutant_dim(generators: typing.Sequence[np.ndarray], tol: float = schurqnn.linalg.RANK_TOL) -> int:
    """Dimension of the commutant of the commutant, Σ_λ N_λ²."""
    return commutant_basis(hermitian_elements(commutant_basis(generators, tol)), tol).dim

def _random_combination(gens: list[Matrix], rng: np.random.Generator) -> Matrix:
    return np.tensordot(rng.standard_normal(len(gens)), np.asarray(gens), axes=1)

def _random_algebra_element(gens: list[Matrix], rng: np.random.Generator, word_length: int) -> Matrix:
    """A generic Hermitian element built from words up to ``word_length``."""
    d = gens[0].shape[0]
    total = np.zeros((d, d), dtype=complex)
    for length in range(1, word_length + 1):
        word = np.eye(d, dtype=complex)
        for _ in range(length):
            word = word @ _random_combination(gens, rng)
        total += rng.standard_normal() * word
    total = total + total.conj().T
    norm = np.linalg.norm(total)
    return total / norm if norm > 0 else total

def _clusters(values: np.ndarray) -> list[np.ndarray]:
    """Group sorted eigenvalues into numerically equal runs."""
    scale = max(1.0, float(np.max(np.abs(values))))
    gaps = np.diff(values) / scale
    if np.any((gaps > _MERGE_GAP) & (gaps < EIGEN_GAP)):
        raise schurqnn.errors.DegenerateDraw(f'ambiguous eigenvalue gap {np.min(gaps[gaps > _MERGE_GAP]):.3g}')
    boundaries = np.flatnonzero(gaps >= EIGEN_GAP) + 1
    return np.split(np.arange(len(values)), boundaries)

def _components(n: int, linked: typing.Callable[[int, int], bool]) -> list[list[int]]:
    """Connected components of an undirected graph, each listed in BFS order."""
    seen = [False] * n
    out = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        order = [root]
        queue = collections.deque([root])
        while queue:
            i = queue.popleft()
            for j in range(n):
                if not seen[j] and linked(i, j):
                    seen[j] = True
                    order.append(j)
                    queue.append(j)
        out.append(order)
    return out

# a sector under construction: one d×N matrix of basis columns per copy
_Copies: typing.TypeAlias = list[Matrix]

def _via_commutant(gens: list[Matrix], rng: np.random.Generator, tol: float, word_length: int) -> list[_Copies]:
    basis = commutant_basis(gens, tol)
    reference = basis.random_hermitian(rng)
    w, v = la.eigh(reference)
    copies = [v[:, c] for c in _clusters(w)]

    # copies of the same irrep are linked by a generic commutant element
    connector = basis.random_hermitian(rng)
    link = np.array([[np.linalg.norm(q.conj().T @ connector @ p) for p in copies] for q in copies])
    groups = _components(len(copies), lambda i, j: link[i, j] > EIGEN_GAP)

    algebra_element = _random_algebra_element(gens, rng, word_length)
    sectors = []
    for group in groups:
        first = copies[group[0]]
        if any(copies[j].shape[1] != first.shape[1] for j in group):
            raise schurqnn.errors.DegenerateDraw('copies of one sector differ in dimension')
        # fix the irrep basis of the first copy, then transport it
        _, y = la.eigh(first.conj().T @ algebra_element @ first)
        aligned = [first @ y]
        for j in group[1:]:
            target = copies[j]
            moved = target @ (target.conj().T @ connector @ aligned[0])
            scale = np.linalg.norm(moved[:, 0])
            if scale < EIGEN_GAP:
                raise schurqnn.errors.DegenerateDraw('copies are too weakly linked to align')
            aligned.append(moved / scale)
        sectors.append(aligned)
    return sectors

def _via_algebra(gens: list[Matrix], rng: np.random.Generator, tol: float, word_length: int) -> list[_Copies]:
    element = _random_algebra_element(gens, rng, word_length)
    w, v = la.eigh(element)
    clusters = _clusters(w)
    n = len(clusters)

    # coupling[g, j, i]: how strongly generator g maps eigenspace i into j
    blocks = [v.conj().T @ h @ v for h in gens]
    coupling = np.zeros((len(gens), n, n))
    for g, b in enumerate(blocks):
        for i, ci in enumerate(clusters):
            for j, cj in enumerate(clusters):
                coupling[g, j, i] = np.linalg.norm(b[np.ix_(cj, ci)])
    strength = coupling.max(axis=0)
    best = coupling.argmax(axis=0)
    threshold = EIGEN_GAP * max(1.0, max(float(np.linalg.norm(h, 2)) for h in gens))

    sectors = []
    for component in _components(n, lambda i, j: strength[j, i] > threshold):
        multiplicity = len(clusters[component[0]])
        if any(len(clusters[k]) != multiplicity for k in component):
            raise schurqnn.errors.DegenerateDraw('eigenspaces of one sector differ in dimension')

        # frames are coordinates inside each eigenspace; transport the
        # root frame along the strongest generator link
        frames: dict[int, Matrix] = {component[0]: np.eye(multiplicity, dtype=complex)}
        for k in component[1:]:
            parent = max(frames, key=lambda j: strength[k, j])
            h = blocks[best[k, parent]]
            moved = h[np.ix_(clusters[k], clusters[parent])] @ frames[parent]
            frames[k] = moved / np.linalg.norm(moved[:, 0])

        irreps = sorted(component)
        sectors.append([
            np.column_stack([v[:, clusters[k]] @ frames[k][:, copy] for k in irreps])
            for copy in range(multiplicity)
        ])
    return sectors

def _sort_key(copies: _Copies) -> tuple[int, int, int]:
    # irrep dimension, then multiplicity, both descending, then first occupied column
    n = copies[0].shape[1]
    weight = sum(np.sum(np.abs(c) ** 2, axis=1) for c in copies)
    first = int(np.flatnonzero(weight > BLOCK_TOL)[0])
    return (-n, -len(copies), first)

def _assemble(sectors: list[_Copies], dim: int) -> KrylovDecomposition:
    sectors = sorted(sectors, key=_sort_key)
    columns = []
    out = []
    start = 0
    for i, copies in enumerate(sectors):
        out.append(Sector(id=i, irrep_dim=copies[0].shape[1], multiplicity=len(copies), start=start))
        columns.extend(copies)
        start += out[-1].size
    if start != dim:
        raise schurqnn.errors.DegenerateDraw(f'sectors cover {start} of {dim} dimensions')
    basis = np.hstack(columns)
    return KrylovDecomposition(basis_change=basis, sectors=out, selected=list(range(len(out))))

def _copy_residual(op: Matrix, decomp: KrylovDecomposition) -> float:
    """Largest violation of the (irrep ⊗ identity) form inside sectors."""
    b = decomp.to_block_basis(op)
    worst = 0.0
    for s in decomp.sectors:
        ref = b[s.copy_columns(0), s.copy_columns(0)]
        for i in range(s.multiplicity):
            for j in range(s.multiplicity):
                block = b[s.copy_columns(i), s.copy_columns(j)]
                expected = ref if i == j else 0
                worst = max(worst, float(np.linalg.norm(block - expected)))
    return worst

def _validate(decomp: KrylovDecomposition, gens: list[Matrix]) -> None:
    v = decomp.basis_change
    unitarity = np.linalg.norm(v.conj().T @ v - np.eye(decomp.dim))
    if unitarity > BLOCK_TOL:
        raise schurqnn.errors.DegenerateDraw(f'basis change is not unitary ({unitarity:.3g})')
    for i, h in enumerate(gens):
        scale = max(1.0, float(np.linalg.norm(h)))
        leak = verify_block_structure(h, decomp)
        spread = _copy_residual(h, decomp)
        if max(leak, spread) > BLOCK_TOL * scale:
            raise schurqnn.errors.DegenerateDraw(
                f'generator {i} not block diagonal (leak {leak:.3g}, copy spread {spread:.3g})'
            )

def krylov_decomposition(
        generators: typing.Sequence[np.ndarray],
        tol: float = schurqnn.linalg.RANK_TOL,
        rng: np.random.Generator | None = None,
        *,
        method: typing.Literal['auto', 'commutant', 'algebra'] = 'auto',
        word_length: int = 4,
        attempts: int = 8,
) -> KrylovDecomposition:
    """Split the space into sectors of the algebra generated by ``generators``.

    ``method='commutant'`` diagonalizes a generic commutant element to
    find irrep copies and groups them with a second commutant element.
    ``method='algebra'`` diagonalizes a generic algebra element, groups
    its eigenspaces by generator connectivity and aligns copies by
    transporting along the generators. ``'auto'`` uses the commutant up
    to dimension :data:`COMMUTANT_MAX_DIM`.
    """
    gens = _check_generators(generators)
    dim = gens[0].shape[0]
    if dim > MAX_DIM:
        raise schurqnn.errors.DimensionMismatch(f'dimension {dim} exceeds {MAX_DIM}')
    if rng is None:
        rng = np.random.default_rng()
    if method == 'auto':
        method = 'commutant' if dim <= COMMUTANT_MAX_DIM else 'algebra'
    build = {'commutant': _via_commutant, 'algebra': _via_algebra}[method]

    last: Exception | None = None
    for attempt in range(attempts):
        try:
            decomp = _assemble(build(gens, rng, tol, word_length), dim)
            _validate(decomp, gens)
        except schurqnn.errors.DegenerateDraw as e:
            logger.warning('decomposition draw %d rejected: %s', attempt + 1, e)
            last = e
            continue
        logger.debug(
            'decomposed dim %d into %s',
            dim, [(s.irrep_dim, s.multiplicity) for s in decomp.sectors],
        )
        return decomp
    raise schurqnn.errors.DegenerateDraw(f'no usable draw in {attempts} attempts: {last}')

def verify_block_structure(op: np.ndarray, decomp: KrylovDecomposition) -> float:
    """Frobenius norm of everything outside the diagonal sector blocks."""
    m = np.asarray(op, dtype=complex)
    if m.shape != (decomp.dim, decomp.dim):
        raise schurqnn.errors.DimensionMismatch(f'operator of shape {m.shape} against dim {decomp.dim}')
    b = decomp.to_block_basis(m)
    for s in decomp.sectors:
        b[s.columns, s.columns] = 0
    return float(np.linalg.norm(b))

def project_block(op: np.ndarray, decomp: KrylovDecomposition, sector_id: int, tol: float = BLOCK_TOL) -> Matrix:
    """One irrep copy of the sector block of ``op``."""
    m = np.asarray(op, dtype=complex)
    if m.shape != (decomp.dim, decomp.dim):
        raise schurqnn.errors.DimensionMismatch(f'operator of shape {m.shape} against dim {decomp.dim}')
    s = decomp.sector(sector_id)
    scale = max(1.0, float(np.linalg.norm(m)))
    b = decomp.to_block_basis(m)
    rows = b[s.columns, :].copy()
    rows[:, s.columns] = 0
    leak = float(np.linalg.norm(rows))
    if leak > tol * scale:
        raise schurqnn.errors.BlockLeakage(f'{leak:.3g} of the operator leaves sector {sector_id}')
    block = b[s.columns, s.columns]
    ref = block[:s.irrep_dim, :s.irrep_dim]
    n = s.irrep_dim
    for i in range(s.multiplicity):
        for j in range(s.multiplicity):
            piece = block[i * n:(i + 1) * n, j * n:(j + 1) * n]
            expected = ref if i == j else 0
            spread = float(np.linalg.norm(piece - expected))
            if spread > tol * scale:
                raise schurqnn.errors.BlockLeakage(f'copies {i} and {j} of sector {sector_id} disagree by {spread:.3g}')
    return ref.copy()
