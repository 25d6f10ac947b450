import itertools

import numpy as np
import pytest

import schurqnn.algebra as algebra
import schurqnn.errors
import schurqnn.linalg
import schurqnn.model

SECTORS = {
    2: [(1, 3), (1, 1)],
    3: [(2, 2), (1, 4)],
    4: [(3, 3), (2, 1), (1, 5)],
}

def brute_force_commutant_dim(gens):
    # solve [X, h] = 0 entry by entry over the matrix-unit basis
    d = gens[0].shape[0]
    units = []
    for a, b in itertools.product(range(d), repeat=2):
        e = np.zeros((d, d), dtype=complex)
        e[a, b] = 1
        units.append(np.concatenate([(h @ e - e @ h).ravel() for h in gens]))
    constraint = np.column_stack(units)
    return d * d - schurqnn.linalg.numerical_rank(constraint)

def closure_dim(gens):
    # span of all words in the generators, grown until it stops
    d = gens[0].shape[0]
    span = [np.eye(d, dtype=complex).ravel()]
    frontier = [np.eye(d, dtype=complex)]
    while frontier:
        new = []
        for w in frontier:
            for h in gens:
                candidate = (h @ w).ravel()
                trial = np.column_stack(span + [candidate])
                if schurqnn.linalg.numerical_rank(trial) > len(span):
                    span.append(candidate)
                    new.append(h @ w)
        frontier = new
    return len(span)

@pytest.mark.parametrize('L', [2, 3])
def test_commutant_dim_matches_brute_force(L):
    gens = schurqnn.model.tl_generators(L)
    expected = sum(m * m for _, m in SECTORS[L])
    assert algebra.commutant_basis(gens).dim == expected
    assert brute_force_commutant_dim(gens) == expected

def test_commutant_elements_commute():
    gens = schurqnn.model.tl_generators(3)
    basis = algebra.commutant_basis(gens)
    for c in basis.elements:
        for h in gens:
            assert np.linalg.norm(h @ c - c @ h) < 1e-8

@pytest.mark.parametrize('L', [2, 3, 4])
def test_bicommutant_matches_closure(L):
    gens = schurqnn.model.tl_generators(L)
    expected = sum(n * n for n, _ in SECTORS[L])
    assert algebra.bicommutant_dim(gens) == expected
    assert closure_dim(gens) == expected

@pytest.mark.parametrize('method', ['commutant', 'algebra'])
@pytest.mark.parametrize('L', [2, 3, 4])
def test_temperley_lieb_sectors(L, method):
    gens = schurqnn.model.tl_generators(L)
    decomp = algebra.krylov_decomposition(gens, rng=np.random.default_rng(L), method=method)
    assert [(s.irrep_dim, s.multiplicity) for s in decomp.sectors] == SECTORS[L]
    assert sum(s.size for s in decomp.sectors) == 2 ** L
    assert decomp.selected == list(range(len(SECTORS[L])))

    v = decomp.basis_change
    assert np.allclose(v.conj().T @ v, np.eye(2 ** L), atol=1e-10)
    for h in gens:
        assert algebra.verify_block_structure(h, decomp) < 1e-8

@pytest.mark.slow
def test_eight_qubit_irrep_dims():
    gens = schurqnn.model.tl_generators(8)
    decomp = algebra.krylov_decomposition(gens, rng=np.random.default_rng(8))
    assert sorted(s.irrep_dim for s in decomp.sectors) == [1, 7, 14, 20, 28]
    assert sum(s.size for s in decomp.sectors) == 256

@pytest.fixture(scope='module')
def four_qubits():
    gens = schurqnn.model.tl_generators(4)
    return algebra.krylov_decomposition(gens, rng=np.random.default_rng(0))

def test_project_block(four_qubits):
    h = schurqnn.model.tl_generators(4)[1]
    for s in four_qubits.sectors:
        block = algebra.project_block(h, four_qubits, s.id)
        assert block.shape == (s.irrep_dim, s.irrep_dim)
        assert np.allclose(block, block.conj().T)

def test_project_block_leakage(four_qubits, rng):
    g = schurqnn.linalg.ginibre(16, 16, rng)
    with pytest.raises(schurqnn.errors.BlockLeakage):
        algebra.project_block(g + g.conj().T, four_qubits, 0)

def test_commutant_acts_on_copies(four_qubits, rng):
    # a commutant element only mixes copies, so it leaves no block residual
    c = algebra.commutant_basis(schurqnn.model.tl_generators(4)).random_hermitian(rng)
    assert algebra.verify_block_structure(c, four_qubits) < 1e-8

def test_with_ancilla(four_qubits, rng):
    lifted = four_qubits.with_ancilla(1)
    assert [(s.irrep_dim, s.multiplicity) for s in lifted.sectors] == [(6, 3), (4, 1), (2, 5)]
    v = lifted.basis_change
    assert np.allclose(v.conj().T @ v, np.eye(32), atol=1e-10)

    system = schurqnn.model.SystemSpec.temperley_lieb(4, n_a=1)
    h = schurqnn.model.build_hamiltonian(system, rng)
    assert algebra.verify_block_structure(h, lifted) < 1e-8
    for s in lifted.sectors:
        algebra.project_block(h, lifted, s.id)

def test_sector_weights(four_qubits):
    col = four_qubits.basis_change[:, four_qubits.sector(1).column(0, 0)]
    weights = four_qubits.sector_weights(col)
    assert np.allclose(weights, [0, 1, 0], atol=1e-12)

def test_select(four_qubits):
    picked = four_qubits.select([2, 0, 2])
    assert picked.selected == [0, 2]
    assert picked.total_irrep_dim == 4
    assert four_qubits.total_irrep_dim == 6
    with pytest.raises(schurqnn.errors.UsageError):
        four_qubits.select([])
    with pytest.raises(KeyError):
        four_qubits.select([7])

def test_json_round_trip(four_qubits):
    restored = algebra.KrylovDecomposition.from_json(four_qubits.to_json())
    assert restored.sectors == four_qubits.sectors
    assert np.allclose(restored.basis_change, four_qubits.basis_change)

def test_json_rejects_mismatch(four_qubits):
    v = four_qubits.to_json()
    v['sectors'] = v['sectors'][:1]
    with pytest.raises(schurqnn.errors.ParseError):
        algebra.KrylovDecomposition.from_json(v)

def test_dimension_mismatch(four_qubits):
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        algebra.verify_block_structure(np.eye(8), four_qubits)
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        algebra.krylov_decomposition([np.eye(2), np.eye(4)])
