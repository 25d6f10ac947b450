import numpy as np
import pytest

import schurqnn.algebra
import schurqnn.errors
import schurqnn.model as model

def test_tl_relations():
    e = model.tl_generators(4)
    assert len(e) == 3
    for i, ei in enumerate(e):
        assert np.allclose(ei @ ei, 2 * ei)
        if i + 1 < len(e):
            assert np.allclose(ei @ e[i + 1] @ ei, ei)
            assert np.allclose(e[i + 1] @ ei @ e[i + 1], e[i + 1])
    assert np.allclose(e[0] @ e[2], e[2] @ e[0])

def test_tl_needs_two_sites():
    with pytest.raises(schurqnn.errors.UsageError):
        model.tl_generators(1)

def test_system_spec():
    s = model.SystemSpec.temperley_lieb(3, n_a=2)
    assert (s.system_dim, s.ancilla_dim, s.dim) == (8, 4, 32)
    with pytest.raises(schurqnn.errors.UsageError):
        model.SystemSpec.temperley_lieb(3, n_a=0)
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        model.SystemSpec(L=3, n_a=1, generators=[np.eye(4)])

def test_hamiltonian_commutes_with_commutant():
    spec = model.SystemSpec.temperley_lieb(4, n_a=1, seed=3)
    h = model.build_hamiltonian(spec, np.random.default_rng(3))
    assert np.allclose(h, h.conj().T)
    basis = schurqnn.algebra.commutant_basis(spec.generators)
    for c in basis.elements:
        lifted = np.kron(c, np.eye(2))
        assert np.linalg.norm(h @ lifted - lifted @ h) < 1e-8

def test_hamiltonian_explicit_coefficients(rng):
    spec = model.SystemSpec.temperley_lieb(2, n_a=1)
    h = model.build_hamiltonian(spec, rng, system_coefficients=[2.0], ancilla_coefficients=[0, 0, 1])
    expected = np.kron(2 * model.tl_generators(2)[0], np.diag([1, -1]))
    assert np.allclose(h, expected)
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        model.build_hamiltonian(spec, rng, system_coefficients=[1.0, 2.0])

@pytest.mark.parametrize('kind', ['rotating', 'system'])
def test_build_A_is_positive(kind):
    spec = model.SystemSpec.temperley_lieb(3, n_a=2)
    a = model.build_A(spec, kind)
    assert a.shape == (32, 32)
    w = np.linalg.eigvalsh(a)
    assert w[0] > -1e-12
    assert np.isclose(w[-1], 2)

def test_build_A_rotating_ancilla():
    spec = model.SystemSpec.temperley_lieb(2, n_a=1)
    a = model.build_A(spec)
    expected = np.kron(model.TL_PROJECTOR, np.array([[1, 1], [1, 1]]) / 2)
    assert np.allclose(a, expected)
    with pytest.raises(schurqnn.errors.UsageError):
        model.build_A(spec, 'other')

@pytest.mark.parametrize('count, n_a, labels', [
    (1, 1, ['0']),
    (2, 1, ['0', '1']),
    (3, 2, ['00', '01', '10']),
    (5, 3, ['000', '001', '010', '011', '100']),
])
def test_encode_labels(count, n_a, labels):
    assert model.encode_labels(count) == (n_a, labels)

def test_bell_datasets():
    four, eight = model.bell_datasets()
    assert (four.L, four.n_a, four.M, four.dim) == (4, 1, 2, 32)
    assert (eight.L, eight.n_a, eight.M, eight.dim) == (8, 1, 1, 512)
    assert [x.label for x in four.points] == ['0', '1']
    # |0⟩Φ+|1⟩ ⊗ |0⟩ has amplitude 1/√2 on |0001⟩|0⟩ and |0111⟩|0⟩
    state = four.points[0].state
    assert np.isclose(state[0b00010], 1 / np.sqrt(2))
    assert np.isclose(state[0b01110], 1 / np.sqrt(2))

def test_observable():
    four, _ = model.bell_datasets()
    x = four.points[1]
    diag = model.observable_diagonal(x)
    assert np.all(diag[1::2] == -1) and np.all(diag[0::2] == 0)
    assert np.allclose(model.build_observable(x), np.diag(diag))

def test_assign_sectors():
    four, _ = model.bell_datasets()
    decomp = schurqnn.algebra.krylov_decomposition(model.tl_generators(4), rng=np.random.default_rng(0))
    tagged = model.assign_sectors(four, decomp)
    assert [x.sector for x in tagged.points] == [0, 1]
    assert tagged.counts() == {0: 1, 1: 1}

def test_schur_dataset():
    decomp = schurqnn.algebra.krylov_decomposition(model.tl_generators(3), rng=np.random.default_rng(0))
    data = model.schur_dataset(decomp, 3)
    assert data.M == 2
    assert [x.sector for x in data.points] == [0, 1]
    states = data.states()
    assert np.allclose(states.conj().T @ states, np.eye(2))
    with pytest.raises(schurqnn.errors.UsageError):
        model.schur_dataset(decomp, 3, classes=[])

def test_dataset_validation():
    v = np.zeros(8, dtype=complex)
    v[0] = 2
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        model.Dataset(L=2, n_a=1, points=[model.DataPoint(state=v, label='0')])
    v[0] = 1
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        model.Dataset(L=2, n_a=1, points=[model.DataPoint(state=v, label='00')])
    # more points than the 4-dimensional system can hold
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        model.Dataset(L=2, n_a=1, points=[model.DataPoint(state=v, label='0')] * 5)
    assert model.Dataset(L=2, n_a=1, points=[model.DataPoint(state=v, label='0')] * 4).M == 4

def test_widen():
    four, _ = model.bell_datasets()
    wide = four.widen(2)
    assert wide.n_a == 2 and wide.dim == 64
    for old, new in zip(four.points, wide.points):
        assert new.label_index == old.label_index
        assert np.allclose(new.system_part(), old.system_part())
        assert np.isclose(np.linalg.norm(new.state), 1)
    with pytest.raises(schurqnn.errors.UsageError):
        wide.widen(1)

def test_dataset_json():
    four, _ = model.bell_datasets()
    v = four.to_json()
    assert v['points'][0]['label'] == '0'
    restored = model.Dataset.from_json(v)
    assert np.allclose(restored.states(), four.states())
    with pytest.raises(schurqnn.errors.ParseError):
        model.Dataset.from_json({'L': 4, 'n_a': 1, 'points': [{'label': '0'}]})
