import numpy as np
import pytest
import scipy.linalg

import schurqnn.errors
import schurqnn.linalg as linalg

def random_hermitian(rng, dim):
    g = linalg.ginibre(dim, dim, rng)
    return (g + g.conj().T) / 2

def test_eig_reconstructs():
    m = random_hermitian(np.random.default_rng(7), 8)
    eig = linalg.hermitian_eig(m)
    assert np.max(np.abs(eig.matrix - m)) < 1e-10
    assert np.all(np.diff(eig.values) >= 0)
    assert np.allclose(eig.vectors.conj().T @ eig.vectors, np.eye(8))

def test_non_hermitian_rejected(rng):
    m = linalg.ginibre(4, 4, rng)
    with pytest.raises(schurqnn.errors.NotHermitian):
        linalg.hermitian_eig(m)

def test_non_square_rejected():
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        linalg.check_hermitian(np.zeros((2, 3)))

@pytest.mark.parametrize('t', [0.0, 0.3, -2.5, 17.0])
@pytest.mark.parametrize('sign', [1, -1])
def test_evolve_matches_expm(rng, t, sign):
    m = random_hermitian(rng, 6)
    expected = scipy.linalg.expm(sign * 1j * t * m)
    assert np.allclose(linalg.evolve(m, t, sign), expected, atol=1e-10)

def test_phases_sign_checked(rng):
    eig = linalg.hermitian_eig(random_hermitian(rng, 3))
    with pytest.raises(ValueError):
        eig.phases(1.0, sign=2)

def test_ginibre_shape_and_variance(rng):
    assert linalg.ginibre(3, 5, rng).shape == (3, 5)
    z = linalg.ginibre(200, 250, rng)
    assert abs(np.mean(np.abs(z) ** 2) - 1) < 0.02
    assert abs(np.var(z.real) - 0.5) < 0.02
    with pytest.raises(ValueError):
        linalg.ginibre(0, 2, rng)

def test_haar_unitary_batch(rng):
    u = linalg.haar_unitary(5, rng, (7,))
    assert u.shape == (7, 5, 5)
    eye = np.broadcast_to(np.eye(5), u.shape)
    assert np.allclose(u @ u.conj().transpose(0, 2, 1), eye)

def test_haar_unitary_first_moment(rng):
    # E[U X U†] = Tr(X)/d · I
    x = np.diag([1.0, 0.0, 0.0]).astype(complex)
    u = linalg.haar_unitary(3, rng, (20000,))
    avg = np.mean(u @ x @ u.conj().transpose(0, 2, 1), axis=0)
    assert np.allclose(avg, np.eye(3) / 3, atol=0.02)

def test_numerical_rank(rng):
    a = linalg.ginibre(6, 2, rng) @ linalg.ginibre(2, 6, rng)
    assert linalg.numerical_rank(a) == 2
    assert linalg.numerical_rank(np.zeros((3, 3))) == 0
    assert linalg.numerical_rank(np.zeros((0, 3))) == 0

def test_nullspace(rng):
    a = linalg.ginibre(2, 5, rng)
    n = linalg.nullspace(a)
    assert n.shape == (5, 3)
    assert np.allclose(a @ n, 0)
    assert np.allclose(linalg.nullspace(np.zeros((2, 4))), np.eye(4))

def test_embed():
    x = linalg.PAULI_X
    assert np.allclose(linalg.embed(x, 0, 2), np.kron(x, np.eye(2)))
    assert np.allclose(linalg.embed(x, 2, 3), np.kron(np.eye(4), x))
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        linalg.embed(np.eye(4), 2, 3)

def test_kron_and_commutator():
    assert np.allclose(linalg.kron(), np.ones((1, 1)))
    z = linalg.kron(linalg.PAULI_Z, linalg.PAULI_I)
    assert z.shape == (4, 4)
    assert np.allclose(linalg.commutator(linalg.PAULI_X, linalg.PAULI_Y), 2j * linalg.PAULI_Z)
