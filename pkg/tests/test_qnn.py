import numpy as np
import pytest
import scipy.linalg

import schurqnn.algebra
import schurqnn.errors
import schurqnn.model
import schurqnn.qnn as qnn
from conftest import random_dataset

def make_instance(rng, L, n_a, p, M=2, T=6.0):
    system = schurqnn.model.SystemSpec.temperley_lieb(L, n_a=n_a)
    h = schurqnn.model.build_hamiltonian(system, rng)
    a = schurqnn.model.build_A(system)
    spec = qnn.sample_ansatz(p, T, h, a, rng)
    theta = rng.uniform(0, 2 * np.pi, p)
    return spec, theta, random_dataset(rng, L, n_a, M), h, a

def expm_unitary(spec, theta, h, a):
    u = scipy.linalg.expm(1j * h * spec.t_double_prime)
    for t, th in zip(spec.times, theta):
        u = u @ scipy.linalg.expm(-1j * h * t) @ scipy.linalg.expm(1j * a * th) @ scipy.linalg.expm(1j * h * t)
    return u @ scipy.linalg.expm(-1j * h * spec.t_prime)

@pytest.mark.parametrize('seed', range(3))
def test_unitary_matches_expm(seed):
    rng = np.random.default_rng(seed)
    spec, theta, data, h, a = make_instance(rng, 2, 1, 3)
    u = qnn.build_unitary(spec, theta)
    assert np.allclose(u, expm_unitary(spec, theta, h, a), atol=1e-10)
    assert np.allclose(u @ u.conj().T, np.eye(spec.dim), atol=1e-10)

@pytest.mark.parametrize('seed', range(3))
def test_losses_match_dense_evaluation(seed):
    rng = np.random.default_rng(seed)
    spec, theta, data, h, a = make_instance(rng, 3, 1, 4, M=3)
    u = expm_unitary(spec, theta, h, a)
    expected = [
        np.vdot(x.state, u @ schurqnn.model.build_observable(x) @ u.conj().T @ x.state).real
        for x in data.points
    ]
    assert np.allclose(qnn.point_losses(spec, theta, data), expected, atol=1e-10)
    assert np.isclose(qnn.loss(spec, theta, data), np.mean(expected), atol=1e-10)
    assert all(-1 - 1e-12 <= v <= 1e-12 for v in expected)

def central_difference(f, theta, step):
    out = []
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = step
        out.append((f(theta + e) - f(theta - e)) / (2 * step))
    return np.array(out)

@pytest.mark.parametrize('seed', range(50))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    L = 2 + seed % 3
    n_a = 1 + seed % 2
    p = 1 + seed % 10
    spec, theta, data, *_ = make_instance(rng, L, n_a, p)
    analytic = qnn.gradient(spec, theta, data)
    numeric = central_difference(lambda t: qnn.loss(spec, t, data), theta, 1e-5)
    assert np.max(np.abs(analytic - numeric)) < 1e-6

@pytest.mark.parametrize('seed', range(20))
def test_hessian_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    spec, theta, data, *_ = make_instance(rng, 2 + seed % 2, 1, 1 + seed % 5)
    hess = qnn.hessian(spec, theta, data)
    numeric = central_difference(lambda t: qnn.gradient(spec, t, data), theta, 1e-5)
    assert np.max(np.abs(hess - hess.T)) < 1e-9
    assert np.max(np.abs(hess - numeric)) < 1e-5

def test_loss_and_gradient_agree(rng):
    spec, theta, data, *_ = make_instance(rng, 3, 1, 5)
    value, grad = qnn.loss_and_gradient(spec, theta, data)
    assert value == qnn.loss(spec, theta, data)
    assert np.array_equal(grad, qnn.gradient(spec, theta, data))

def test_rotated_generators(rng):
    spec, theta, *_ = make_instance(rng, 2, 1, 4)
    gens, product = qnn.rotated_generators(spec, theta)
    assert gens.shape == (4, 8, 8)
    for c in gens:
        assert np.allclose(c, c.conj().T)
        assert np.allclose(np.linalg.eigvalsh(c), spec.generator_a.values)
    assert np.allclose(product @ product.conj().T, np.eye(8))

def test_sector_losses_add_up():
    rng = np.random.default_rng(5)
    four, _ = schurqnn.model.bell_datasets()
    decomp = schurqnn.algebra.krylov_decomposition(schurqnn.model.tl_generators(4), rng=rng)
    system = schurqnn.model.SystemSpec.temperley_lieb(4, n_a=1)
    spec = qnn.sample_ansatz(5, 20.0, schurqnn.model.build_hamiltonian(system, rng), schurqnn.model.build_A(system), rng)
    theta = rng.uniform(0, 2 * np.pi, 5)
    by_sector = qnn.sector_losses(spec, theta, four, decomp)
    assert set(by_sector) == {0, 1, 2}
    assert np.isclose(sum(by_sector.values()), qnn.loss(spec, theta, four), atol=1e-10)
    assert abs(by_sector[2]) < 1e-12

def test_zero_parameters(rng):
    spec, _, data, *_ = make_instance(rng, 2, 1, 0)
    value, grad = qnn.loss_and_gradient(spec, [], data)
    assert grad.shape == (0,)
    assert qnn.hessian(spec, [], data).shape == (0, 0)
    assert -1 <= value <= 0

def test_truncate(rng):
    spec, theta, data, *_ = make_instance(rng, 2, 1, 6)
    short = spec.truncate(2)
    assert short.p == 2
    assert np.array_equal(short.times, spec.times[:2])
    with pytest.raises(ValueError):
        spec.truncate(7)

def test_argument_checks(rng):
    spec, theta, data, *_ = make_instance(rng, 2, 1, 3)
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        qnn.loss(spec, theta[:2], data)
    with pytest.raises(schurqnn.errors.DimensionMismatch):
        qnn.loss(spec, theta, random_dataset(rng, 3, 1, 1))
    with pytest.raises(ValueError):
        qnn.sample_ansatz(-1, 1.0, np.eye(2), np.eye(2), rng)
    with pytest.raises(ValueError):
        qnn.sample_ansatz(1, 1.0, np.eye(2), -np.eye(2), rng)

def test_adjusted_loss():
    assert qnn.adjusted_loss(-1.0) == 0.0
    assert qnn.adjusted_loss(-0.25) == 0.75

def test_ansatz_json(rng):
    spec, *_ = make_instance(rng, 2, 1, 3)
    v = spec.to_json()
    assert v['p'] == 3 and len(v['times']) == 3
    assert set(v) == {'p', 'T', 'times', 't_prime', 't_double_prime', 'seed'}
