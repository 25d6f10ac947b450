import numpy as np
import pytest

import schurqnn.model

def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run long statistical tests')

def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch, tmp_path):
    # keep a user's config file and SCHURQNN_* variables out of every test
    monkeypatch.setenv('XDG_CONFIG_HOME', str(tmp_path / 'xdg'))
    for name in ('SCHURQNN_SEED', 'SCHURQNN_THREADS', 'SCHURQNN_OUT'):
        monkeypatch.delenv(name, raising=False)

def random_dataset(rng, L, n_a, M):
    """M random normalized states on L + n_a qubits with random labels."""
    dim = 2 ** (L + n_a)
    points = []
    for _ in range(M):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        label = format(int(rng.integers(2 ** n_a)), f'0{n_a}b')
        points.append(schurqnn.model.DataPoint(state=v / np.linalg.norm(v), label=label))
    return schurqnn.model.Dataset(L=L, n_a=n_a, points=points)
