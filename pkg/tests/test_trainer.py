import io
import math

import numpy as np
import pytest

import schurqnn._pool
import schurqnn.errors
import schurqnn.model
import schurqnn.qnn
import schurqnn.trainer as trainer

@pytest.fixture
def four_qubits():
    four, _ = schurqnn.model.bell_datasets()
    return schurqnn.model.SystemSpec.temperley_lieb(4, n_a=1), four

def make_spec(system, p, rng):
    h = schurqnn.model.build_hamiltonian(system, rng)
    return schurqnn.qnn.sample_ansatz(p, 50.0, h, schurqnn.model.build_A(system), rng)

def test_one_epoch_records_two_losses(four_qubits, rng):
    system, data = four_qubits
    config = trainer.TrainConfig(max_epochs=1, target_loss=0.0)
    run = trainer.train(make_spec(system, 3, rng), None, data, config)
    assert len(run.losses) == 2
    assert run.stop_reason == trainer.StopReason.MAX_EPOCHS
    assert all(0 <= v <= 1 for v in run.losses)

def test_small_steps_descend(four_qubits, rng):
    system, data = four_qubits
    # below 1/L for the gradient's Lipschitz constant, so every step descends
    config = trainer.TrainConfig(learning_rate=0.01, max_epochs=30, plateau_threshold=0.0, target_loss=0.0)
    run = trainer.train(make_spec(system, 5, rng), rng.uniform(0, 2 * np.pi, 5), data, config)
    assert np.all(np.diff(run.losses) <= 1e-12)

def test_target_stop(four_qubits, rng):
    system, data = four_qubits
    config = trainer.TrainConfig(target_loss=2.0)
    run = trainer.train(make_spec(system, 2, rng), None, data, config)
    assert run.stop_reason == trainer.StopReason.TARGET
    assert len(run.losses) == 1

def test_plateau_stop(four_qubits, rng):
    system, data = four_qubits
    # zero learning rate never moves, so the window sees no decay
    config = trainer.TrainConfig(learning_rate=0.0, target_loss=0.0)
    run = trainer.train(make_spec(system, 2, rng), None, data, config)
    assert run.stop_reason == trainer.StopReason.PLATEAU
    assert len(run.losses) == config.plateau_window + 1

def test_initial_parameters_checked(four_qubits, rng):
    system, data = four_qubits
    spec = make_spec(system, 3, rng)
    with pytest.raises(schurqnn.errors.DimensionMismatch, match='θ₀'):
        trainer.train(spec, np.zeros(4), data, trainer.TrainConfig())
    run = trainer.train(spec, np.zeros(3), data, trainer.TrainConfig(max_epochs=2, target_loss=0.0, plateau_threshold=0.0))
    assert run.theta.shape == (3,)
    assert schurqnn.qnn.adjusted_loss(schurqnn.qnn.loss(spec, run.theta, data)) == pytest.approx(run.final)

def test_config_validation():
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.TrainConfig(learning_rate=-1).validate()
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.TrainConfig(max_epochs=0).validate()
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.TrainConfig.from_json({'momentum': 0.9})

def test_trial_seed():
    assert trainer.trial_seed(0, 5, 1) == trainer.trial_seed(0, 5, 1)
    seeds = {trainer.trial_seed(0, p, k) for p in (1, 5) for k in range(10)}
    assert len(seeds) == 20

def test_default_horizon():
    assert trainer.default_horizon(schurqnn.model.SystemSpec.temperley_lieb(4, n_a=1)) == 50.0

def sweep_csv(four_qubits, workers):
    system, data = four_qubits
    runs = trainer.sweep(
        [1, 3], 2, 7, data, system, trainer.TrainConfig(max_epochs=3),
        pool = schurqnn._pool.Pool(workers),
    )
    curves, finals = io.StringIO(), io.StringIO()
    trainer.write_curves(runs, curves)
    trainer.write_finals(runs, finals)
    return runs, curves.getvalue(), finals.getvalue()

def test_sweep_is_deterministic(four_qubits):
    runs, curves, finals = sweep_csv(four_qubits, 1)
    _, curves_again, finals_again = sweep_csv(four_qubits, 1)
    _, curves_parallel, finals_parallel = sweep_csv(four_qubits, 2)
    assert curves == curves_again == curves_parallel
    assert finals == finals_again == finals_parallel
    assert [(r.run_id, r.p) for r in runs] == [(0, 1), (1, 1), (2, 3), (3, 3)]
    assert curves.startswith('run_id,p,seed,epoch,adjusted_loss\n')
    assert '\r' not in curves

def test_sweep_arguments(four_qubits):
    system, data = four_qubits
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.sweep([], 1, 0, data, system)
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.sweep([1], 0, 0, data, system)

def test_failed_trial_is_recorded(four_qubits):
    system, _ = four_qubits
    _, eight = schurqnn.model.bell_datasets()
    # a dataset of the wrong size fails inside the trial, not the sweep
    runs = trainer.sweep([1], 1, 0, eight, system, trainer.TrainConfig(max_epochs=1))
    assert runs[0].stop_reason == trainer.StopReason.ERROR
    assert runs[0].error
    assert math.isnan(runs[0].final)

def fake_run(p, final, reason=trainer.StopReason.MAX_EPOCHS):
    losses = [] if reason == trainer.StopReason.ERROR else [1.0, final]
    return trainer.TrainingRun(p=p, seed=0, losses=losses, stop_reason=reason, learning_rate=0.1, max_epochs=1)

def test_minima_histogram():
    runs = [fake_run(1, v) for v in (0.01, 0.02, 0.3, 0.99, 1.0)]
    runs.append(fake_run(1, 0.0, trainer.StopReason.ERROR))
    hist = trainer.minima_histogram(runs, 0.25)
    assert np.allclose(hist.edges, [0, 0.25, 0.5, 0.75, 1.0])
    assert hist.counts.tolist() == [2, 1, 0, 2]
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.minima_histogram(runs, 0)
    with pytest.raises(schurqnn.errors.UsageError):
        trainer.minima_histogram([], 0.1)

def test_write_histograms():
    hist = trainer.minima_histogram([fake_run(5, 0.1)], 0.5)
    f = io.StringIO()
    trainer.write_histograms({5: hist}, f)
    assert f.getvalue() == 'p,bin_low,bin_high,count\n5,0.0,0.5,1\n5,0.5,1.0,0\n'

def test_summarize():
    runs = [fake_run(1, 0.5), fake_run(1, 0.01, trainer.StopReason.TARGET), fake_run(5, 0.0, trainer.StopReason.ERROR)]
    summary = trainer.summarize(runs)
    assert summary['1']['runs'] == 2
    assert summary['1']['mean_final_adjusted_loss'] == pytest.approx(0.255)
    assert summary['1']['fraction_below_0.05'] == 0.5
    assert summary['1']['stop_reasons'] == {'max_epochs': 1, 'target': 1}
    assert summary['5']['errors'] == 1
    assert summary['5']['mean_final_adjusted_loss'] is None

def test_run_json():
    v = fake_run(1, 0.5).to_json()
    assert v['stop_reason'] == 'max_epochs'
    assert v['losses'] == [1.0, 0.5]

@pytest.mark.slow
def test_success_fraction_grows_with_p(four_qubits):
    system, data = four_qubits
    p_values = [1, 5, 10, 15, 20, 40]
    runs = trainer.sweep(p_values, 100, 0, data, system, pool=schurqnn._pool.Pool())
    summary = trainer.summarize(runs)
    fractions = [summary[str(p)]['fraction_below_0.05'] for p in p_values]
    drops = [a - b for a, b in zip(fractions, fractions[1:]) if b < a]
    assert len(drops) <= 1 and all(d <= 0.05 for d in drops)
    assert fractions[-1] - fractions[0] >= 0.3
