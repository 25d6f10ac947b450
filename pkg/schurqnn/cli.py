"""Experiment commands. Each takes a validated config and returns an
exit code: 0 when everything passed, 1 when a verification failed.
"""

from __future__ import annotations

import contextlib
import dataclasses
import logging
import pathlib
import typing

import numpy as np
import rich.progress

import schurqnn._pool
import schurqnn.algebra
import schurqnn.config
import schurqnn.errors
import schurqnn.linalg
import schurqnn.model
import schurqnn.qnn
import schurqnn.theory
import schurqnn.trainer
from schurqnn.config import ExperimentConfig

__all__ = [
    'Experiment', 'cmd_decompose', 'cmd_train', 'cmd_minima', 'cmd_verify',
    'cmd_dataset_export', 'VERIFIERS',
]

logger = logging.getLogger(__name__)

#: Set to False to turn off progress bars.
_progress_interactive: bool = True

# independent random streams per command, mixed with the base seed
_STREAM_DECOMPOSE = 0
_STREAM_SYSTEM = 1
_STREAM_VARIANCE = 2
_STREAM_MOMENTS = 3
_STREAM_GENERALIZATION = 4
_STREAM_HESSIAN = 5

#: Irrep dims, ancilla width, labels per sector and A ranks of the
#: synthetic Gaussian-model configurations checked by ``verify variance``.
_SYNTHETIC: list[tuple[list[int], int, list[list[int]], list[int]]] = [
    ([2], 1, [[0]], [1]),
    ([3], 1, [[0, 1]], [2]),
    ([2], 2, [[1]], [3]),
    ([4, 2], 1, [[0], [1]], [2, 1]),
    ([3, 1], 2, [[0, 2], [3]], [4, 2]),
]

@contextlib.contextmanager
def _progress(description: str, total: float) -> typing.Iterator[typing.Callable[[], None]]:
    if not _progress_interactive:
        yield lambda: None
        return

    prog = rich.progress.Progress(
        rich.progress.SpinnerColumn(),
        rich.progress.TextColumn('[progress.description]{task.description}'),
        rich.progress.MofNCompleteColumn(),
        rich.progress.TimeRemainingColumn(),
    )
    with prog:
        task = prog.add_task(description, total=total)
        yield lambda: prog.advance(task)

def _rng(config: ExperimentConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, stream])

@dataclasses.dataclass(eq=False)
class Experiment:
    """The system, decomposition and dataset a config describes."""

    config: ExperimentConfig
    system: schurqnn.model.SystemSpec
    dataset: schurqnn.model.Dataset
    decomp: schurqnn.algebra.KrylovDecomposition | None

    @property
    def out(self) -> schurqnn.config.OutputDir:
        return schurqnn.config.OutputDir(pathlib.Path(self.config.output_dir))

    @property
    def horizon(self) -> float:
        if self.config.ansatz.T is not None:
            return self.config.ansatz.T
        return schurqnn.trainer.default_horizon(self.system)

    @property
    def a_kind(self) -> typing.Literal['rotating', 'system']:
        return 'system' if self.config.system.a_kind == 'system' else 'rotating'

    def require_decomposition(self) -> schurqnn.algebra.KrylovDecomposition:
        if self.decomp is None:
            self.decomp = decompose(self.config)
            self.dataset = schurqnn.model.assign_sectors(self.dataset, self.decomp)
        return self.decomp

    @classmethod
    def from_config(cls, config: ExperimentConfig, *, decomposed: bool = False) -> typing.Self:
        s = config.system
        decomp = None
        if decomposed or s.dataset == 'schur':
            decomp = decompose(config)

        if s.dataset == 'schur':
            assert decomp is not None
            dataset = schurqnn.model.schur_dataset(decomp, s.L)
        else:
            if s.L not in (4, 8):
                raise schurqnn.errors.UsageError(f'the Bell-pair dataset exists for L = 4 and 8, got {s.L}')
            four, eight = schurqnn.model.bell_datasets()
            dataset = four if s.L == 4 else eight
            if decomp is not None:
                dataset = schurqnn.model.assign_sectors(dataset, decomp)
        if s.n_a is not None:
            dataset = dataset.widen(s.n_a)

        system = schurqnn.model.SystemSpec.temperley_lieb(s.L, n_a=dataset.n_a, seed=config.seed)
        return cls(config=config, system=system, dataset=dataset, decomp=decomp)

def decompose(config: ExperimentConfig) -> schurqnn.algebra.KrylovDecomposition:
    generators = schurqnn.model.tl_generators(config.system.L)
    decomp = schurqnn.algebra.krylov_decomposition(generators, rng=_rng(config, _STREAM_DECOMPOSE))
    if config.system.sectors is not None:
        try:
            decomp = decomp.select(config.system.sectors)
        except KeyError as e:
            raise schurqnn.errors.UsageError(f'no such sector: {e}')
    logger.info(
        'L = %d: sectors (N, N\') = %s',
        config.system.L, [(s.irrep_dim, s.multiplicity) for s in decomp.sectors],
    )
    return decomp

def cmd_decompose(config: ExperimentConfig) -> int:
    """Decompose the system, and check the generators, a sampled H and
    A against the block structure.
    """
    decomp = decompose(config)
    system = schurqnn.model.SystemSpec.temperley_lieb(config.system.L, n_a=config.system.n_a or 1, seed=config.seed)
    lifted = decomp.with_ancilla(system.n_a)
    a_kind: typing.Literal['rotating', 'system'] = 'system' if config.system.a_kind == 'system' else 'rotating'

    residuals = {
        f'generator{i}': schurqnn.algebra.verify_block_structure(h, decomp)
        for i, h in enumerate(system.generators)
    }
    hamiltonian = schurqnn.model.build_hamiltonian(system, _rng(config, _STREAM_SYSTEM))
    residuals['hamiltonian'] = schurqnn.algebra.verify_block_structure(hamiltonian, lifted)
    residuals['A'] = schurqnn.algebra.verify_block_structure(schurqnn.model.build_A(system, a_kind), lifted)
    worst = max(residuals.values())
    passed = worst < schurqnn.algebra.BLOCK_TOL

    out = schurqnn.config.OutputDir(pathlib.Path(config.output_dir))
    out.write_json('decomposition.json', decomp)
    out.write_json('decompose_report.json', {
        'L': config.system.L,
        'sectors': [[s.irrep_dim, s.multiplicity] for s in decomp.sectors],
        'dimension_sum': sum(s.size for s in decomp.sectors),
        'residuals': residuals,
        'max_residual': worst,
        'pass': passed,
    })
    logger.info('largest block residual %.3g', worst)
    return 0 if passed else 1

def _sweep(exp: Experiment, pool: schurqnn._pool.Pool) -> list[schurqnn.trainer.TrainingRun]:
    config = exp.config
    total = len(config.ansatz.p_values) * config.train.trials
    with _progress('training', total) as advance:
        return schurqnn.trainer.sweep(
            config.ansatz.p_values,
            config.train.trials,
            config.seed,
            exp.dataset,
            exp.system,
            config.train.train_config(config.seed),
            T = exp.horizon,
            a_kind = exp.a_kind,
            pool = pool,
            on_result = lambda run: advance(),
        )

def cmd_train(config: ExperimentConfig, pool: schurqnn._pool.Pool | None = None) -> int:
    """Loss curves for every p: curves.csv, finals.csv, summary.json."""
    exp = Experiment.from_config(config)
    runs = _sweep(exp, pool or schurqnn._pool.Pool(config.threads))

    with exp.out.replace_file('curves.csv') as f:
        schurqnn.trainer.write_curves(runs, f)
    with exp.out.replace_file('finals.csv') as f:
        schurqnn.trainer.write_finals(runs, f)
    exp.out.write_json('summary.json', schurqnn.trainer.summarize(runs))
    return 0

def cmd_minima(config: ExperimentConfig, pool: schurqnn._pool.Pool | None = None) -> int:
    """Distribution of final losses per p: finals.csv, histogram.csv, summary.json."""
    exp = Experiment.from_config(config)
    runs = _sweep(exp, pool or schurqnn._pool.Pool(config.threads))

    histograms = {
        p: schurqnn.trainer.minima_histogram([r for r in runs if r.p == p], config.train.bin_width)
        for p in config.ansatz.p_values
    }
    with exp.out.replace_file('finals.csv') as f:
        schurqnn.trainer.write_finals(runs, f)
    with exp.out.replace_file('histogram.csv') as f:
        schurqnn.trainer.write_histograms(histograms, f)
    exp.out.write_json('summary.json', schurqnn.trainer.summarize(runs))
    return 0

def _random_projector_block(dim: int, rank: int, rng: np.random.Generator) -> schurqnn.linalg.Matrix:
    cols = schurqnn.linalg.haar_unitary(dim, rng)[:, :rank]
    return cols @ cols.conj().T

def verify_variance(exp: Experiment) -> tuple[bool, dict[str, typing.Any]]:
    v = exp.config.verify
    rng = _rng(exp.config, _STREAM_VARIANCE)
    reports: list[schurqnn.theory.VarianceReport] = []

    decomp = exp.require_decomposition()
    model = schurqnn.theory.GaussianModelSpec.from_system(
        decomp, schurqnn.model.build_A(exp.system, exp.a_kind), exp.dataset,
    )
    configurations = [('system', model)]
    for i, (dims, n_a, labels, ranks) in enumerate(_SYNTHETIC):
        blocks = [_random_projector_block(n * 2 ** n_a, r, rng) for n, r in zip(dims, ranks)]
        configurations.append((f'synthetic{i}', schurqnn.theory.GaussianModelSpec.synthetic(dims, n_a, labels, blocks)))

    with _progress('sampling', len(configurations) + 1) as advance:
        for name, m in configurations:
            reports.extend(schurqnn.theory.variance_reports(
                m, v.samples, rng, components=v.components, sigma=v.sigma, name=name,
            ))
            advance()
        reports.extend(schurqnn.theory.variance_reports(
            model, v.samples, rng, components=v.components, sigma=v.sigma, form='haar', name='system-haar',
        ))
        advance()

    for r in reports:
        if not r.passed:
            logger.warning('%s: %.4g vs %.4g ± %.2g', r.name, r.mc_estimate, r.formula_value, r.stderr)
    passed = all(r.passed for r in reports)
    return passed, {'name': 'variance', 'pass': passed, 'reports': reports}

def verify_moments(exp: Experiment) -> tuple[bool, dict[str, typing.Any]]:
    v = exp.config.verify
    rng = _rng(exp.config, _STREAM_MOMENTS)
    with _progress('moments', 1):
        trend = schurqnn.theory.moment_trend(v.moment_dims, v.moment_instances, max(v.moment_horizons), v.moment_samples, rng, sigma=v.sigma)
    horizons = schurqnn.theory.moment_horizons(v.moment_dims[-1], v.moment_horizons, rng)

    decreasing = all(a.mean_diff > b.mean_diff for a, b in zip(trend, trend[1:]))
    # each instance is a 4σ test, so allow the occasional miss
    consistent = all(t.haar_consistent >= 0.95 for t in trend)
    passed = decreasing and consistent
    return passed, {
        'name': 'moments',
        'trend': trend,
        'horizons': [{'T': T, 'time_avg': complex(avg)} for T, avg in horizons],
        'closed_form': -0.25,
        'decreasing': decreasing,
        'haar_consistent': consistent,
        'pass': passed,
    }

def verify_generalization(exp: Experiment) -> tuple[bool, dict[str, typing.Any]]:
    v = exp.config.verify
    rng = _rng(exp.config, _STREAM_GENERALIZATION)
    decomp = exp.require_decomposition()
    hamiltonian = schurqnn.model.build_hamiltonian(exp.system, rng)
    a = schurqnn.model.build_A(exp.system, exp.a_kind)
    p = max(exp.config.ansatz.p_values)
    spec = schurqnn.qnn.sample_ansatz(p, exp.horizon, hamiltonian, a, rng)
    thetas = [rng.uniform(0, 2 * np.pi, p) for _ in range(v.thetas)]
    report = schurqnn.theory.generalization_check(spec, thetas, exp.dataset, decomp)
    return report.passed, typing.cast(dict[str, typing.Any], report.to_json())

def verify_hessian_rank(exp: Experiment) -> tuple[bool, dict[str, typing.Any]]:
    v = exp.config.verify
    decomp = exp.require_decomposition()
    with _progress('hessian rank', 1):
        curve = schurqnn.theory.hessian_rank_curve(
            exp.system, exp.dataset, v.hessian_p_values, v.rank_tol, _rng(exp.config, _STREAM_HESSIAN),
            T = exp.config.ansatz.T,
            a_op = schurqnn.model.build_A(exp.system, exp.a_kind),
            decomp = decomp,
        )
    saturated = schurqnn.theory.rank_saturated(curve)
    return saturated, {'name': 'hessian-rank', 'curve': curve, 'saturated': saturated, 'pass': saturated}

#: ``verify`` subcommands and the files they write.
VERIFIERS: dict[str, tuple[typing.Callable[[Experiment], tuple[bool, dict[str, typing.Any]]], str]] = {
    'variance': (verify_variance, 'variance.json'),
    'moments': (verify_moments, 'moments.json'),
    'generalization': (verify_generalization, 'generalization.json'),
    'hessian-rank': (verify_hessian_rank, 'hessian_rank.json'),
}

def cmd_verify(config: ExperimentConfig, which: str) -> int:
    """Run one numerical check and write its JSON report."""
    try:
        fn, filename = VERIFIERS[which]
    except KeyError:
        raise schurqnn.errors.UsageError(f'unknown check {which!r}, expected one of {sorted(VERIFIERS)}')
    exp = Experiment.from_config(config)
    passed, report = fn(exp)
    exp.out.write_json(filename, report)
    logger.log(logging.INFO if passed else logging.WARNING, '%s: %s', which, 'pass' if passed else 'FAIL')
    return 0 if passed else 1

def cmd_dataset_export(config: ExperimentConfig) -> int:
    """Write the sector-tagged dataset to dataset.json."""
    exp = Experiment.from_config(config, decomposed=True)
    exp.out.write_json('dataset.json', exp.dataset)
    return 0
