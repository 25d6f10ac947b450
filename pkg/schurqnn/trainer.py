"""Gradient descent on the randomized ansatz, and seeded sweeps over p."""

from __future__ import annotations

import collections
import csv
import dataclasses
import logging
import math
import time
import typing

import numpy as np
import numpy.typing as npt

import schurqnn._json
import schurqnn._pool
import schurqnn.errors
import schurqnn.model
import schurqnn.qnn
from schurqnn._json import Json

__all__ = [
    'StopReason', 'TrainConfig', 'TrainingRun', 'train', 'trial_seed',
    'default_horizon', 'Trial', 'run_trial', 'sweep', 'Histogram',
    'minima_histogram', 'summarize', 'write_curves', 'write_finals',
    'write_histograms', 'SUCCESS_THRESHOLD',
]

logger = logging.getLogger(__name__)

#: Final adjusted loss below which a run counts as a success.
SUCCESS_THRESHOLD = 0.05

class StopReason(schurqnn._json.Enum):
    TARGET = 'target'
    PLATEAU = 'plateau'
    MAX_EPOCHS = 'max_epochs'
    ERROR = 'error'

@dataclasses.dataclass
class TrainConfig(schurqnn._json.Struct):
    #: Gradient descent step size.
    learning_rate: float = 0.1
    #: Largest number of parameter updates.
    max_epochs: int = 200
    #: Epochs over which the plateau rule measures decay.
    plateau_window: int = 5
    #: Minimum relative decay over the window before stopping.
    plateau_threshold: float = 0.05
    #: Adjusted loss that counts as solved.
    target_loss: float = 0.01
    #: Seed for the initial parameters when none are given.
    seed: int = 0

    def validate(self) -> None:
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise schurqnn.errors.UsageError(f'learning rate must be non-negative, got {self.learning_rate}')
        if self.max_epochs < 1:
            raise schurqnn.errors.UsageError(f'max_epochs must be at least 1, got {self.max_epochs}')
        if self.plateau_window < 1:
            raise schurqnn.errors.UsageError(f'plateau_window must be at least 1, got {self.plateau_window}')

@dataclasses.dataclass
class TrainingRun:
    #: Number of parameters.
    p: int
    #: Seed that produced this run.
    seed: int
    #: Adjusted loss before each update, starting at epoch 0.
    losses: list[float]
    #: Why training ended.
    stop_reason: StopReason
    #: Step size used.
    learning_rate: float
    #: Epoch budget used.
    max_epochs: int
    #: Seconds spent, not part of any reproducible output.
    wall_time: float = 0.0
    #: Position in the sweep.
    run_id: int = 0
    #: Error message when ``stop_reason`` is ``ERROR``.
    error: str | None = None
    #: Parameters at the last recorded loss.
    theta: npt.NDArray[np.float64] | None = dataclasses.field(default=None, repr=False, compare=False)

    @property
    def final(self) -> float:
        return self.losses[-1] if self.losses and self.stop_reason != StopReason.ERROR else math.nan

    def to_json(self) -> Json:
        return {
            'run_id': self.run_id,
            'p': self.p,
            'seed': self.seed,
            'losses': self.losses,
            'stop_reason': self.stop_reason.to_json(),
            'learning_rate': self.learning_rate,
            'max_epochs': self.max_epochs,
            'error': self.error,
        }

def _plateaued(losses: list[float], config: TrainConfig) -> bool:
    k = len(losses) - 1
    if k < config.plateau_window:
        return False
    before = losses[k - config.plateau_window]
    return (before - losses[k]) / max(before, 1e-12) < config.plateau_threshold

def train(
        spec: schurqnn.qnn.AnsatzSpec,
        theta0: npt.ArrayLike | None,
        dataset: schurqnn.model.Dataset,
        config: TrainConfig,
) -> TrainingRun:
    """Plain gradient descent with target, plateau and epoch stopping."""
    config.validate()
    if theta0 is None:
        theta = np.random.default_rng(config.seed).uniform(0, 2 * np.pi, spec.p)
    else:
        theta = np.array(theta0, dtype=float)
        if theta.shape != (spec.p,):
            raise schurqnn.errors.DimensionMismatch(f'θ₀ has shape {theta.shape}, expected ({spec.p},)')

    start = time.perf_counter()
    losses: list[float] = []
    for epoch in range(config.max_epochs + 1):
        value, grad = schurqnn.qnn.loss_and_gradient(spec, theta, dataset)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            raise schurqnn.errors.NonFiniteLoss(f'loss {value} at epoch {epoch} (p = {spec.p}, seed {config.seed})')
        losses.append(schurqnn.qnn.adjusted_loss(value))
        logger.debug('epoch %d: adjusted loss %.6f', epoch, losses[-1])

        if losses[-1] < config.target_loss:
            reason = StopReason.TARGET
            break
        if _plateaued(losses, config):
            reason = StopReason.PLATEAU
            break
        if epoch == config.max_epochs:
            reason = StopReason.MAX_EPOCHS
            break
        theta = theta - config.learning_rate * grad

    return TrainingRun(
        p = spec.p,
        seed = config.seed,
        losses = losses,
        stop_reason = reason,
        learning_rate = config.learning_rate,
        max_epochs = config.max_epochs,
        wall_time = time.perf_counter() - start,
        theta = theta,
    )

def trial_seed(base_seed: int, p: int, trial: int) -> int:
    """A stable per-trial seed derived from (base_seed, p, trial)."""
    return int(np.random.SeedSequence([base_seed, p, trial]).generate_state(1)[0])

def default_horizon(system: schurqnn.model.SystemSpec) -> float:
    return 10.0 * (system.L + system.n_a)

@dataclasses.dataclass(eq=False)
class Trial:
    """One independent work item of a sweep."""

    system: schurqnn.model.SystemSpec
    dataset: schurqnn.model.Dataset
    p: int
    seed: int
    T: float
    config: TrainConfig
    a_kind: typing.Literal['rotating', 'system'] = 'rotating'

def run_trial(trial: Trial) -> TrainingRun:
    """Sample H, the times and θ₀ from the trial seed, then train.

    Draw order: Hamiltonian coefficients, ansatz times, initial angles.
    """
    config = dataclasses.replace(trial.config, seed=trial.seed)
    try:
        rng = np.random.default_rng(trial.seed)
        hamiltonian = schurqnn.model.build_hamiltonian(trial.system, rng)
        a = schurqnn.model.build_A(trial.system, trial.a_kind)
        spec = schurqnn.qnn.sample_ansatz(trial.p, trial.T, hamiltonian, a, rng, seed=trial.seed)
        theta0 = rng.uniform(0, 2 * np.pi, trial.p)
        return train(spec, theta0, trial.dataset, config)
    except schurqnn.errors.Error as e:
        logger.warning('trial p = %d seed %d failed: %s', trial.p, trial.seed, e)
        return TrainingRun(
            p = trial.p,
            seed = trial.seed,
            losses = [],
            stop_reason = StopReason.ERROR,
            learning_rate = config.learning_rate,
            max_epochs = config.max_epochs,
            error = str(e),
        )

def sweep(
        p_values: typing.Sequence[int],
        trials_per_p: int,
        base_seed: int,
        dataset: schurqnn.model.Dataset,
        system: schurqnn.model.SystemSpec,
        config: TrainConfig | None = None,
        *,
        T: float | None = None,
        a_kind: typing.Literal['rotating', 'system'] = 'rotating',
        pool: schurqnn._pool.Pool | None = None,
        on_result: typing.Callable[[TrainingRun], None] | None = None,
) -> list[TrainingRun]:
    """Train ``trials_per_p`` fresh QNNs for every p, ordered by (p, trial)."""
    if trials_per_p < 1:
        raise schurqnn.errors.UsageError(f'need at least one trial per p, got {trials_per_p}')
    if not p_values:
        raise schurqnn.errors.UsageError('need at least one value of p')
    if config is None:
        config = TrainConfig()
    config.validate()
    if pool is None:
        pool = schurqnn._pool.Pool(1)
    horizon = default_horizon(system) if T is None else T

    trials = [
        Trial(system=system, dataset=dataset, p=p, seed=trial_seed(base_seed, p, k), T=horizon, config=config, a_kind=a_kind)
        for p in p_values
        for k in range(trials_per_p)
    ]
    logger.info('sweeping %d trials over p = %s', len(trials), list(p_values))

    runs = []
    for run_id, run in enumerate(pool.map(run_trial, trials)):
        run.run_id = run_id
        runs.append(run)
        if on_result is not None:
            on_result(run)
    return runs

@dataclasses.dataclass
class Histogram:
    #: Bin edges over [0, 1].
    edges: npt.NDArray[np.float64]
    #: Count per bin.
    counts: npt.NDArray[np.int64]

def minima_histogram(runs: typing.Sequence[TrainingRun], bin_width: float) -> Histogram:
    """Histogram of final adjusted losses over [0, 1]."""
    if not runs:
        raise schurqnn.errors.UsageError('no runs to histogram')
    if not 0 < bin_width <= 1:
        raise schurqnn.errors.UsageError(f'bin width must be in (0, 1], got {bin_width}')
    finals = np.array([r.final for r in runs])
    finished = finals[np.isfinite(finals)]
    if len(finished) < len(finals):
        logger.warning('%d failed runs left out of the histogram', len(finals) - len(finished))
    bins = math.ceil(1 / bin_width - 1e-9)
    edges = np.minimum(np.arange(bins + 1) * bin_width, 1.0)
    counts, _ = np.histogram(np.clip(finished, 0, 1), bins=edges)
    return Histogram(edges=edges, counts=counts)

def summarize(runs: typing.Sequence[TrainingRun]) -> dict[str, Json]:
    """Per-p mean final loss, success fraction and stop reasons."""
    by_p: dict[int, list[TrainingRun]] = collections.defaultdict(list)
    for run in runs:
        by_p[run.p].append(run)

    out: dict[str, Json] = {}
    for p in sorted(by_p):
        finals = np.array([r.final for r in by_p[p]])
        finished = finals[np.isfinite(finals)]
        reasons = collections.Counter(r.stop_reason.value for r in by_p[p])
        out[str(p)] = {
            'runs': len(by_p[p]),
            'errors': reasons.get(StopReason.ERROR.value, 0),
            'mean_final_adjusted_loss': float(np.mean(finished)) if len(finished) else None,
            f'fraction_below_{SUCCESS_THRESHOLD}': float(np.mean(finished < SUCCESS_THRESHOLD)) if len(finished) else None,
            'stop_reasons': dict(sorted(reasons.items())),
        }
    return out

def _writer(f: typing.TextIO) -> typing.Any:
    return csv.writer(f, lineterminator='\n')

def write_curves(runs: typing.Iterable[TrainingRun], f: typing.TextIO) -> None:
    w = _writer(f)
    w.writerow(['run_id', 'p', 'seed', 'epoch', 'adjusted_loss'])
    for run in runs:
        for epoch, value in enumerate(run.losses):
            w.writerow([run.run_id, run.p, run.seed, epoch, repr(value)])

def write_finals(runs: typing.Iterable[TrainingRun], f: typing.TextIO) -> None:
    w = _writer(f)
    w.writerow(['run_id', 'p', 'seed', 'final_adjusted_loss', 'stop_reason'])
    for run in runs:
        w.writerow([run.run_id, run.p, run.seed, repr(run.final), run.stop_reason.value])

def write_histograms(histograms: typing.Mapping[int, Histogram], f: typing.TextIO) -> None:
    w = _writer(f)
    w.writerow(['p', 'bin_low', 'bin_high', 'count'])
    for p, hist in histograms.items():
        for low, high, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([p, repr(float(low)), repr(float(high)), int(count)])
