from __future__ import annotations

import contextlib
import dataclasses
import math
import os
import pathlib
import typing

import platformdirs

import schurqnn._json
import schurqnn.errors
import schurqnn.trainer

__all__ = [
    'SystemConfig', 'AnsatzConfig', 'TrainSection', 'VerifyConfig',
    'ExperimentConfig', 'PRESETS', 'OutputDir',
]

@dataclasses.dataclass
class SystemConfig(schurqnn._json.Struct):
    #: Generator family. Only ``temperley-lieb`` is built in.
    model: str = 'temperley-lieb'
    #: Number of system qubits.
    L: int = 4
    #: Ancilla width, or ``None`` for the smallest that fits the labels.
    n_a: int | None = None
    #: ``bell`` for the Bell-pair sets, ``schur`` for decomposition basis states.
    dataset: str = 'bell'
    #: Sector ids Λ' to keep, or ``None`` for all.
    sectors: list[int] | None = None
    #: ``rotating`` or ``system``, see :func:`schurqnn.model.build_A`.
    a_kind: str = 'rotating'

@dataclasses.dataclass
class AnsatzConfig(schurqnn._json.Struct):
    #: Parameter counts to sweep.
    p_values: list[int] = dataclasses.field(default_factory=lambda: [1, 5, 10, 15, 20, 40])
    #: Time horizon, or ``None`` for 10·(L + n_a).
    T: float | None = None

@dataclasses.dataclass
class TrainSection(schurqnn._json.Struct):
    learning_rate: float = 0.1
    max_epochs: int = 200
    plateau_window: int = 5
    plateau_threshold: float = 0.05
    target_loss: float = 0.01
    #: Independent runs per p.
    trials: int = 10
    #: Histogram bin width over [0, 1].
    bin_width: float = 0.05

    def train_config(self, seed: int) -> schurqnn.trainer.TrainConfig:
        return schurqnn.trainer.TrainConfig(
            learning_rate = self.learning_rate,
            max_epochs = self.max_epochs,
            plateau_window = self.plateau_window,
            plateau_threshold = self.plateau_threshold,
            target_loss = self.target_loss,
            seed = seed,
        )

@dataclasses.dataclass
class VerifyConfig(schurqnn._json.Struct):
    #: Monte-Carlo samples for the Gaussian model.
    samples: int = 100_000
    #: Standard errors allowed before a check fails.
    sigma: float = 4.0
    #: Gradient components drawn per sample.
    components: int = 2
    #: Random parameter vectors for the generalization check.
    thetas: int = 20
    #: Relative singular value cutoff for ranks.
    rank_tol: float = 1e-8
    hessian_p_values: list[int] = dataclasses.field(default_factory=lambda: [10, 20, 40, 60, 80])
    moment_dims: list[int] = dataclasses.field(default_factory=lambda: [8, 32])
    moment_instances: int = 40
    moment_samples: int = 10_000
    moment_horizons: list[float] = dataclasses.field(default_factory=lambda: [10.0, 40.0, 160.0])

#: Settings of the published experiments, applied over the defaults.
PRESETS: dict[str, dict[str, typing.Any]] = {
    'fig2-4q': {
        'system': {'L': 4, 'dataset': 'bell'},
        'ansatz': {'p_values': [1, 5, 10, 20, 40]},
        'train': {'trials': 10},
    },
    'fig2-8q': {
        'system': {'L': 8, 'dataset': 'bell'},
        'ansatz': {'p_values': [1, 5, 10, 20, 40]},
        'train': {'trials': 10},
    },
    'fig3-4q': {
        'system': {'L': 4, 'dataset': 'bell'},
        'ansatz': {'p_values': [1, 5, 10, 15, 20, 40]},
        'train': {'trials': 1000},
    },
}

def _merge(base: dict[str, typing.Any], over: typing.Mapping[str, typing.Any]) -> dict[str, typing.Any]:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out

@dataclasses.dataclass
class ExperimentConfig(schurqnn._json.Struct):
    """Everything an experiment needs, validated before it runs.

    Values come from the defaults, then a preset, then a JSON config
    file, then explicit overrides, and finally the environment
    (``SCHURQNN_SEED``, ``SCHURQNN_THREADS``, ``SCHURQNN_OUT``).
    """

    system: SystemConfig = dataclasses.field(default_factory=SystemConfig)
    ansatz: AnsatzConfig = dataclasses.field(default_factory=AnsatzConfig)
    train: TrainSection = dataclasses.field(default_factory=TrainSection)
    verify: VerifyConfig = dataclasses.field(default_factory=VerifyConfig)
    #: Base seed for every random draw.
    seed: int = 0
    #: Worker processes, or ``None`` for one per core.
    threads: int | None = None
    #: Directory receiving the output files.
    output_dir: str = '.'

    @classmethod
    def default(cls) -> typing.Self:
        """Use the default config file location and the environment."""
        return cls.with_values()

    @classmethod
    def with_values(
            cls,
            preset: str | None = None,
            config_path: str | pathlib.Path | None = None,
            overrides: typing.Mapping[str, typing.Any] | None = None,
            scale: float | None = None,
    ) -> typing.Self:
        """Layer a preset, a config file and explicit overrides, then
        apply the environment and validate.
        """
        raw: dict[str, typing.Any] = {}
        if preset is not None:
            try:
                raw = _merge(raw, PRESETS[preset])
            except KeyError:
                raise schurqnn.errors.UsageError(f'unknown preset {preset!r}, expected one of {sorted(PRESETS)}')

        path = cls._config_path(config_path)
        if path is not None:
            try:
                with open(path) as f:
                    loaded = schurqnn._json.load(f)
            except OSError as e:
                raise schurqnn.errors.UsageError(f'cannot read config: {e}', where=str(path))
            if not isinstance(loaded, dict):
                raise schurqnn.errors.ParseError('expected a JSON object', where=str(path))
            raw = _merge(raw, loaded)

        if overrides:
            raw = _merge(raw, overrides)

        config = cls.from_json(raw)
        config.seed = cls._get_env('SEED', int, None, config.seed)
        config.threads = cls._get_env('THREADS', int, None, config.threads)
        config.output_dir = cls._get_env('OUT', str, None, config.output_dir)
        if scale is not None:
            if not scale > 0:
                raise schurqnn.errors.UsageError(f'scale must be positive, got {scale}')
            config.train.trials = max(1, round(config.train.trials * scale))
        config.validate()
        return config

    @classmethod
    def _config_path(cls, arg: str | pathlib.Path | None) -> pathlib.Path | None:
        if arg is not None:
            return pathlib.Path(arg).expanduser().resolve()
        default = pathlib.Path(platformdirs.user_config_dir(__package__)) / 'config.json'
        return default if default.exists() else None

    @classmethod
    def _get_env[T](cls, env: str, f: typing.Callable[[str], T], arg: T | None, default: T) -> T:
        env = f'{__package__.upper()}_{env}'
        try:
            raw = os.environ[env]
        except KeyError:
            return arg if arg is not None else default
        try:
            return f(raw)
        except ValueError:
            raise schurqnn.errors.UsageError(f'cannot parse {raw!r}', where=env)

    def validate(self) -> None:
        s = self.system
        if s.model != 'temperley-lieb':
            raise schurqnn.errors.UsageError(f'unknown model {s.model!r}')
        if s.L < 2:
            raise schurqnn.errors.UsageError(f'L must be at least 2, got {s.L}')
        if s.n_a is not None and s.n_a < 1:
            raise schurqnn.errors.UsageError(f'n_a must be at least 1, got {s.n_a}')
        if s.dataset not in ('bell', 'schur'):
            raise schurqnn.errors.UsageError(f'unknown dataset {s.dataset!r}')
        if s.a_kind not in ('rotating', 'system'):
            raise schurqnn.errors.UsageError(f'unknown A kind {s.a_kind!r}')

        if not self.ansatz.p_values:
            raise schurqnn.errors.UsageError('need at least one value of p')
        if any(p < 1 for p in self.ansatz.p_values):
            raise schurqnn.errors.UsageError(f'p values must be positive, got {self.ansatz.p_values}')
        if self.ansatz.T is not None and not self.ansatz.T > 0:
            raise schurqnn.errors.UsageError(f'T must be positive, got {self.ansatz.T}')

        self.train.train_config(self.seed).validate()
        if self.train.trials < 1:
            raise schurqnn.errors.UsageError(f'need at least one trial, got {self.train.trials}')
        if not 0 < self.train.bin_width <= 1:
            raise schurqnn.errors.UsageError(f'bin width must be in (0, 1], got {self.train.bin_width}')

        v = self.verify
        for name in ('samples', 'components', 'thetas', 'moment_instances', 'moment_samples'):
            if getattr(v, name) < 1:
                raise schurqnn.errors.UsageError(f'{name} must be at least 1, got {getattr(v, name)}')
        if not (v.sigma > 0 and 0 < v.rank_tol < 1):
            raise schurqnn.errors.UsageError('sigma must be positive and rank_tol in (0, 1)')
        if not all(math.isfinite(t) and t > 0 for t in v.moment_horizons):
            raise schurqnn.errors.UsageError(f'horizons must be positive, got {v.moment_horizons}')

        if self.seed < 0:
            raise schurqnn.errors.UsageError(f'seed must be non-negative, got {self.seed}')
        if self.threads is not None and self.threads < 1:
            raise schurqnn.errors.UsageError(f'threads must be at least 1, got {self.threads}')

@dataclasses.dataclass
class OutputDir:
    """A directory whose files are only ever replaced whole."""

    #: Where the files go.
    path: pathlib.Path

    @contextlib.contextmanager
    def replace_file(self, name: str) -> typing.Iterator[typing.TextIO]:
        """Write to ``name.new``, and rename it over ``name`` on success."""
        self.path.mkdir(parents=True, exist_ok=True)
        target = self.path / name
        tmp = target.with_name(target.name + '.new')
        try:
            with open(tmp, 'w', newline='') as f:
                yield f
        else:
            tmp.replace(target)
        finally:
            tmp.unlink(missing_ok=True)

    def write_json(self, name: str, value: schurqnn._json.ToJson) -> pathlib.Path:
        with self.replace_file(name) as f:
            schurqnn._json.dump(value, f)
        return self.path / name
