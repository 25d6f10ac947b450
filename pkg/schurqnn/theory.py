"""Numerical checks of the loss-landscape statements.

Gaussian conventions: a Ginibre matrix has i.i.d. complex entries whose
real and imaginary parts each have variance 1/2 (unit total variance).
The second-moment formulas below assume exactly this normalization.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import typing

import numpy as np
import numpy.typing as npt
import scipy.linalg as la

import schurqnn._json
import schurqnn.algebra
import schurqnn.errors
import schurqnn.linalg
import schurqnn.model
import schurqnn.qnn
import schurqnn.trainer
from schurqnn._json import Json
from schurqnn.linalg import Matrix

__all__ = [
    'effective_rank', 'semi_isotropic', 'GaussianSector', 'GaussianModelSpec',
    'GradientSamples', 'sample_gradient_stat', 'second_moment', 'variance_formula',
    'VarianceReport', 'variance_reports', 'MomentComparison', 'moment_compare',
    'moment_instance', 'TrendPoint', 'moment_trend', 'moment_horizons',
    'extend_dataset_multiplicities', 'GeneralizationReport', 'generalization_check',
    'RankPoint', 'hessian_rank_curve', 'rank_saturated',
]

logger = logging.getLogger(__name__)

#: Tolerance for a state to count as lying in a single ray.
RAY_TOL = 1e-8

_CHUNK = 4096

def effective_rank(a_block: npt.ArrayLike) -> float:
    """r_A = Tr(A)² / Tr(A²)."""
    a = schurqnn.linalg.check_hermitian(a_block, name='A block')
    tr2 = float(np.trace(a @ a).real)
    if tr2 <= 1e-24:
        raise schurqnn.errors.ZeroOperator('A block is zero')
    return float(np.trace(a).real) ** 2 / tr2

def semi_isotropic(a_block: npt.ArrayLike) -> Matrix:
    """Replace A by (Tr A / r) times the projector on its top r eigenvectors.

    When r_A is not an integer, r = ⌈r_A⌉ and the second moment is no
    longer preserved; the residuals are logged.
    """
    a = schurqnn.linalg.check_hermitian(a_block, name='A block')
    trace = float(np.trace(a).real)
    if trace <= 1e-12:
        raise schurqnn.errors.ZeroOperator(f'A block has trace {trace:.3g}')
    eig = schurqnn.linalg.hermitian_eig(a)
    if eig.values[0] < -1e-10 * max(1.0, abs(eig.values[-1])):
        raise ValueError(f'A block is not positive semidefinite (eigenvalue {eig.values[0]:.3g})')

    r = effective_rank(a)
    count = round(r) if abs(r - round(r)) < 1e-9 else math.ceil(r)
    count = min(max(count, 1), eig.dim)
    # eigh sorts ascending; keep the largest eigenvalues
    top = eig.vectors[:, ::-1][:, :count]
    out = (trace / count) * (top @ top.conj().T)

    residual = float(np.trace(out @ out).real - np.trace(a @ a).real)
    if abs(residual) > 1e-9:
        logger.warning('r_A = %.6g is not integral; second-moment residual %.3g', r, residual)
    return out

@dataclasses.dataclass(eq=False)
class GaussianSector:
    """One sector of the Gaussian surrogate model."""

    #: N_λ, the system irrep dimension.
    irrep_dim: int
    #: A^λ on the N_λ·N_a block, irrep index major, ancilla minor.
    a_block: Matrix
    #: (irrep index q, label index) of each datapoint in this sector.
    points: list[tuple[int, int]]

@dataclasses.dataclass(eq=False)
class GaussianModelSpec:
    #: Ancilla width n_a.
    n_a: int
    #: The retained sectors.
    sectors: list[GaussianSector]

    def __post_init__(self) -> None:
        for i, s in enumerate(self.sectors):
            if s.a_block.shape != (self.block_dim(i),) * 2:
                raise schurqnn.errors.DimensionMismatch(
                    f'sector {i} block has shape {s.a_block.shape}, expected {self.block_dim(i)}'
                )
            for q, label in s.points:
                if not (0 <= q < s.irrep_dim and 0 <= label < self.N_a):
                    raise schurqnn.errors.DimensionMismatch(f'sector {i} point ({q}, {label}) out of range')

    @property
    def N_a(self) -> int:
        return 2 ** self.n_a

    @property
    def M(self) -> int:
        return sum(len(s.points) for s in self.sectors)

    def block_dim(self, sector: int) -> int:
        """N*_λ = N_λ · N_a."""
        return self.sectors[sector].irrep_dim * self.N_a

    def observable_diagonal(self, sector: int, label: int) -> npt.NDArray[np.float64]:
        """Diagonal of O_x^λ = −I_{N_λ} ⊗ |label⟩⟨label| in the block."""
        diag = np.zeros(self.block_dim(sector))
        diag[label::self.N_a] = -1.0
        return diag

    def state_index(self, q: int) -> int:
        """Block index of |q⟩ ⊗ |0⟩."""
        return q * self.N_a

    @classmethod
    def synthetic(
            cls,
            irrep_dims: typing.Sequence[int],
            n_a: int,
            labels: typing.Sequence[typing.Sequence[int]],
            a_blocks: typing.Sequence[npt.ArrayLike],
    ) -> typing.Self:
        """Sectors with given irrep dims, A blocks and per-point labels."""
        sectors = [
            GaussianSector(irrep_dim=n, a_block=np.asarray(a, dtype=complex), points=[(q, l) for q, l in enumerate(ls)])
            for n, a, ls in zip(irrep_dims, a_blocks, labels, strict=True)
        ]
        return cls(n_a=n_a, sectors=sectors)

    @classmethod
    def from_system(
            cls,
            decomp: schurqnn.algebra.KrylovDecomposition,
            a_op: npt.ArrayLike,
            dataset: schurqnn.model.Dataset,
    ) -> typing.Self:
        """Blocks of A and the tagged points of ``dataset`` per selected sector.

        Points inside one sector get irrep indices 0, 1, … in dataset
        order; the surrogate only needs them to be orthogonal.
        """
        lifted = decomp.with_ancilla(dataset.n_a)
        sectors = []
        for sector_id in decomp.selected:
            labels = [x.label_index for x in dataset.points if x.sector == sector_id]
            if not labels:
                continue
            n = decomp.sector(sector_id).irrep_dim
            if len(labels) > n:
                raise schurqnn.errors.DimensionMismatch(f'{len(labels)} points in sector {sector_id} of irrep dim {n}')
            block = schurqnn.algebra.project_block(np.asarray(a_op), lifted, sector_id)
            sectors.append(GaussianSector(irrep_dim=n, a_block=block, points=list(enumerate(labels))))
        if not sectors:
            raise schurqnn.errors.UsageError('no tagged points in the selected sectors')
        return cls(n_a=dataset.n_a, sectors=sectors)

Form: typing.TypeAlias = typing.Literal['absorbed', 'haar']

@dataclasses.dataclass(eq=False)
class GradientSamples:
    #: values[λ] has shape (samples, points in λ, components).
    values: list[npt.NDArray[np.float64]]
    form: Form

    @property
    def samples(self) -> int:
        return self.values[0].shape[0]

    @property
    def components(self) -> int:
        return self.values[0].shape[2]

    def gradient(self) -> npt.NDArray[np.float64]:
        """Per-sample gradient estimate Σ_{λ,x} ℓ̂_{x;i}, shape (samples, components)."""
        return sum(v.sum(axis=1) for v in self.values)

def _apply_rotated(g: Matrix, a: Matrix, w: Matrix) -> Matrix:
    """g A g† w for a stack g of shape (B, C, D, D) and vectors w (B, D)."""
    t = np.einsum('bcji,bj->bci', g.conj(), w)
    t = np.einsum('ij,bcj->bci', a, t)
    return np.einsum('bcij,bcj->bci', g, t)

def _sector_chunk(model: GaussianModelSpec, sector: int, a_tilde: Matrix, size: int, components: int, form: Form, rng: np.random.Generator) -> npt.NDArray[np.float64]:
    d = model.block_dim(sector)
    points = model.sectors[sector].points
    prefactor = -2.0 / (model.M * d * d)
    out = np.zeros((size, len(points), components))

    rotations = schurqnn.linalg.ginibre(d, d, rng, (size, components))
    outer = schurqnn.linalg.ginibre(d, d, rng, (size,))
    if form == 'haar':
        inputs = schurqnn.linalg.haar_unitary(d, rng, (size,))

    for k, (q, label) in enumerate(points):
        diag = model.observable_diagonal(sector, label)
        idx = model.state_index(q)
        if form == 'absorbed':
            # v = g̃'†|x⟩, and the statistic is (i/(M N*²)) v†[G_i, O_x]v
            v = outer[:, idx, :].conj()
            observed = diag * v
        else:
            # u = g''|x⟩, and the observable is g̃' O_x g̃'†
            v = inputs[:, :, idx]
            w = np.einsum('bji,bj->bi', outer.conj(), v)
            observed = np.einsum('bij,bj->bi', outer, diag * w)
        rotated = _apply_rotated(rotations, a_tilde, observed)
        out[:, k, :] = prefactor * np.einsum('bi,bci->bc', v.conj(), rotated).imag
    return out

def sample_gradient_stat(
        model: GaussianModelSpec,
        samples: int,
        rng: np.random.Generator,
        *,
        components: int = 1,
        form: Form = 'absorbed',
) -> GradientSamples:
    """Draw the Gaussian surrogate ℓ̂_{x;i}^λ for every sector, point and component.

    ``absorbed`` folds the input Haar unitary into the outer Ginibre
    matrix, giving (i/(M N*²)) v†[g̃_i Ã g̃_i†, O_x] v with v = g̃'†|x⟩.
    ``haar`` keeps it, giving (i/(M N*²)) ⟨x|g''†[g̃_i Ã g̃_i†, g̃' O_x g̃'†]g''|x⟩.
    Sectors are independent; within a sector the outer matrices are
    shared by all points and components.
    """
    if samples < 1:
        raise ValueError(f'need at least one sample, got {samples}')
    if components < 1:
        raise ValueError(f'need at least one component, got {components}')
    if form not in ('absorbed', 'haar'):
        raise ValueError(f'unknown form {form!r}')

    values = []
    for sector, s in enumerate(model.sectors):
        a_tilde = semi_isotropic(s.a_block)
        chunks = []
        remaining = samples
        while remaining > 0:
            size = min(remaining, _CHUNK)
            chunks.append(_sector_chunk(model, sector, a_tilde, size, components, form, rng))
            remaining -= size
        values.append(np.concatenate(chunks))
    return GradientSamples(values=values, form=form)

def _trace_square(a: Matrix) -> float:
    return float(np.trace(a @ a).real)

def second_moment(model: GaussianModelSpec, sector: int, form: Form = 'absorbed') -> float:
    """Exact E[(ℓ̂_{x;i}^λ)²] for one point and component of ``sector``.

    absorbed: 2(N_a − 1) Tr(Ã²) / (M² N_a⁴ N_λ²)
    haar:     2 N_λ (N* − 1) Tr(Ã²) / (M² N*⁴)
    """
    n = model.sectors[sector].irrep_dim
    tr2 = _trace_square(semi_isotropic(model.sectors[sector].a_block))
    m = model.M
    if form == 'absorbed':
        return 2 * (model.N_a - 1) * tr2 / (m ** 2 * model.N_a ** 4 * n ** 2)
    d = model.block_dim(sector)
    return 2 * n * (d - 1) * tr2 / (m ** 2 * d ** 4)

def variance_formula(model: GaussianModelSpec, p: int) -> float:
    """E‖∇ℓ̂‖² = Σ_λ 2 M_λ (N_a − 1) Tr((A^λ)²) p / (M² N_a⁴ N_λ²)."""
    if p < 0:
        raise ValueError(f'p must be non-negative, got {p}')
    total = 0.0
    for s in model.sectors:
        total += 2 * len(s.points) * (model.N_a - 1) * _trace_square(s.a_block) / (model.N_a ** 4 * s.irrep_dim ** 2)
    return total * p / model.M ** 2

@dataclasses.dataclass
class VarianceReport:
    #: What was checked.
    name: str
    #: Exact value.
    formula_value: float
    #: Monte-Carlo estimate.
    mc_estimate: float
    #: Standard error of the estimate.
    stderr: float
    #: Number of independent samples.
    samples: int
    #: Standard errors allowed.
    sigma: float = 4.0

    @property
    def passed(self) -> bool:
        return abs(self.mc_estimate - self.formula_value) <= self.sigma * self.stderr

    def to_json(self) -> Json:
        return {
            'name': self.name,
            'formula_value': self.formula_value,
            'mc_estimate': self.mc_estimate,
            'stderr': self.stderr,
            'samples': self.samples,
            'pass': self.passed,
        }

def _report(name: str, formula: float, draws: npt.NDArray[np.float64], sigma: float) -> VarianceReport:
    n = len(draws)
    return VarianceReport(
        name = name,
        formula_value = formula,
        mc_estimate = float(np.mean(draws)),
        stderr = float(np.std(draws, ddof=1) / np.sqrt(n)),
        samples = n,
        sigma = sigma,
    )

def variance_reports(
        model: GaussianModelSpec,
        samples: int,
        rng: np.random.Generator,
        *,
        components: int = 2,
        form: Form = 'absorbed',
        sigma: float = 4.0,
        name: str = 'gaussian',
) -> list[VarianceReport]:
    """Compare sampled moments of the surrogate against exact values.

    Reports the per-sector mean and second moment, the total squared
    gradient norm against :func:`variance_formula` (absorbed form), and
    the covariances between components, datapoints and sectors, which
    vanish exactly in the absorbed form.
    """
    stats = sample_gradient_stat(model, samples, rng, components=components, form=form)
    reports = []
    for i, v in enumerate(stats.values):
        reports.append(_report(f'{name}/sector{i}/mean', 0.0, v.mean(axis=(1, 2)), sigma))
        reports.append(_report(
            f'{name}/sector{i}/second_moment',
            second_moment(model, i, form),
            (v ** 2).mean(axis=(1, 2)),
            sigma,
        ))

    if form != 'absorbed':
        return reports

    grad = stats.gradient()
    reports.append(_report(f'{name}/gradient_norm', variance_formula(model, components), (grad ** 2).sum(axis=1), sigma))
    for i, v in enumerate(stats.values):
        if components >= 2:
            reports.append(_report(f'{name}/sector{i}/cov_components', 0.0, v[:, 0, 0] * v[:, 0, 1], sigma))
        if v.shape[1] >= 2:
            reports.append(_report(f'{name}/sector{i}/cov_points', 0.0, v[:, 0, 0] * v[:, 1, 0], sigma))
    if len(stats.values) >= 2:
        reports.append(_report(f'{name}/cov_sectors', 0.0, stats.values[0][:, 0, 0] * stats.values[1][:, 0, 0], sigma))
    return reports

@dataclasses.dataclass
class MomentComparison:
    #: Average of the trace expression over uniformly random times.
    time_avg: complex
    #: Its standard error (0 when computed exactly).
    time_stderr: float
    #: Average over independent Haar unitaries.
    haar_avg: complex
    #: Its standard error.
    haar_stderr: float
    #: Tr(A)Tr(O)/N*² for first order, else None.
    closed_form: float | None
    #: Number of Monte-Carlo samples per side.
    samples: int

    @property
    def diff(self) -> float:
        return abs(self.time_avg - self.haar_avg)

    def haar_matches_closed_form(self, sigma: float = 4.0) -> bool:
        if self.closed_form is None:
            return True
        return abs(self.haar_avg - self.closed_form) <= sigma * max(self.haar_stderr, 1e-15)

    def to_json(self) -> Json:
        return {
            'time_avg': schurqnn._json.to_json(complex(self.time_avg)),
            'time_stderr': self.time_stderr,
            'haar_avg': schurqnn._json.to_json(complex(self.haar_avg)),
            'haar_stderr': self.haar_stderr,
            'closed_form': self.closed_form,
            'diff': self.diff,
            'samples': self.samples,
        }

def _dephasing(values: npt.NDArray[np.float64], t: npt.NDArray[np.float64]) -> Matrix:
    """e^{−i(w_j − w_k)t} for a batch of times, shape (B, D, D)."""
    delta = values[:, None] - values[None, :]
    return np.exp(-1j * delta[None, :, :] * t[:, None, None])

def _time_average_exact(values: npt.NDArray[np.float64], T: float) -> Matrix:
    """E_t e^{−iΔt} over t uniform on [0, T], elementwise in Δ."""
    delta = values[:, None] - values[None, :]
    x = delta * T
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0, (1 - np.exp(-1j * safe)) / (1j * safe))

def _mean_and_stderr(draws: npt.NDArray[np.complex128]) -> tuple[complex, float]:
    n = len(draws)
    if n < 2:
        return complex(np.mean(draws)), 0.0
    spread = np.var(draws.real, ddof=1) + np.var(draws.imag, ddof=1)
    return complex(np.mean(draws)), float(np.sqrt(spread / n))

def moment_compare(
        hamiltonian: npt.ArrayLike,
        a_op: npt.ArrayLike,
        o_op: npt.ArrayLike,
        x_state: npt.ArrayLike,
        T: float,
        order: int,
        samples: int,
        rng: np.random.Generator,
        *,
        exact_time: bool = False,
) -> MomentComparison:
    """Time-averaged against Haar-averaged Tr(ρ(t'') Π_j A(t_j) O(t'_j)).

    X(t) = e^{−iHt} X e^{iHt} and ρ = |x⟩⟨x|, with ``order`` factors of
    A(t_j) O(t'_j) and every time drawn independently from [0, T]. The
    Haar side replaces each evolution by an independent Haar unitary.
    ``exact_time`` integrates the first-order time average in closed form.
    """
    if order not in (1, 2):
        raise ValueError(f'order must be 1 or 2, got {order}')
    if not T > 0:
        raise ValueError(f'T must be positive, got {T}')
    if samples < 1:
        raise ValueError(f'need at least one sample, got {samples}')
    eig = schurqnn.linalg.hermitian_eig(hamiltonian)
    a = schurqnn.linalg.check_hermitian(a_op, name='A')
    o = schurqnn.linalg.check_hermitian(o_op, name='O')
    x = np.asarray(x_state, dtype=complex)
    if a.shape != (eig.dim, eig.dim) or o.shape != a.shape or x.shape != (eig.dim,):
        raise schurqnn.errors.DimensionMismatch('H, A, O and the state must share a dimension')
    rho = np.outer(x, x.conj())
    d = eig.dim

    rho_h, a_h, o_h = (eig.to_eigenbasis(m) for m in (rho, a, o))
    if exact_time and order == 1:
        f = _time_average_exact(eig.values, T)
        time_avg = complex(np.trace((rho_h * f) @ (a_h * f) @ (o_h * f)))
        time_stderr = 0.0
    else:
        draws = []
        remaining = samples
        while remaining > 0:
            size = min(remaining, max(1, _CHUNK // d))
            prod = rho_h * _dephasing(eig.values, rng.uniform(0, T, size))
            for _ in range(order):
                prod = prod @ (a_h * _dephasing(eig.values, rng.uniform(0, T, size)))
                prod = prod @ (o_h * _dephasing(eig.values, rng.uniform(0, T, size)))
            draws.append(np.trace(prod, axis1=1, axis2=2))
            remaining -= size
        time_avg, time_stderr = _mean_and_stderr(np.concatenate(draws))

    draws = []
    remaining = samples
    while remaining > 0:
        size = min(remaining, max(1, _CHUNK // d))
        u = schurqnn.linalg.haar_unitary(d, rng, (size,))
        prod = u @ rho @ u.conj().transpose(0, 2, 1)
        for _ in range(order):
            for m in (a, o):
                u = schurqnn.linalg.haar_unitary(d, rng, (size,))
                prod = prod @ (u @ m @ u.conj().transpose(0, 2, 1))
        draws.append(np.trace(prod, axis1=1, axis2=2))
        remaining -= size
    haar_avg, haar_stderr = _mean_and_stderr(np.concatenate(draws))

    closed = None
    if order == 1:
        closed = float((np.trace(rho).real * np.trace(a).real * np.trace(o).real) / d ** 2)
    return MomentComparison(
        time_avg = time_avg,
        time_stderr = time_stderr,
        haar_avg = haar_avg,
        haar_stderr = haar_stderr,
        closed_form = closed,
        samples = samples,
    )

def moment_instance(dim: int, rng: np.random.Generator) -> tuple[Matrix, Matrix, Matrix, Matrix]:
    """A random-Hamiltonian family that scales with qubit count.

    H is a GUE matrix, A the Temperley–Lieb term on the first two
    qubits, O = −I ⊗ |0⟩⟨0| on the last qubit and |x⟩ = |0…0⟩. The
    first Haar moment is Tr(A)Tr(O)/dim² = −1/4 at every size.
    """
    n = int(round(np.log2(dim)))
    if 2 ** n != dim or n < 2:
        raise ValueError(f'dim must be a power of two >= 4, got {dim}')
    g = schurqnn.linalg.ginibre(dim, dim, rng)
    h = (g + g.conj().T) / 2
    a = schurqnn.linalg.embed(schurqnn.model.TL_PROJECTOR, 0, n)
    o = -schurqnn.linalg.embed(np.diag([1.0, 0.0]), n - 1, n)
    x = np.zeros(dim, dtype=complex)
    x[0] = 1
    return h, a, o, x

@dataclasses.dataclass
class TrendPoint:
    #: Total dimension.
    dim: int
    #: Mean |time_avg − haar_avg| over instances.
    mean_diff: float
    #: Standard error of that mean.
    stderr: float
    #: Fraction of instances whose Haar side matched the closed form.
    haar_consistent: float
    #: Number of random instances.
    instances: int

    def to_json(self) -> Json:
        return dataclasses.asdict(self)

def moment_trend(
        dims: typing.Sequence[int],
        instances: int,
        T: float,
        samples: int,
        rng: np.random.Generator,
        *,
        exact_time: bool = True,
        sigma: float = 4.0,
) -> list[TrendPoint]:
    """First-order time/Haar discrepancy averaged over random instances per size."""
    out = []
    for dim in dims:
        diffs = []
        consistent = 0
        for _ in range(instances):
            h, a, o, x = moment_instance(dim, rng)
            cmp = moment_compare(h, a, o, x, T, 1, samples, rng, exact_time=exact_time)
            diffs.append(cmp.diff)
            consistent += cmp.haar_matches_closed_form(sigma)
        diffs_arr = np.array(diffs)
        out.append(TrendPoint(
            dim = dim,
            mean_diff = float(diffs_arr.mean()),
            stderr = float(diffs_arr.std(ddof=1) / np.sqrt(len(diffs_arr))) if len(diffs_arr) > 1 else 0.0,
            haar_consistent = consistent / instances,
            instances = instances,
        ))
        logger.info('dim %d: mean |time − haar| = %.4g', dim, out[-1].mean_diff)
    return out

def moment_horizons(
        dim: int,
        horizons: typing.Sequence[float],
        rng: np.random.Generator,
) -> list[tuple[float, complex]]:
    """Exact first-order time averages of one instance at several horizons."""
    h, a, o, x = moment_instance(dim, rng)
    return [
        (T, moment_compare(h, a, o, x, T, 1, 1, rng, exact_time=True).time_avg)
        for T in horizons
    ]

def extend_dataset_multiplicities(
        dataset: schurqnn.model.Dataset,
        decomp: schurqnn.algebra.KrylovDecomposition,
) -> schurqnn.model.Dataset:
    """Append copies of each point moved to the other multiplicity slots.

    Each point must be |λ, ψ⟩ ⊗ |φ⟩ ⊗ |0⟩ for one sector λ (a rank-one
    coefficient matrix between copies and irrep vectors). Its copies are
    |λ, ψ⟩ ⊗ |φ_k⟩ ⊗ |0⟩ for an orthonormal completion φ_k of φ, which
    is the image of the point under a unitary of the commutant.
    """
    anc = np.zeros(2 ** dataset.n_a, dtype=complex)
    anc[0] = 1
    extra = []
    for i, x in enumerate(dataset.points):
        grid = x.state.reshape(-1, 2 ** dataset.n_a)
        if np.linalg.norm(grid[:, 1:]) > RAY_TOL:
            raise schurqnn.errors.SectorResolutionFailure(f'point {i} has ancilla weight outside |0⟩')
        system = grid[:, 0]
        weights = decomp.sector_weights(system)
        sector_id = int(np.argmax(weights))
        if weights[sector_id] < 1 - RAY_TOL:
            raise schurqnn.errors.SectorResolutionFailure(f'point {i} is spread over sectors')
        s = decomp.sector(sector_id)
        coeffs = (decomp.basis_change[:, s.columns].conj().T @ system).reshape(s.multiplicity, s.irrep_dim)
        left, sv, right = la.svd(coeffs)
        if len(sv) > 1 and sv[1] > RAY_TOL * sv[0]:
            raise schurqnn.errors.SectorResolutionFailure(f'point {i} is not a single ray of sector {sector_id}')

        completion, _ = la.qr(np.column_stack([left[:, 0], np.eye(s.multiplicity)]))
        for k in range(1, s.multiplicity):
            moved = sv[0] * np.outer(completion[:, k], right[0])
            state = decomp.basis_change[:, s.columns] @ moved.reshape(-1)
            extra.append(schurqnn.model.DataPoint(state=np.kron(state, anc), label=x.label, sector=sector_id))
    logger.debug('extended %d points with %d copies', dataset.M, len(extra))
    return dataclasses.replace(dataset, points=list(dataset.points) + extra)

@dataclasses.dataclass
class GeneralizationReport:
    #: Extended-dataset loss at each θ.
    extended: list[float]
    #: Largest per-point loss of the training set at each θ.
    bound: list[float]
    #: Largest |copy loss − original loss| over all copies and θ.
    copy_spread: float
    #: Number of appended copies.
    copies: int

    @property
    def passed(self) -> bool:
        inequality = all(e <= b + 1e-10 for e, b in zip(self.extended, self.bound))
        return inequality and self.copy_spread < 1e-9

    def to_json(self) -> Json:
        return {
            'name': 'generalization',
            'extended': self.extended,
            'bound': self.bound,
            'copy_spread': self.copy_spread,
            'copies': self.copies,
            'pass': self.passed,
        }

def generalization_check(
        spec: schurqnn.qnn.AnsatzSpec,
        thetas: typing.Iterable[npt.ArrayLike],
        dataset: schurqnn.model.Dataset,
        decomp: schurqnn.algebra.KrylovDecomposition,
) -> GeneralizationReport:
    """Check ℓ_extended(θ) ≤ max_x ℓ_x(θ) and that copies keep their loss."""
    extended = extend_dataset_multiplicities(dataset, decomp)
    # copies were appended after the originals, in the same point order
    sources = []
    for i, x in enumerate(dataset.points):
        s = decomp.sector(int(decomp.sector_weights(x.system_part()).argmax()))
        sources.extend([i] * (s.multiplicity - 1))

    report = GeneralizationReport(extended=[], bound=[], copy_spread=0.0, copies=len(sources))
    for theta in thetas:
        losses = schurqnn.qnn.point_losses(spec, theta, extended)
        original = losses[:dataset.M]
        report.extended.append(float(np.mean(losses)))
        report.bound.append(float(np.max(original)))
        if sources:
            spread = float(np.max(np.abs(losses[dataset.M:] - original[sources])))
            report.copy_spread = max(report.copy_spread, spread)
    return report

#: Adjusted loss and gradient norm below which a polished point counts
#: as a global minimum.
MINIMUM_LOSS = 1e-9
MINIMUM_GRADIENT = 1e-10

def polish_minimum(
        spec: schurqnn.qnn.AnsatzSpec,
        theta: npt.ArrayLike,
        dataset: schurqnn.model.Dataset,
        *,
        gtol: float = 1e-13,
        steps: int = 50,
) -> tuple[npt.NDArray[np.float64], float, float]:
    """Regularized Newton steps from ``theta`` until the gradient vanishes.

    Each step solves (|H| + μ) δ = ∇ℓ in the Hessian eigenbasis with
    μ = ‖∇ℓ‖, raising μ until the loss does not increase. This keeps
    quadratic convergence onto a degenerate minimum. Returns θ, the
    adjusted loss and the gradient norm.
    """
    theta = np.array(theta, dtype=float)
    value, grad = schurqnn.qnn.loss_and_gradient(spec, theta, dataset)
    for _ in range(steps):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < gtol:
            break
        w, v = la.eigh(schurqnn.qnn.hessian(spec, theta, dataset))
        coeffs = v.T @ grad
        mu = gnorm
        for _ in range(40):
            candidate = theta - v @ (coeffs / (np.abs(w) + mu))
            new_value, new_grad = schurqnn.qnn.loss_and_gradient(spec, candidate, dataset)
            if new_value <= value + 1e-15:
                break
            mu *= 4
        else:
            break
        theta, value, grad = candidate, new_value, new_grad
    return theta, schurqnn.qnn.adjusted_loss(value), float(np.linalg.norm(grad))

def _trained_minimum(
        spec: schurqnn.qnn.AnsatzSpec,
        dataset: schurqnn.model.Dataset,
        rng: np.random.Generator,
        config: schurqnn.trainer.TrainConfig,
        attempts: int,
) -> tuple[npt.NDArray[np.float64], float, float]:
    best: tuple[npt.NDArray[np.float64], float, float] | None = None
    for attempt in range(attempts):
        run = schurqnn.trainer.train(spec, rng.uniform(0, 2 * np.pi, spec.p), dataset, config)
        assert run.theta is not None
        found = polish_minimum(spec, run.theta, dataset)
        if best is None or found[1] < best[1]:
            best = found
        if found[1] < MINIMUM_LOSS and found[2] < MINIMUM_GRADIENT:
            break
        logger.info('p = %d: attempt %d stopped at adjusted loss %.3g', spec.p, attempt, found[1])
    assert best is not None
    return best

@dataclasses.dataclass
class RankPoint:
    #: Number of parameters.
    p: int
    #: Numerical rank of the Hessian at the trained θ.
    hessian_rank: int
    #: Dimension of the span of the rotated generators C_1 … C_p at that θ.
    generator_rank: int
    #: Adjusted loss at the trained θ.
    adjusted_loss: float
    #: Gradient norm at the trained θ.
    gradient_norm: float
    #: 2 M N_a³ N³, when a decomposition is known.
    bound: int | None = None
    #: Σ_λ 2 M_λ (N_λ N_a)³ over tagged sectors, when known.
    sector_bound: int | None = None

    @property
    def converged(self) -> bool:
        """Whether θ is a global minimum, where rank H ≤ dim span{C_i} holds."""
        return self.adjusted_loss < MINIMUM_LOSS and self.gradient_norm < MINIMUM_GRADIENT

    def to_json(self) -> Json:
        return dataclasses.asdict(self) | {'converged': self.converged}

#: Gradient descent used before polishing; the plateau rule only stops on increase.
RANK_TRAINING = schurqnn.trainer.TrainConfig(learning_rate=0.1, max_epochs=300, plateau_threshold=0.0, target_loss=1e-3)

def hessian_rank_curve(
        system: schurqnn.model.SystemSpec,
        dataset: schurqnn.model.Dataset,
        p_values: typing.Sequence[int],
        tol: float,
        rng: np.random.Generator,
        *,
        T: float | None = None,
        a_op: npt.ArrayLike | None = None,
        decomp: schurqnn.algebra.KrylovDecomposition | None = None,
        train_config: schurqnn.trainer.TrainConfig = RANK_TRAINING,
        attempts: int = 3,
) -> list[RankPoint]:
    """Hessian rank against p at trained minima of one Hamiltonian.

    One H and one set of times are drawn for the largest p; each p uses
    their prefix. For every p the network is trained by gradient descent
    and polished with :func:`polish_minimum`, retrying from fresh angles
    up to ``attempts`` times. At a global minimum every state is an
    eigenvector of its rotated observable, which makes the Hessian a
    Gram matrix on span{C_i}; its dimension is reported alongside.
    """
    if list(p_values) != sorted(p_values) or not p_values or p_values[0] < 0:
        raise schurqnn.errors.UsageError(f'p values must be non-negative and ascending, got {list(p_values)}')
    if attempts < 1:
        raise ValueError(f'need at least one attempt, got {attempts}')
    horizon = schurqnn.trainer.default_horizon(system) if T is None else T
    hamiltonian = schurqnn.model.build_hamiltonian(system, rng)
    a = schurqnn.model.build_A(system) if a_op is None else np.asarray(a_op, dtype=complex)
    full = schurqnn.qnn.sample_ansatz(p_values[-1], horizon, hamiltonian, a, rng)

    bound = sector_bound = None
    if decomp is not None:
        n_anc = 2 ** dataset.n_a
        bound = 2 * dataset.M * n_anc ** 3 * decomp.total_irrep_dim ** 3
        counts = dataset.counts()
        sector_bound = sum(
            2 * counts.get(s.id, 0) * (s.irrep_dim * n_anc) ** 3
            for s in decomp.sectors if s.id in decomp.selected
        )

    out = []
    for p in p_values:
        spec = full.truncate(p)
        if p == 0:
            value = schurqnn.qnn.loss(spec, np.zeros(0), dataset)
            out.append(RankPoint(
                p = 0,
                hessian_rank = 0,
                generator_rank = 0,
                adjusted_loss = schurqnn.qnn.adjusted_loss(value),
                gradient_norm = 0.0,
                bound = bound,
                sector_bound = sector_bound,
            ))
            continue
        theta, adjusted, gnorm = _trained_minimum(spec, dataset, rng, train_config, attempts)
        hess = schurqnn.qnn.hessian(spec, theta, dataset)
        generators, _ = schurqnn.qnn.rotated_generators(spec, theta)
        out.append(RankPoint(
            p = p,
            hessian_rank = schurqnn.linalg.numerical_rank(hess, tol),
            generator_rank = schurqnn.linalg.numerical_rank(generators.reshape(p, -1), tol),
            adjusted_loss = adjusted,
            gradient_norm = gnorm,
            bound = bound,
            sector_bound = sector_bound,
        ))
        logger.info(
            'p = %d: Hessian rank %d, generator span %d, adjusted loss %.3g',
            p, out[-1].hessian_rank, out[-1].generator_rank, adjusted,
        )
    return out

def rank_saturated(curve: typing.Sequence[RankPoint]) -> bool:
    """Whether the Hessian rank at trained minima stopped growing with p.

    The last two points must be global minima. At both, the Hessian rank
    must stay within span{C_i} and below p, and that span must be the
    same at both, so the Hessian rank is capped independently of p.
    """
    if len(curve) < 2:
        return False
    last, previous = curve[-1], curve[-2]
    if not (last.converged and previous.converged):
        return False
    bounded = all(c.hessian_rank <= c.generator_rank and c.hessian_rank < c.p for c in (previous, last))
    return bounded and last.generator_rank == previous.generator_rank < last.p
