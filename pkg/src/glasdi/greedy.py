"""Physics-informed greedy selection of training parameters.

Candidates are scored by a residual-based error indicator that needs only
the surrogate's own prediction: the mean backward-Euler residual norm over
the first few transitions of the predicted trajectory. The candidate with
the largest indicator is solved at full order and appended to the training
database. A linear fit of true maximum relative errors against indicator
values over the sampled set turns the indicator into an estimate of the
worst error, which drives the two-level random-subset schedule: once the
estimate reaches the tolerance at level 1 the subset size doubles, and a
second success at level 2 signals convergence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fom import Trajectory
from .param_space import DiscreteParamSpace, SampleSet, random_subset
from .shepard import interpolate_coeffs


class ZeroNormColumn(ValueError):
    """A reference snapshot column has zero norm; relative error undefined."""


class DegenerateFit(RuntimeError):
    """All indicator values coincide; the error regression has no slope."""


@dataclass
class ErrorRecord:
    """Per-sample true maximum relative errors and indicator values."""

    e_max: np.ndarray
    e_res: np.ndarray

    def __post_init__(self):
        self.e_max = np.asarray(self.e_max, dtype=float)
        self.e_res = np.asarray(self.e_res, dtype=float)
        if self.e_max.shape != self.e_res.shape:
            raise ValueError("e_max and e_res must have equal length")
        if np.any(self.e_max < 0) or np.any(self.e_res < 0):
            raise ValueError("error entries must be non-negative")


@dataclass(frozen=True)
class ErrorCorrelation:
    slope: float
    intercept: float

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValueError("correlation coefficients must be finite")


@dataclass
class SamplerState:
    """Random-subset schedule state for the greedy loop."""

    subset_size: int
    rng_seed: int
    level: int = 1
    iteration: int = 1
    estimated_max_error: float = float("inf")

    def __post_init__(self):
        if self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.level not in (1, 2):
            raise ValueError("level must be 1 or 2")


@dataclass(frozen=True)
class TerminationCriteria:
    """Stopping rules; `tol = 0` disables the estimated-error criterion."""

    tol: float
    n_mu_max: int
    n_epoch_max: int

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("tol must be positive (or 0 to disable)")
        if self.n_mu_max < 1 or self.n_epoch_max < 0:
            raise ValueError("n_mu_max must be >= 1 and n_epoch_max >= 0")


@dataclass
class TrainingDatabase:
    """Sampled parameters with their trajectories and coefficient matrices."""

    space: DiscreteParamSpace
    sample_set: SampleSet
    trajectories: list[Trajectory]
    coeffs: list[np.ndarray]
    sampler_state: SamplerState

    def __post_init__(self):
        if not (len(self.sample_set) == len(self.trajectories) == len(self.coeffs)):
            raise ValueError("sample set, trajectories and coefficients must align")
        self.sample_set.validate(self.space)

    def __len__(self) -> int:
        return len(self.sample_set)

    def append(self, grid_index: int, trajectory: Trajectory, xi: np.ndarray) -> None:
        self.sample_set = self.sample_set.extended(grid_index)
        self.sample_set.validate(self.space)
        self.trajectories.append(trajectory)
        self.coeffs.append(xi)

    def params(self) -> np.ndarray:
        return self.space.points[list(self.sample_set)]


def default_transition_count(n_steps: int) -> int:
    """Number of leading transitions scored by the indicator (~10% of steps)."""
    return max(1, int(round(0.1 * n_steps)))


def max_relative_error(U_true: np.ndarray, U_pred: np.ndarray) -> float:
    """Worst per-step relative L2 discrepancy over steps 1..n_steps."""
    if U_true.shape != U_pred.shape:
        raise ValueError("snapshot matrices must share shape")
    diff = np.linalg.norm(U_true[:, 1:] - U_pred[:, 1:], axis=0)
    ref = np.linalg.norm(U_true[:, 1:], axis=0)
    if np.any(ref == 0.0):
        raise ZeroNormColumn("a reference column has zero norm")
    return float(np.max(diff / ref))


def residual_indicator(problem, U_pred: np.ndarray, param, n_ts: int) -> float:
    """Mean backward-Euler residual norm over the first n_ts transitions."""
    n_steps = U_pred.shape[1] - 1
    if not 1 <= n_ts <= n_steps:
        raise ValueError(f"n_ts={n_ts} outside [1, {n_steps}]")
    total = 0.0
    for n in range(1, n_ts + 1):
        total += problem.residual_norm(U_pred[:, n], U_pred[:, n - 1], param)
    return total / n_ts


def select_next(
    problem,
    space: DiscreteParamSpace,
    candidates: list[int],
    predictions: list[np.ndarray],
    n_ts: int,
) -> tuple[int, np.ndarray]:
    """Grid index with the largest indicator; ties go to the lower index."""
    if not candidates:
        raise ValueError("no candidates to select from")
    scores = np.array(
        [
            residual_indicator(problem, pred, space.point(i), n_ts)
            for i, pred in zip(candidates, predictions)
        ]
    )
    best = min(range(len(candidates)), key=lambda j: (-scores[j], candidates[j]))
    return candidates[best], scores


def fit_error_correlation(record: ErrorRecord) -> ErrorCorrelation:
    """Ordinary least squares of e_max on e_res (closed form)."""
    if len(record.e_res) < 2:
        raise ValueError("need at least two samples to fit")
    x = record.e_res
    y = record.e_max
    var = float(np.sum((x - x.mean()) ** 2))
    if var == 0.0:
        raise DegenerateFit("all indicator values are equal")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / var)
    return ErrorCorrelation(slope=slope, intercept=float(y.mean() - slope * x.mean()))


def estimate_max_error(correlation: ErrorCorrelation, record: ErrorRecord) -> float:
    return correlation.slope * float(np.max(record.e_res)) + correlation.intercept


def greedy_step(
    db: TrainingDatabase,
    problem,
    predict,
    tol: float,
    n_ts: int,
    warm_start_k: int = 1,
    scale: np.ndarray | None = None,
) -> tuple[dict, bool]:
    """One sampling event: draw a subset, pick, solve, append, re-estimate.

    `predict` maps parameter coordinates to a predicted snapshot matrix using
    the current model and database. Returns the audit record and a flag that
    is True when the error estimate met `tol` at level 2 (convergence).
    Subsets are drawn with seed `rng_seed + iteration` and are clipped to the
    number of still-unsampled grid points.
    """
    state = db.sampler_state
    space = db.space
    available = space.n_points - len(db.sample_set)
    if available == 0:
        raise RuntimeError("parameter grid exhausted")
    size = min(state.subset_size, available)
    used_level = state.level
    used_subset_size = size

    candidates = random_subset(space, db.sample_set, size, state.rng_seed + state.iteration)
    predictions = [predict(space.point(i)) for i in candidates]
    chosen, scores = select_next(problem, space, candidates, predictions, n_ts)
    chosen_score = float(scores[candidates.index(chosen)])

    trajectory = problem.solve(space.point(chosen))
    k = min(warm_start_k, len(db.sample_set))
    xi = interpolate_coeffs(
        space.point(chosen), space, db.sample_set, db.coeffs, k, scale=scale
    )
    db.append(chosen, trajectory, xi)

    e_max = []
    e_res = []
    for grid_idx, traj in zip(db.sample_set, db.trajectories):
        pred = predict(space.point(grid_idx))
        e_max.append(max_relative_error(traj.snapshots, pred))
        e_res.append(residual_indicator(problem, pred, space.point(grid_idx), n_ts))
    record = ErrorRecord(e_max=np.array(e_max), e_res=np.array(e_res))
    try:
        correlation = fit_error_correlation(record)
        estimate = estimate_max_error(correlation, record)
    except DegenerateFit:
        estimate = float(np.max(record.e_max))
    state.estimated_max_error = estimate

    converged = False
    if tol > 0.0 and estimate <= tol:
        if state.level == 1:
            state.subset_size *= 2
            state.level = 2
        else:
            converged = True

    audit = {
        "iter": state.iteration,
        "chosen_param": [float(v) for v in space.point(chosen)],
        "e_res_max": chosen_score,
        "e_v_max": float(estimate),
        "subset_size": used_subset_size,
        "level": used_level,
    }
    state.iteration += 1
    return audit, converged
