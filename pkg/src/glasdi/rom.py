"""Online surrogate evaluation: encode, integrate the latent ODE, decode.

Prediction for a query parameter interpolates the coefficient matrices of
its nearest sampled neighbors, encodes the analytic initial condition, and
integrates the resulting polynomial latent ODE with classical fixed-step
RK4 at the full-order time step before decoding every latent state back to
the physical space. No full-order data is needed at prediction time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dynamics import BasisLibrary, eval_library
from .greedy import TrainingDatabase, max_relative_error
from .fom import NonConvergence
from .network import MlpParams, decode, encode
from .param_space import DiscreteParamSpace, SampleSet
from .shepard import interpolate_coeffs


class LatentBlowup(RuntimeError):
    """The integrated latent state became non-finite (unstable dynamics)."""

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class RomModel:
    """Everything the online stage needs, frozen out of a training run."""

    space: DiscreteParamSpace
    sample_set: SampleSet
    coeffs: list[np.ndarray]
    mlp: MlpParams
    library: BasisLibrary
    scale: np.ndarray | None = None

    @classmethod
    def from_database(
        cls,
        db: TrainingDatabase,
        mlp: MlpParams,
        library: BasisLibrary,
        scale: np.ndarray | None = None,
    ) -> "RomModel":
        return cls(
            space=db.space,
            sample_set=db.sample_set,
            coeffs=db.coeffs,
            mlp=mlp,
            library=library,
            scale=scale,
        )


def interpolated_coeffs(model: RomModel, query, k: int) -> np.ndarray:
    return interpolate_coeffs(
        np.asarray(query, dtype=float),
        model.space,
        model.sample_set,
        model.coeffs,
        k,
        scale=model.scale,
    )


def _rk4_step(library: BasisLibrary, xi: np.ndarray, z: np.ndarray, dt: float) -> np.ndarray:
    def f(state):
        return eval_library(library, state) @ xi

    k1 = f(z)
    k2 = f(z + 0.5 * dt * k1)
    k3 = f(z + 0.5 * dt * k2)
    k4 = f(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _affine_rk4_map(
    library: BasisLibrary, xi: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact classical-RK4 step for an affine field dz/dt = z@A + b.

    On affine fields RK4 reduces to the degree-4 Taylor polynomial of the
    flow, so the whole step is one precomputed affine map z -> z@M + c.
    """
    n = library.latent_dim
    b = xi[0] if library.include_constant else np.zeros(n)
    A = xi[1:] if library.include_constant else xi
    # P = dt*I + dt^2/2 A + dt^3/6 A^2 + dt^4/24 A^3  (row-vector convention)
    P = dt * np.eye(n)
    power = np.eye(n)
    factor = dt
    for order in range(2, 5):
        power = A @ power
        factor *= dt / order
        P = P + factor * power
    return np.eye(n) + A @ P, b @ P


def predict(
    model: RomModel, query, k: int, problem, dt: float | None = None
) -> np.ndarray:
    """Predicted snapshot matrix (n_state, n_steps+1) for a query parameter.

    `problem` supplies the initial condition, time step and step count; a
    custom latent integration step can be forced with `dt`. Raises
    LatentBlowup when the latent state stops being finite.
    """
    query = np.asarray(query, dtype=float)
    xi = interpolated_coeffs(model, query, k)
    step = problem.dt if dt is None else dt
    n_steps = problem.n_steps

    z = encode(model.mlp, problem.initial_condition(query))
    Z = np.zeros((n_steps + 1, model.library.latent_dim))
    Z[0] = z
    if model.library.poly_order == 1:
        M, c = _affine_rk4_map(model.library, xi, step)
        for n in range(1, n_steps + 1):
            z = z @ M + c
            if not np.all(np.isfinite(z)):
                raise LatentBlowup(f"latent state non-finite at step {n}", step_index=n)
            Z[n] = z
    else:
        for n in range(1, n_steps + 1):
            z = _rk4_step(model.library, xi, z, step)
            if not np.all(np.isfinite(z)):
                raise LatentBlowup(f"latent state non-finite at step {n}", step_index=n)
            Z[n] = z
    return decode(model.mlp, Z).T


@dataclass
class HeatmapResult:
    values: np.ndarray  # e_max per grid point, shaped like the grid counts
    summary_max: float  # worst finite cell


def error_heatmap(
    model: RomModel, space: DiscreteParamSpace, k: int, problem, fom_solver=None
) -> HeatmapResult:
    """Maximum relative error of the surrogate on every grid point.

    `fom_solver` maps coordinates to a reference Trajectory (defaults to
    solving the problem directly); cells whose reference solve fails are
    recorded as NaN.
    """
    solver = fom_solver if fom_solver is not None else problem.solve
    values = np.full(space.n_points, np.nan)
    for i in range(space.n_points):
        coords = space.point(i)
        try:
            reference = solver(coords)
        except NonConvergence:
            continue
        pred = predict(model, coords, k, problem)
        values[i] = max_relative_error(reference.snapshots, pred)
    return HeatmapResult(
        values=values.reshape(space.counts), summary_max=float(np.nanmax(values))
    )


@dataclass
class SpeedupResult:
    t_fom: float
    t_rom: float
    ratio: float


def measure_speedup(
    model: RomModel, query, k: int, problem, repetitions: int = 5
) -> SpeedupResult:
    """Median wall-clock of a full-order solve vs a surrogate prediction."""
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions for a median")
    t_fom = []
    t_rom = []
    for _ in range(repetitions):
        start = time.perf_counter()
        problem.solve(query)
        t_fom.append(time.perf_counter() - start)
        start = time.perf_counter()
        predict(model, query, k, problem)
        t_rom.append(time.perf_counter() - start)
    fom_med = float(np.median(t_fom))
    rom_med = float(np.median(t_rom))
    return SpeedupResult(t_fom=fom_med, t_rom=rom_med, ratio=fom_med / rom_med)
