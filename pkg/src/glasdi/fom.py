"""Full-order finite-difference Burgers solvers (1D required, 2D optional).

Both problems advance ``du/dt = f(u)`` with an implicit backward Euler step
solved by Newton iteration on the residual ``r = u_n - u_{n-1} - dt*f(u_n)``.
Snapshots are stored together with the exact semi-discrete rates
``u_dot_n = f(u_n)``, which serve as the rate targets during model training.

1D: inviscid Burgers on [-3, 3] with periodic boundary (first and last node
identified), backward-difference advection. The Newton system is lower
bidiagonal plus one corner entry from the periodic wrap, solved with a banded
factorization and a Sherman-Morrison correction.

2D: Burgers on [-3, 3]^2 with homogeneous essential boundary, backward
differences for advection and central differences for the 1/Re diffusion
term; Newton systems are solved with a sparse LU factorization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu


class NonConvergence(RuntimeError):
    """Newton failed to reach the residual tolerance within the iteration cap."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class FomConfig1D:
    n_points: int = 1001
    dt: float = 1.0 / 1000.0
    n_steps: int = 1000
    x_min: float = -3.0
    x_max: float = 3.0
    newton_tol: float = 1e-9
    newton_max_iter: int = 20

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("n_points must be >= 3")
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("dt must be > 0 and n_steps >= 1")
        if self.x_max <= self.x_min:
            raise ValueError("empty spatial domain")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)


@dataclass(frozen=True)
class FomConfig2D:
    n: int = 60
    dt: float = 1.0 / 200.0
    n_steps: int = 200
    reynolds: float = 1e4
    x_min: float = -3.0
    x_max: float = 3.0
    newton_tol: float = 1e-9
    newton_max_iter: int = 20

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid must be at least 3x3")
        if self.reynolds <= 0:
            raise ValueError("reynolds must be positive")
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("dt must be > 0 and n_steps >= 1")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)


@dataclass
class Trajectory:
    """Snapshot matrix, its semi-discrete rates, and the generating parameter."""

    snapshots: np.ndarray  # (n_state, n_steps+1)
    derivatives: np.ndarray  # (n_state, n_steps+1), column n = f(snapshots[:, n])
    param: np.ndarray
    dt: float

    @property
    def n_state(self) -> int:
        return self.snapshots.shape[0]

    @property
    def n_steps(self) -> int:
        return self.snapshots.shape[1] - 1


def _check_param(param) -> tuple[float, float]:
    coords = np.asarray(param, dtype=float).reshape(-1)
    if coords.size != 2:
        raise ValueError("Burgers parameters are (amplitude, width)")
    a, w = float(coords[0]), float(coords[1])
    if w == 0.0:
        raise ValueError("initial-condition width must be nonzero")
    return a, w


class Burgers1D:
    """Periodic 1D inviscid Burgers full-order model."""

    def __init__(self, config: FomConfig1D):
        self.config = config
        self.x = np.linspace(config.x_min, config.x_max, config.n_points)

    @property
    def n_state(self) -> int:
        return self.config.n_points

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def n_steps(self) -> int:
        return self.config.n_steps

    def initial_condition(self, param) -> np.ndarray:
        a, w = _check_param(param)
        return a * np.exp(-(self.x**2) / (2.0 * w * w))

    def rhs(self, state: np.ndarray) -> np.ndarray:
        """Advection rate -u * (u - u_left)/dx with periodic wrap u_left[0] = u[-2]."""
        u = np.asarray(state, dtype=float)
        if u.shape != (self.config.n_points,):
            raise ValueError(f"state length {u.shape} != {(self.config.n_points,)}")
        left = np.empty_like(u)
        left[1:] = u[:-1]
        left[0] = u[-2]
        return -u * (u - left) / self.config.dx

    def residual(self, u_n, u_prev) -> np.ndarray:
        return u_n - u_prev - self.config.dt * self.rhs(u_n)

    def residual_norm(self, u_n, u_prev, param=None) -> float:
        return float(np.linalg.norm(self.residual(u_n, u_prev)))

    def _newton_delta(self, u: np.ndarray, r: np.ndarray) -> np.ndarray:
        # J = I - dt*df: lower bidiagonal plus the periodic corner (0, n-2)
        cfg = self.config
        n = cfg.n_points
        ratio = cfg.dt / cfg.dx
        left = np.empty_like(u)
        left[1:] = u[:-1]
        left[0] = u[-2]
        ab = np.zeros((2, n))
        ab[0] = 1.0 + ratio * (2.0 * u - left)
        ab[1, :-1] = -ratio * u[1:]
        corner = -ratio * u[0]

        x0 = solve_banded((1, 0), ab, r)
        e0 = np.zeros(n)
        e0[0] = 1.0
        q = solve_banded((1, 0), ab, e0)
        denom = 1.0 + corner * q[n - 2]
        if abs(denom) < 1e-12:
            full = np.diag(ab[0]) + np.diag(ab[1, :-1], k=-1)
            full[0, n - 2] += corner
            return np.linalg.solve(full, r)
        return x0 - q * (corner * x0[n - 2] / denom)

    def step(self, state_prev: np.ndarray, param=None) -> np.ndarray:
        cfg = self.config
        u = np.array(state_prev, dtype=float)
        for _ in range(cfg.newton_max_iter):
            r = self.residual(u, state_prev)
            if np.linalg.norm(r) <= cfg.newton_tol:
                return u
            u = u - self._newton_delta(u, r)
        if np.linalg.norm(self.residual(u, state_prev)) <= cfg.newton_tol:
            return u
        raise NonConvergence(
            f"Newton stalled after {cfg.newton_max_iter} iterations "
            f"(dt={cfg.dt} may be too large)"
        )

    def solve(self, param) -> Trajectory:
        return _march(self, param)


class Burgers2D:
    """2D Burgers with essential (zero) boundary and 1/Re diffusion.

    The state stacks both velocity components, each flattened row-major over
    the (n, n) grid: state[:n*n] is the first component, state[n*n:] the
    second.
    """

    def __init__(self, config: FomConfig2D):
        self.config = config
        axis = np.linspace(config.x_min, config.x_max, config.n)
        self.X, self.Y = np.meshgrid(axis, axis, indexing="ij")
        self._interior = np.zeros((config.n, config.n), dtype=bool)
        self._interior[1:-1, 1:-1] = True

    @property
    def n_state(self) -> int:
        return 2 * self.config.n**2

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def n_steps(self) -> int:
        return self.config.n_steps

    def initial_condition(self, param) -> np.ndarray:
        a, w = _check_param(param)
        bump = a * np.exp(-(self.X**2 + self.Y**2) / (w * w))
        bump = np.where(self._interior, bump, 0.0)
        return np.concatenate([bump.reshape(-1), bump.reshape(-1)])

    def _fields(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.config.n
        u = np.asarray(state, dtype=float)
        if u.shape != (2 * n * n,):
            raise ValueError(f"state length {u.shape} != {(2 * n * n,)}")
        return u[: n * n].reshape(n, n), u[n * n :].reshape(n, n)

    def rhs(self, state: np.ndarray) -> np.ndarray:
        cfg = self.config
        u1, u2 = self._fields(state)
        h = cfg.dx
        nu = 1.0 / cfg.reynolds

        out = []
        for comp in (u1, u2):
            dx_b = np.zeros_like(comp)
            dy_b = np.zeros_like(comp)
            lap = np.zeros_like(comp)
            dx_b[1:-1, 1:-1] = (comp[1:-1, 1:-1] - comp[:-2, 1:-1]) / h
            dy_b[1:-1, 1:-1] = (comp[1:-1, 1:-1] - comp[1:-1, :-2]) / h
            lap[1:-1, 1:-1] = (
                comp[2:, 1:-1]
                + comp[:-2, 1:-1]
                + comp[1:-1, 2:]
                + comp[1:-1, :-2]
                - 4.0 * comp[1:-1, 1:-1]
            ) / (h * h)
            f = -(u1 * dx_b + u2 * dy_b) + nu * lap
            f[~self._interior] = 0.0
            out.append(f.reshape(-1))
        return np.concatenate(out)

    def residual(self, u_n, u_prev) -> np.ndarray:
        # boundary rows enforce the essential condition u = 0
        r = u_n - u_prev - self.config.dt * self.rhs(u_n)
        mask = np.concatenate([self._interior.reshape(-1)] * 2)
        return np.where(mask, r, u_n)

    def residual_norm(self, u_n, u_prev, param=None) -> float:
        return float(np.linalg.norm(self.residual(u_n, u_prev)))

    def _jacobian(self, state: np.ndarray) -> sp.csc_matrix:
        """J = I - dt*df/du over interior rows; identity on boundary rows."""
        cfg = self.config
        n = cfg.n
        h = cfg.dx
        nu = 1.0 / cfg.reynolds
        u1, u2 = self._fields(state)

        ii, jj = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
        ii, jj = ii.reshape(-1), jj.reshape(-1)
        flat = ii * n + jj
        size = n * n

        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        for comp_idx, comp in ((0, u1), (1, u2)):
            off = comp_idx * size
            dxb = (comp[ii, jj] - comp[ii - 1, jj]) / h
            dyb = (comp[ii, jj] - comp[ii, jj - 1]) / h
            # own-component advection + diffusion stencil
            own_rate = dxb if comp_idx == 0 else dyb
            diag = -u1[ii, jj] / h - u2[ii, jj] / h - 4.0 * nu / (h * h) - own_rate
            add(off + flat, off + flat, diag)
            add(off + flat, off + flat - n, u1[ii, jj] / h + nu / (h * h))
            add(off + flat, off + flat - 1, u2[ii, jj] / h + nu / (h * h))
            add(off + flat, off + flat + n, np.full(flat.size, nu / (h * h)))
            add(off + flat, off + flat + 1, np.full(flat.size, nu / (h * h)))
            # cross-component advection
            other = size if comp_idx == 0 else 0
            cross = -(dxb if comp_idx == 1 else dyb)
            add(off + flat, other + flat, cross)

        df = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * size, 2 * size),
        )
        return (sp.identity(2 * size, format="csc") - cfg.dt * df.tocsc()).tocsc()

    def step(self, state_prev: np.ndarray, param=None) -> np.ndarray:
        cfg = self.config
        u = np.array(state_prev, dtype=float)
        for _ in range(cfg.newton_max_iter):
            r = self.residual(u, state_prev)
            if np.linalg.norm(r) <= cfg.newton_tol:
                return u
            lu = splu(self._jacobian(u))
            u = u - lu.solve(r)
        if np.linalg.norm(self.residual(u, state_prev)) <= cfg.newton_tol:
            return u
        raise NonConvergence(
            f"Newton stalled after {cfg.newton_max_iter} iterations "
            f"(dt={cfg.dt} may be too large)"
        )

    def solve(self, param) -> Trajectory:
        return _march(self, param)


def _march(problem, param) -> Trajectory:
    """Backward-Euler time loop shared by both problems."""
    param = np.asarray(param, dtype=float).reshape(-1)
    n_steps = problem.n_steps
    U = np.zeros((problem.n_state, n_steps + 1))
    U_dot = np.zeros_like(U)
    U[:, 0] = problem.initial_condition(param)
    U_dot[:, 0] = problem.rhs(U[:, 0])
    for n in range(1, n_steps + 1):
        try:
            U[:, n] = problem.step(U[:, n - 1], param)
        except NonConvergence as err:
            raise NonConvergence(f"step {n}: {err}", step_index=n) from None
        U_dot[:, n] = problem.rhs(U[:, n])
    return Trajectory(snapshots=U, derivatives=U_dot, param=param, dt=problem.dt)


def save_trajectory(traj: Trajectory, stem: str | Path, config_hash: str | None = None) -> Path:
    """Write <stem>.snapshots.bin / <stem>.derivs.bin (f64le, column-major) plus
    a <stem>.json sidecar. Returns the sidecar path."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    snap_name = stem.name + ".snapshots.bin"
    deriv_name = stem.name + ".derivs.bin"
    (stem.parent / snap_name).write_bytes(
        np.asarray(traj.snapshots, dtype="<f8").tobytes(order="F")
    )
    (stem.parent / deriv_name).write_bytes(
        np.asarray(traj.derivatives, dtype="<f8").tobytes(order="F")
    )
    meta = {
        "param": [float(v) for v in traj.param],
        "dt": traj.dt,
        "n_points": traj.n_state,
        "n_steps": traj.n_steps,
        "layout": "col-major",
        "dtype": "f64le",
        "files": {"snapshots": snap_name, "derivatives": deriv_name},
    }
    if config_hash is not None:
        meta["config_hash"] = config_hash
    sidecar = stem.parent / (stem.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_trajectory(stem: str | Path, problem=None) -> Trajectory:
    """Read a trajectory written by save_trajectory.

    When `problem` is given, the stored rate columns are checked bit-for-bit
    against the problem's rhs and column 0 against its initial condition.
    """
    stem = Path(stem)
    meta = json.loads((stem.parent / (stem.name + ".json")).read_text())
    shape = (meta["n_points"], meta["n_steps"] + 1)

    def read(name):
        raw = (stem.parent / meta["files"][name]).read_bytes()
        return np.frombuffer(raw, dtype="<f8").reshape(shape, order="F").copy()

    traj = Trajectory(
        snapshots=read("snapshots"),
        derivatives=read("derivatives"),
        param=np.array(meta["param"], dtype=float),
        dt=float(meta["dt"]),
    )
    if problem is not None:
        expected_ic = problem.initial_condition(traj.param)
        if not np.array_equal(traj.snapshots[:, 0], expected_ic):
            raise ValueError("column 0 does not match the initial condition")
        for n in range(traj.n_steps + 1):
            if not np.array_equal(traj.derivatives[:, n], problem.rhs(traj.snapshots[:, n])):
                raise ValueError(f"stored rate column {n} does not match rhs")
    return traj
