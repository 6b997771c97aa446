"""Command-line front end: solve, train, heatmap and correlation workflows.

All commands are driven by a JSON run-config file with a mandatory
"version" field; unknown keys are rejected so stale configs fail loudly.
Every output file embeds the sha256 hash of the canonicalized config.

Exit codes: 0 success, 1 usage or config error, 2 full-order solver
failure, 3 optimizer divergence (a partial checkpoint is still written).

The GLASDI_CACHE environment variable, when set, names a directory used as
a content-addressed cache of full-order solutions (keyed by config hash
and parameter), which the heatmap and correlate commands reuse heavily.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import BasisLibrary
from .fom import NonConvergence, load_trajectory, save_trajectory
from .greedy import (
    DegenerateFit,
    ErrorRecord,
    TerminationCriteria,
    default_transition_count,
    estimate_max_error,
    fit_error_correlation,
    max_relative_error,
    residual_indicator,
)
from .network import LayerSpec
from .param_space import SampleSet, build_grid, random_subset
from .rom import RomModel, error_heatmap, predict
from .training import (
    TrainConfig,
    TrainingFailure,
    build_problem,
    load_checkpoint,
    save_checkpoint,
    train,
)

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """The run-config file is malformed."""


_SECTION_KEYS = {
    "grid": {"ranges", "counts"},
    "model": {"hidden", "latent_dim", "activation", "poly_order", "include_constant"},
    "training": {
        "n_up",
        "n_subset",
        "k_train",
        "tol",
        "n_mu_max",
        "n_epoch_max",
        "batch_size",
        "learning_rate",
        "zdot_weight",
        "udot_weight",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "seed",
        "n_ts",
        "normalize_distance",
        "greedy",
        "initial_indices",
    },
    "eval": {"k"},
}
_FOM_KEYS = {
    "burgers1d": {"n_points", "dt", "n_steps", "x_min", "x_max", "newton_tol", "newton_max_iter"},
    "burgers2d": {"n", "dt", "n_steps", "reynolds", "x_min", "x_max", "newton_tol", "newton_max_iter"},
}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, {"version", "grid", "fom", "model", "training", "eval"}, "config")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")
    for required in ("grid", "fom", "model"):
        if required not in cfg:
            raise ConfigError(f"config section {required!r} is required")
    _check_keys(cfg["grid"], _SECTION_KEYS["grid"], "grid")
    kind = cfg["fom"].get("kind", "burgers1d")
    if kind not in _FOM_KEYS:
        raise ConfigError(f"unknown fom kind {kind!r}")
    _check_keys(cfg["fom"], _FOM_KEYS[kind] | {"kind"}, "fom")
    _check_keys(cfg["model"], _SECTION_KEYS["model"], "model")
    _check_keys(cfg.get("training", {}), _SECTION_KEYS["training"], "training")
    _check_keys(cfg.get("eval", {}), _SECTION_KEYS["eval"], "eval")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def build_run(cfg: dict):
    """Instantiate (space, problem, layer_spec, library, train_config, eval_k)."""
    space = build_grid(
        tuple(tuple(r) for r in cfg["grid"]["ranges"]),
        tuple(cfg["grid"]["counts"]),
    )
    fom = dict(cfg["fom"])
    kind = fom.pop("kind", "burgers1d")
    problem = build_problem(kind, fom)
    model = cfg["model"]
    layer_spec = LayerSpec(
        widths=(problem.n_state, *model["hidden"], model["latent_dim"]),
        activation=model.get("activation", "tanh"),
    )
    library = BasisLibrary(
        latent_dim=model["latent_dim"],
        poly_order=model.get("poly_order", 1),
        include_constant=model.get("include_constant", True),
    )
    tr = cfg.get("training", {})
    termination = TerminationCriteria(
        tol=tr.get("tol", 0.0),
        n_mu_max=tr.get("n_mu_max", space.n_points),
        n_epoch_max=tr.get("n_epoch_max", 1000),
    )
    train_config = TrainConfig(
        termination=termination,
        n_up=tr.get("n_up", 500),
        n_subset=tr.get("n_subset", 16),
        k_train=tr.get("k_train", 1),
        batch_size=tr.get("batch_size", 256),
        learning_rate=tr.get("learning_rate", 1e-3),
        zdot_weight=tr.get("zdot_weight", 1e-2),
        udot_weight=tr.get("udot_weight", 1e-2),
        adam_beta1=tr.get("adam_beta1", 0.9),
        adam_beta2=tr.get("adam_beta2", 0.999),
        adam_eps=tr.get("adam_eps", 1e-8),
        seed=tr.get("seed", 0),
        n_ts=tr.get("n_ts"),
        normalize_distance=tr.get("normalize_distance", False),
        greedy=tr.get("greedy", True),
    )
    eval_k = cfg.get("eval", {}).get("k", 3)
    return space, problem, layer_spec, library, train_config, eval_k


@dataclass
class CachedFomSolver:
    """Content-addressed trajectory cache under GLASDI_CACHE (optional)."""

    problem: object
    cache_dir: Path | None
    key_prefix: str

    def __call__(self, coords):
        coords = np.asarray(coords, dtype=float)
        if self.cache_dir is None:
            return self.problem.solve(coords)
        digest = hashlib.sha256(
            (self.key_prefix + "|" + ",".join(repr(float(c)) for c in coords)).encode()
        ).hexdigest()
        stem = self.cache_dir / digest
        if (self.cache_dir / (digest + ".json")).exists():
            return load_trajectory(stem)
        traj = self.problem.solve(coords)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        save_trajectory(traj, stem, config_hash=self.key_prefix)
        return traj


def make_solver(problem, cfg_hash: str) -> CachedFomSolver:
    cache = os.environ.get("GLASDI_CACHE")
    return CachedFomSolver(
        problem=problem,
        cache_dir=Path(cache) if cache else None,
        key_prefix=cfg_hash,
    )


# --- output writers ---------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_loss_csv(path: Path, history: list[dict], cfg_hash: str) -> None:
    lines = [f"# config_hash={cfg_hash}", "epoch,loss,recon,zdot,udot,n_samples"]
    for row in history:
        lines.append(
            f"{row['epoch']},{_fmt(row['loss'])},{_fmt(row['recon'])},"
            f"{_fmt(row['zdot'])},{_fmt(row['udot'])},{row['n_samples']}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_audit_log(path: Path, audit: list[dict], cfg_hash: str) -> None:
    lines = [json.dumps({"config_hash": cfg_hash}, sort_keys=True)]
    for record in audit:
        lines.append(json.dumps(record, sort_keys=True))
    path.write_text("\n".join(lines) + "\n")


def write_heatmap_csv(path: Path, space, values: np.ndarray, cfg_hash: str) -> None:
    axis0 = space.axis_values(0)
    axis1 = space.axis_values(1)
    lines = [f"# config_hash={cfg_hash}"]
    lines.append(",".join([""] + [_fmt(v) for v in axis1]))
    for i, v0 in enumerate(axis0):
        cells = [_fmt(v0)] + [_fmt(values[i, j]) for j in range(len(axis1))]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _cell_color(value: float, vmax: float) -> str:
    if not np.isfinite(value):
        return "rgb(128,128,128)"
    t = 0.0 if vmax <= 0 else min(1.0, value / vmax)
    return f"rgb(255,{int(round(255 * (1 - t)))},{int(round(255 * (1 - t)))})"


def write_heatmap_svg(
    path: Path, space, values: np.ndarray, sampled_indices: list[int], cfg_hash: str
) -> None:
    """Hand-emitted SVG: one colored box per grid point with its error value,
    sampled training points outlined in black."""
    n0, n1 = space.counts
    cell = 46
    left, top = 64, 40
    width = left + n1 * cell + 10
    height = top + n0 * cell + 30
    vmax = float(np.nanmax(values)) if np.isfinite(values).any() else 1.0
    sampled = set(int(i) for i in sampled_indices)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="10">',
        f"<!-- config_hash={cfg_hash} -->",
    ]
    axis0 = space.axis_values(0)
    axis1 = space.axis_values(1)
    for j, v in enumerate(axis1):
        parts.append(
            f'<text x="{left + j * cell + cell / 2:.1f}" y="{top - 8}" '
            f'text-anchor="middle">{float(v):g}</text>'
        )
    for i, v in enumerate(axis0):
        parts.append(
            f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 3:.1f}" '
            f'text-anchor="end">{float(v):g}</text>'
        )
    for i in range(n0):
        for j in range(n1):
            x, y = left + j * cell, top + i * cell
            value = float(values[i, j])
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_cell_color(value, vmax)}" stroke="rgb(200,200,200)"/>'
            )
            label = "n/a" if not np.isfinite(value) else f"{100 * value:.1f}%"
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 3:.1f}" '
                f'text-anchor="middle">{label}</text>'
            )
    for flat in sorted(sampled):
        i, j = np.unravel_index(flat, space.counts)
        x, y = left + int(j) * cell, top + int(i) * cell
        parts.append(
            f'<rect x="{x + 1.5}" y="{y + 1.5}" width="{cell - 3}" height="{cell - 3}" '
            f'fill="none" stroke="black" stroke-width="3"/>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


# --- heatmap parallel workers ------------------------------------------------

_WORKER: dict = {}


def _worker_init(model, problem, k, solver):
    _WORKER["args"] = (model, problem, k, solver)


def _worker_cell(index: int) -> float:
    model, problem, k, solver = _WORKER["args"]
    coords = model.space.point(index)
    try:
        reference = solver(coords)
    except NonConvergence:
        return float("nan")
    return max_relative_error(reference.snapshots, predict(model, coords, k, problem))


def _heatmap_values(model, space, k, problem, solver, jobs: int) -> np.ndarray:
    if jobs <= 1:
        return error_heatmap(model, space, k, problem, fom_solver=solver).values
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_worker_init, initargs=(model, problem, k, solver)
    ) as pool:
        values = list(pool.map(_worker_cell, range(space.n_points), chunksize=4))
    return np.array(values).reshape(space.counts)


# --- commands ----------------------------------------------------------------


def _model_from_checkpoint(state):
    run_cfg = state.manifest.get("run_config") or {}
    normalize = (run_cfg.get("training") or {}).get("normalize_distance", False)
    scale = state.db.space.scales(normalize)
    return RomModel.from_database(state.db, state.mlp, state.library, scale)


def cmd_fom(args) -> int:
    cfg = load_config(args.config)
    cfg_hash = config_hash(cfg)
    _, problem, _, _, _, _ = build_run(cfg)
    coords = np.array([args.a, args.w])
    trajectory = problem.solve(coords)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"fom_a{args.a!r}_w{args.w!r}"
    sidecar = save_trajectory(trajectory, stem, config_hash=cfg_hash)
    print(f"wrote {sidecar}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    cfg_hash = config_hash(cfg)
    space, problem, layer_spec, library, train_config, _ = build_run(cfg)
    if args.seed is not None:
        tr = dict(cfg.get("training", {}))
        tr["seed"] = args.seed
        cfg = {**cfg, "training": tr}
        cfg_hash = config_hash(cfg)
        space, problem, layer_spec, library, train_config, _ = build_run(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    initial = cfg.get("training", {}).get("initial_indices")
    code = 0
    try:
        result = train(
            train_config, space, problem, layer_spec, library, initial_indices=initial
        )
    except TrainingFailure as failure:
        result = failure.partial
        code = 2 if isinstance(failure.cause, NonConvergence) else 3
        print(f"training aborted: {failure.cause}", file=sys.stderr)

    save_checkpoint(
        out_dir / "checkpoint.glasdi",
        result.db,
        result.mlp,
        result.adam,
        library=library,
        fom_config=problem.config,
        epochs_run=result.epochs_run,
        loss_weights={
            "zdot": train_config.zdot_weight,
            "udot": train_config.udot_weight,
        },
        config_hash=cfg_hash,
        run_config=cfg,
    )
    write_loss_csv(out_dir / "loss.csv", result.loss_history, cfg_hash)
    write_audit_log(out_dir / "audit.jsonl", result.audit_log, cfg_hash)
    print(
        f"epochs={result.epochs_run} samples={len(result.db)} "
        f"estimated_max_error={result.db.sampler_state.estimated_max_error!r}"
    )
    return code


def cmd_heatmap(args) -> int:
    state = load_checkpoint(args.checkpoint)
    if state.db.space.dim != 2:
        raise ConfigError("heatmap rendering expects a 2-D parameter space")
    cfg_hash = state.manifest.get("config_hash") or "unknown"
    model = _model_from_checkpoint(state)
    solver = make_solver(state.problem, cfg_hash)
    values = _heatmap_values(
        model, state.db.space, args.k, state.problem, solver, args.jobs
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_heatmap_csv(out, state.db.space, values, cfg_hash)
    if args.svg:
        write_heatmap_svg(
            Path(args.svg),
            state.db.space,
            values,
            list(state.db.sample_set),
            cfg_hash,
        )
    print(f"max_relative_error={float(np.nanmax(values))!r}")
    return 0


def cmd_correlate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    cfg_hash = state.manifest.get("config_hash") or "unknown"
    model = _model_from_checkpoint(state)
    problem = state.problem
    solver = make_solver(problem, cfg_hash)
    space = state.db.space
    run_cfg = state.manifest.get("run_config") or {}
    n_ts = (run_cfg.get("training") or {}).get("n_ts") or default_transition_count(
        problem.n_steps
    )

    chosen = random_subset(space, SampleSet(()), args.n_eval, args.seed)
    rows = []
    for index in chosen:
        coords = space.point(index)
        pred = predict(model, coords, args.k, problem)
        e_res = residual_indicator(problem, pred, coords, n_ts)
        e_max = max_relative_error(solver(coords).snapshots, pred)
        rows.append((coords, e_res, e_max))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash={cfg_hash}"]
    coord_names = [f"param{d}" for d in range(space.dim)]
    lines.append(",".join(coord_names + ["e_res", "e_max"]))
    for coords, e_res, e_max in rows:
        lines.append(
            ",".join([_fmt(c) for c in coords] + [_fmt(e_res), _fmt(e_max)])
        )
    out.write_text("\n".join(lines) + "\n")

    record = ErrorRecord(
        e_max=np.array([r[2] for r in rows]), e_res=np.array([r[1] for r in rows])
    )
    try:
        correlation = fit_error_correlation(record)
        estimate = estimate_max_error(correlation, record)
        pearson = float(np.corrcoef(record.e_res, record.e_max)[0, 1])
        print(
            f"slope={correlation.slope!r} intercept={correlation.intercept!r} "
            f"pearson_r={pearson!r} estimated_max_error={estimate!r}"
        )
    except DegenerateFit:
        fallback = float(np.max(record.e_max))
        print(f"degenerate_fit=true estimated_max_error={fallback!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glasdi",
        description="Greedy latent-space dynamics surrogate toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fom = sub.add_parser("fom", help="solve the full-order model for one parameter")
    p_fom.add_argument("--config", required=True)
    p_fom.add_argument("--a", type=float, required=True, help="initial amplitude")
    p_fom.add_argument("--w", type=float, required=True, help="initial width")
    p_fom.add_argument("--out", required=True, help="output directory")
    p_fom.set_defaults(func=cmd_fom)

    p_train = sub.add_parser("train", help="run the offline training stage")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.set_defaults(func=cmd_train)

    p_heat = sub.add_parser("heatmap", help="grid-wide max relative error")
    p_heat.add_argument("--checkpoint", required=True)
    p_heat.add_argument("--k", type=int, default=3, help="neighbors for interpolation")
    p_heat.add_argument("--out", required=True, help="CSV output path")
    p_heat.add_argument("--svg", default=None, help="optional SVG output path")
    p_heat.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p_heat.set_defaults(func=cmd_heatmap)

    p_corr = sub.add_parser("correlate", help="indicator vs true error scatter")
    p_corr.add_argument("--checkpoint", required=True)
    p_corr.add_argument("--n-eval", type=int, default=30)
    p_corr.add_argument("--seed", type=int, default=0)
    p_corr.add_argument("--k", type=int, default=3)
    p_corr.add_argument("--out", required=True, help="scatter CSV output path")
    p_corr.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NonConvergence as err:
        print(f"full-order solver failed: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
