"""Offline training: interleaved optimization and greedy sampling.

One epoch is a full shuffled pass over the pooled time columns of every
sampled trajectory, so the loss scale stays comparable as the database
grows. Every `n_up` epochs a greedy sampling event adds one parameter until
the sample budget `n_mu_max` is full; optimization then continues on the
final database. Training stops when the error estimate meets the tolerance
at subset level 2 or when the epoch budget runs out. Fixed seeds make
entire runs reproducible bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import BasisLibrary
from .fom import Burgers1D, Burgers2D, FomConfig1D, FomConfig2D, NonConvergence, Trajectory
from .greedy import (
    SamplerState,
    TerminationCriteria,
    TrainingDatabase,
    default_transition_count,
    greedy_step,
)
from .network import (
    AdamState,
    Batch,
    LayerSpec,
    MlpParams,
    NonFiniteLoss,
    adam_step,
    loss_and_gradients,
)
from .param_space import DiscreteParamSpace, SampleSet, build_grid, corner_indices
from .rom import LatentBlowup, RomModel, predict

CHECKPOINT_MAGIC = b"GLSDCKPT"
CHECKPOINT_VERSION = 1


class CheckpointFormatError(RuntimeError):
    """The checkpoint file is truncated or not a checkpoint at all."""


class VersionMismatch(RuntimeError):
    """The checkpoint was written by an incompatible format version."""


class TrainingFailure(RuntimeError):
    """Training aborted; carries the state reached so far for salvaging."""

    def __init__(self, cause: BaseException, partial: "TrainResult"):
        super().__init__(f"training aborted: {cause}")
        self.cause = cause
        self.partial = partial


@dataclass(frozen=True)
class TrainConfig:
    termination: TerminationCriteria
    n_up: int = 500
    n_subset: int = 16
    k_train: int = 1
    batch_size: int = 256
    learning_rate: float = 1e-3
    zdot_weight: float = 1e-2
    udot_weight: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    n_ts: int | None = None
    normalize_distance: bool = False
    greedy: bool = True  # False trains on a fixed predefined sample set

    def __post_init__(self):
        if self.n_up < 1:
            raise ValueError("n_up must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.k_train < 1:
            raise ValueError("k_train must be >= 1")


@dataclass
class TrainResult:
    db: TrainingDatabase
    mlp: MlpParams
    adam: AdamState
    audit_log: list[dict]
    loss_history: list[dict]
    epochs_run: int


def _build_pool(db: TrainingDatabase):
    u = np.concatenate([t.snapshots.T for t in db.trajectories], axis=0)
    u_dot = np.concatenate([t.derivatives.T for t in db.trajectories], axis=0)
    pos = np.concatenate(
        [
            np.full(t.snapshots.shape[1], p, dtype=int)
            for p, t in enumerate(db.trajectories)
        ]
    )
    return u, u_dot, pos


def train(
    config: TrainConfig,
    space: DiscreteParamSpace,
    problem,
    layer_spec: LayerSpec,
    library: BasisLibrary,
    initial_indices: list[int] | None = None,
) -> TrainResult:
    """Run the full offline stage and return the trained model and database.

    The database starts from `initial_indices` (default: the grid corners)
    with zero coefficient matrices. Deterministic for a fixed config.
    """
    if layer_spec.n_input != problem.n_state:
        raise ValueError(
            f"encoder input width {layer_spec.n_input} != state size {problem.n_state}"
        )
    if layer_spec.latent_dim != library.latent_dim:
        raise ValueError("layer spec and library disagree on the latent dimension")

    term = config.termination
    init_seed, shuffle_seed, sampler_seed = (
        int(s) for s in np.random.SeedSequence(config.seed).generate_state(3)
    )
    mlp = MlpParams.initialize(layer_spec, init_seed)

    if initial_indices is None:
        sample_set = corner_indices(space)
    else:
        sample_set = SampleSet(tuple(int(i) for i in initial_indices))
    db = TrainingDatabase(
        space=space,
        sample_set=sample_set,
        trajectories=[problem.solve(space.point(i)) for i in sample_set],
        coeffs=[library.zero_coeffs() for _ in sample_set],
        sampler_state=SamplerState(subset_size=config.n_subset, rng_seed=sampler_seed),
    )

    scale = space.scales(config.normalize_distance)
    n_ts = config.n_ts if config.n_ts is not None else default_transition_count(problem.n_steps)
    adam = AdamState(
        learning_rate=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )
    params = mlp.to_dict()
    for p, xi in enumerate(db.coeffs):
        params[f"xi.{p}"] = xi

    def predict_current(coords):
        model = RomModel.from_database(db, mlp, library, scale)
        return predict(model, coords, min(config.k_train, len(db)), problem)

    shuffle_rng = np.random.default_rng(shuffle_seed)
    pool_u, pool_udot, pool_pos = _build_pool(db)
    audit_log: list[dict] = []
    loss_history: list[dict] = []
    epochs_run = 0

    def snapshot(epoch: int) -> TrainResult:
        return TrainResult(
            db=db,
            mlp=mlp,
            adam=adam,
            audit_log=audit_log,
            loss_history=loss_history,
            epochs_run=epoch,
        )

    for epoch in range(1, term.n_epoch_max + 1):
        epochs_run = epoch
        perm = shuffle_rng.permutation(len(pool_pos))
        totals = np.zeros(4)
        try:
            for lo in range(0, len(perm), config.batch_size):
                sel = perm[lo : lo + config.batch_size]
                batch = Batch(
                    u=pool_u[sel], u_dot=pool_udot[sel], sample_pos=pool_pos[sel]
                )
                loss, parts, grads = loss_and_gradients(
                    mlp, db.coeffs, batch, library, config.zdot_weight, config.udot_weight
                )
                adam_step(adam, params, grads)
                totals += len(sel) * np.array(
                    [loss, parts["recon"], parts["zdot"], parts["udot"]]
                )
        except NonFiniteLoss as err:
            raise TrainingFailure(err, snapshot(epoch)) from err
        totals /= len(perm)
        loss_history.append(
            {
                "epoch": epoch,
                "loss": totals[0],
                "recon": totals[1],
                "zdot": totals[2],
                "udot": totals[3],
                "n_samples": len(db),
            }
        )

        # the sample budget caps sampling, not training: once the database
        # holds n_mu_max parameters the run keeps optimizing them until the
        # epoch budget (or the tolerance criterion) ends it
        if config.greedy and epoch % config.n_up == 0 and len(db) < term.n_mu_max:
            try:
                audit, converged = greedy_step(
                    db,
                    problem,
                    predict_current,
                    term.tol,
                    n_ts,
                    warm_start_k=config.k_train,
                    scale=scale,
                )
            except (NonConvergence, LatentBlowup) as err:
                raise TrainingFailure(err, snapshot(epoch)) from err
            params[f"xi.{len(db) - 1}"] = db.coeffs[-1]
            pool_u, pool_udot, pool_pos = _build_pool(db)
            audit_log.append(audit)
            if converged:
                break

    return snapshot(epochs_run)


_FOM_KINDS = {
    FomConfig1D: ("burgers1d", Burgers1D),
    FomConfig2D: ("burgers2d", Burgers2D),
}


def build_problem(kind: str, fom_config: dict):
    if kind == "burgers1d":
        return Burgers1D(FomConfig1D(**fom_config))
    if kind == "burgers2d":
        return Burgers2D(FomConfig2D(**fom_config))
    raise ValueError(f"unknown full-order model kind {kind!r}")


def save_checkpoint(
    path: str | Path,
    db: TrainingDatabase,
    mlp: MlpParams,
    adam: AdamState,
    *,
    library: BasisLibrary,
    fom_config,
    epochs_run: int = 0,
    loss_weights: dict | None = None,
    config_hash: str | None = None,
    run_config: dict | None = None,
) -> Path:
    """Serialize the full training state: JSON manifest + f64le tensor blob.

    Written atomically (temp file, then rename). The same bytes come back
    from save(load(path)) -- dict orders are pinned by the manifest.
    """
    path = Path(path)
    kind = None
    for cfg_type, (name, _) in _FOM_KINDS.items():
        if isinstance(fom_config, cfg_type):
            kind = name
    if kind is None:
        raise ValueError(f"unsupported fom config type {type(fom_config)}")

    tensors: list[tuple[str, np.ndarray]] = []
    for name, arr in mlp.to_dict().items():
        tensors.append((name, arr))
    for p, xi in enumerate(db.coeffs):
        tensors.append((f"xi.{p}", xi))
    for key in adam.m:
        tensors.append((f"adam.m.{key}", adam.m[key]))
    for key in adam.v:
        tensors.append((f"adam.v.{key}", adam.v[key]))
    for p, traj in enumerate(db.trajectories):
        tensors.append((f"traj.{p}.snapshots", traj.snapshots))
        tensors.append((f"traj.{p}.derivs", traj.derivatives))

    state = db.sampler_state
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "run_config": run_config,
        "layer": {"widths": list(mlp.spec.widths), "activation": mlp.spec.activation},
        "library": {
            "latent_dim": library.latent_dim,
            "poly_order": library.poly_order,
            "include_constant": library.include_constant,
        },
        "space": {
            "ranges": [list(r) for r in db.space.ranges],
            "counts": list(db.space.counts),
        },
        "fom": {"kind": kind, "config": asdict(fom_config)},
        "loss_weights": loss_weights,
        "adam": {
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "t": dict(adam.t),
        },
        "sampler": {
            "subset_size": state.subset_size,
            "rng_seed": state.rng_seed,
            "level": state.level,
            "iteration": state.iteration,
            "estimated_max_error": state.estimated_max_error,
        },
        "samples": {
            "indices": [int(i) for i in db.sample_set],
            "params": [[float(v) for v in traj.param] for traj in db.trajectories],
            "dt": [traj.dt for traj in db.trajectories],
        },
        "epochs_run": epochs_run,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode()

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for _, arr in tensors:
            fh.write(np.asarray(arr, dtype="<f8").tobytes(order="C"))
    os.replace(tmp, path)
    return path


@dataclass
class CheckpointState:
    db: TrainingDatabase
    mlp: MlpParams
    adam: AdamState
    library: BasisLibrary
    problem: object
    fom_config: object
    manifest: dict = field(repr=False)


def load_checkpoint(path: str | Path) -> CheckpointState:
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8 or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointFormatError("not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    (manifest_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if len(raw) < offset + manifest_len:
        raise CheckpointFormatError("truncated manifest")
    manifest = json.loads(raw[offset : offset + manifest_len].decode())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {manifest.get('version')} != {CHECKPOINT_VERSION}"
        )
    offset += manifest_len

    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(raw) < offset + nbytes:
            raise CheckpointFormatError(f"truncated tensor {entry['name']}")
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise CheckpointFormatError("trailing bytes after tensor blob")

    spec = LayerSpec(
        widths=tuple(manifest["layer"]["widths"]),
        activation=manifest["layer"]["activation"],
    )
    n_layers = len(spec.widths) - 1
    mlp = MlpParams(
        spec=spec,
        enc_weights=[arrays[f"enc.{l}.w"] for l in range(n_layers)],
        enc_biases=[arrays[f"enc.{l}.b"] for l in range(n_layers)],
        dec_weights=[arrays[f"dec.{l}.w"] for l in range(n_layers)],
        dec_biases=[arrays[f"dec.{l}.b"] for l in range(n_layers)],
    )
    library = BasisLibrary(**manifest["library"])
    space = build_grid(
        tuple(tuple(r) for r in manifest["space"]["ranges"]),
        tuple(manifest["space"]["counts"]),
    )
    fom_kind = manifest["fom"]["kind"]
    problem = build_problem(fom_kind, manifest["fom"]["config"])
    fom_config = problem.config

    sampler = manifest["sampler"]
    indices = manifest["samples"]["indices"]
    trajectories = [
        Trajectory(
            snapshots=arrays[f"traj.{p}.snapshots"],
            derivatives=arrays[f"traj.{p}.derivs"],
            param=np.array(manifest["samples"]["params"][p]),
            dt=float(manifest["samples"]["dt"][p]),
        )
        for p in range(len(indices))
    ]
    db = TrainingDatabase(
        space=space,
        sample_set=SampleSet(tuple(indices)),
        trajectories=trajectories,
        coeffs=[arrays[f"xi.{p}"] for p in range(len(indices))],
        sampler_state=SamplerState(
            subset_size=int(sampler["subset_size"]),
            rng_seed=int(sampler["rng_seed"]),
            level=int(sampler["level"]),
            iteration=int(sampler["iteration"]),
            estimated_max_error=float(sampler["estimated_max_error"]),
        ),
    )
    adam = AdamState(
        learning_rate=manifest["adam"]["learning_rate"],
        beta1=manifest["adam"]["beta1"],
        beta2=manifest["adam"]["beta2"],
        eps=manifest["adam"]["eps"],
        m={k[len("adam.m.") :]: v for k, v in arrays.items() if k.startswith("adam.m.")},
        v={k[len("adam.v.") :]: v for k, v in arrays.items() if k.startswith("adam.v.")},
        t={k: int(v) for k, v in manifest["adam"]["t"].items()},
    )
    return CheckpointState(
        db=db,
        mlp=mlp,
        adam=adam,
        library=library,
        problem=problem,
        fom_config=fom_config,
        manifest=manifest,
    )
