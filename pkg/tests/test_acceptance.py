"""Acceptance suite: one test and one printed pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`. The desk-scale training
runs (criteria 1-3) execute once as module fixtures and take a few minutes.
"""

import json

import numpy as np
import pytest

from glasdi import (
    BasisLibrary,
    Burgers1D,
    FomConfig1D,
    LayerSpec,
    MlpParams,
    RomModel,
    SamplerState,
    SampleSet,
    TerminationCriteria,
    TrainConfig,
    TrainingDatabase,
    build_grid,
    corner_indices,
    greedy_step,
    interpolate_coeffs,
    loss_and_gradients,
    max_relative_error,
    measure_speedup,
    predict,
    residual_indicator,
    shepard_weights,
    train,
)
from glasdi.cli import main as cli_main
from glasdi.greedy import default_transition_count
from glasdi.network import Batch


def report(number: int, name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number} [{name}]: {status} ({detail})")


# --- desk-scale setup (criteria 1-3, 8) --------------------------------------

DESK_SPACE = build_grid(((0.7, 0.9), (0.9, 1.1)), (11, 11))
DESK_FOM = FomConfig1D(n_points=201, dt=1 / 200, n_steps=200)
DESK_SPEC = LayerSpec((201, 50, 5))
DESK_LIB = BasisLibrary(latent_dim=5, poly_order=1)
DESK_EVAL_K = 3


def desk_config(greedy: bool, n_epoch_max: int) -> TrainConfig:
    return TrainConfig(
        termination=TerminationCriteria(tol=0.0, n_mu_max=12, n_epoch_max=n_epoch_max),
        n_up=500,
        n_subset=16,
        k_train=1,
        batch_size=256,
        learning_rate=1e-3,
        zdot_weight=1e-2,
        udot_weight=1e-2,
        seed=0,
        greedy=greedy,
    )


@pytest.fixture(scope="module")
def desk_problem():
    return Burgers1D(DESK_FOM)


@pytest.fixture(scope="module")
def fom_solutions(desk_problem):
    """Reference solves for every grid point, shared across criteria."""
    cache = {}

    def solve(index):
        if index not in cache:
            cache[index] = desk_problem.solve(DESK_SPACE.point(index))
        return cache[index]

    return solve


@pytest.fixture(scope="module")
def greedy_run(desk_problem):
    result = train(desk_config(greedy=True, n_epoch_max=5000), DESK_SPACE, desk_problem, DESK_SPEC, DESK_LIB)
    model = RomModel.from_database(result.db, result.mlp, DESK_LIB)
    return result, model


@pytest.fixture(scope="module")
def uniform_run(desk_problem, greedy_run):
    # 12 predefined samples on a uniform 4x3 lattice, trained for the same
    # number of epochs as the greedy run
    amplitude_idx = [0, 3, 7, 10]
    width_idx = [0, 5, 10]
    uniform = [a * 11 + w for a in amplitude_idx for w in width_idx]
    epochs = greedy_run[0].epochs_run
    result = train(
        desk_config(greedy=False, n_epoch_max=epochs),
        DESK_SPACE,
        desk_problem,
        DESK_SPEC,
        DESK_LIB,
        initial_indices=uniform,
    )
    model = RomModel.from_database(result.db, result.mlp, DESK_LIB)
    return result, model


def grid_errors(model, problem, solve, k):
    values = np.zeros(DESK_SPACE.n_points)
    for i in range(DESK_SPACE.n_points):
        pred = predict(model, DESK_SPACE.point(i), k, problem)
        values[i] = max_relative_error(solve(i).snapshots, pred)
    return values


def test_criterion_1_desk_accuracy(greedy_run, desk_problem, fom_solutions):
    result, model = greedy_run
    assert len(result.db) == 12
    values = grid_errors(model, desk_problem, fom_solutions, DESK_EVAL_K)
    worst = float(values.max())
    ok = worst <= 0.10
    report(1, "desk 1D accuracy", ok, f"max relative error {worst:.4f} <= 0.10, 12 samples, k=3")
    # the stated 10x loss decrease over the run
    first = result.loss_history[0]["loss"]
    last = result.loss_history[-1]["loss"]
    assert first / last >= 10.0
    assert ok


def test_criterion_2_greedy_beats_uniform(greedy_run, uniform_run, desk_problem, fom_solutions):
    _, greedy_model = greedy_run
    _, uniform_model = uniform_run
    g = float(grid_errors(greedy_model, desk_problem, fom_solutions, DESK_EVAL_K).max())
    u = float(grid_errors(uniform_model, desk_problem, fom_solutions, DESK_EVAL_K).max())
    ratio = g / u
    ok = ratio <= 1.25
    report(2, "greedy vs uniform", ok, f"greedy {g:.4f} vs uniform {u:.4f}, ratio {ratio:.3f} <= 1.25")
    assert ok


def test_criterion_3_indicator_correlation(greedy_run, desk_problem, fom_solutions):
    _, model = greedy_run
    n_ts = default_transition_count(DESK_FOM.n_steps)
    # evaluate with the training-time interpolation setting (k=1): the
    # indicator steers sampling in exactly this configuration
    e_res, e_max = [], []
    for i in range(DESK_SPACE.n_points):
        coords = DESK_SPACE.point(i)
        pred = predict(model, coords, 1, desk_problem)
        e_res.append(residual_indicator(desk_problem, pred, coords, n_ts))
        e_max.append(max_relative_error(fom_solutions(i).snapshots, pred))
    r = float(np.corrcoef(e_res, e_max)[0, 1])
    ok = r > 0.5
    report(3, "indicator correlation", ok, f"pearson r {r:.3f} > 0.5 over {len(e_res)} parameters")
    assert ok


def test_criterion_4_gradient_exactness():
    params = MlpParams.initialize(LayerSpec((10, 7, 3)), seed=4)
    lib = BasisLibrary(latent_dim=3, poly_order=1)
    rng = np.random.default_rng(5)
    coeffs = [0.2 * rng.normal(size=(lib.n_features, 3)) for _ in range(2)]
    batch = Batch(
        u=rng.normal(size=(12, 10)),
        u_dot=rng.normal(size=(12, 10)),
        sample_pos=np.repeat([0, 1], 6),
    )

    def loss():
        value, _, _ = loss_and_gradients(params, coeffs, batch, lib, 0.01, 0.01)
        return value

    _, _, grads = loss_and_gradients(params, coeffs, batch, lib, 0.01, 0.01)
    tensors = dict(params.to_dict())
    tensors["xi.0"], tensors["xi.1"] = coeffs
    checked = 0
    worst = 0.0
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        analytic = grads[name].reshape(-1)
        for j in range(flat.size):
            h = 1e-6 * max(1.0, abs(flat[j]))
            old = flat[j]
            flat[j] = old + h
            up = loss()
            flat[j] = old - h
            down = loss()
            flat[j] = old
            fd = (up - down) / (2 * h)
            rel = abs(fd - analytic[j]) / max(abs(fd), abs(analytic[j]), 1e-7)
            worst = max(worst, rel)
            checked += 1
    ok = worst < 1e-5
    report(4, "gradient exactness", ok, f"{checked} parameters, worst relative error {worst:.2e} < 1e-5")
    assert ok


def test_criterion_5_interpolation_suite():
    rng = np.random.default_rng(6)
    space = build_grid(((0.0, 1.0), (0.0, 1.0)), (13, 13))
    worst_unity = 0.0
    n_cases = 10_000
    for case in range(n_cases):
        k = int(rng.integers(1, 9))
        n_sampled = int(rng.integers(k, 20))
        sampled = SampleSet(
            tuple(int(i) for i in rng.choice(space.n_points, size=n_sampled, replace=False))
        )
        coeffs = [rng.normal(size=(3, 2)) for _ in sampled]
        if case % 4 == 0:  # exact reproduction at a sample point
            query = space.point(list(sampled)[int(rng.integers(n_sampled))])
        else:
            query = rng.uniform(size=2)
        weights = shepard_weights(query, space.points[list(sampled)][:k])
        worst_unity = max(worst_unity, abs(float(np.sum(weights.weights)) - 1.0))
        assert np.all(weights.weights >= 0.0)
        out = interpolate_coeffs(query, space, sampled, coeffs, k)
        stacked = np.stack(coeffs)
        assert np.all(out <= stacked.max(axis=0) + 1e-12)
        assert np.all(out >= stacked.min(axis=0) - 1e-12)
        if case % 4 == 0:
            pos = list(sampled).index(
                min(
                    sampled,
                    key=lambda g: (float(np.sum((space.point(g) - query) ** 2)), g),
                )
            )
            np.testing.assert_array_equal(out, coeffs[pos])
    ok = worst_unity <= 1e-12
    report(5, "interpolation suite", ok, f"{n_cases} cases, worst unity defect {worst_unity:.2e} <= 1e-12")
    assert ok


def test_criterion_6_fom_correctness():
    prob = Burgers1D(DESK_FOM)
    coarse = prob.solve([0.7, 0.9])
    fine = Burgers1D(FomConfig1D(n_points=201, dt=1 / 400, n_steps=400)).solve([0.7, 0.9])
    conv = float(
        np.linalg.norm(coarse.snapshots[:, -1] - fine.snapshots[:, -1])
        / np.linalg.norm(fine.snapshots[:, -1])
    )

    const = np.full(201, 0.42)
    fixed = float(np.linalg.norm(prob.step(const) - const))

    worst_res = 0.0
    for n in range(1, coarse.n_steps + 1):
        worst_res = max(
            worst_res,
            prob.residual_norm(coarse.snapshots[:, n], coarse.snapshots[:, n - 1]),
        )
    ok = conv <= 2e-2 and fixed <= 1e-12 and worst_res <= 1e-9
    report(
        6,
        "FOM correctness",
        ok,
        f"self-convergence {conv:.3e} <= 2e-2, constant drift {fixed:.1e}, worst residual {worst_res:.2e} <= 1e-9",
    )
    assert ok


# --- criterion 7: greedy trace against an independent reference --------------


def reference_greedy_trace(space, problem, mlp, library, initial, initial_coeffs, n_events, tol, n_subset, rng_seed, k_train=1):
    """Plain re-implementation of the sampling loop used as the trace oracle.

    Subset draws follow the documented contract (default_rng(seed + iter)
    choice over ascending unsampled indices); selection, warm start, error
    regression, estimate, and level doubling are re-derived with basic numpy.
    """
    n_ts = default_transition_count(problem.n_steps)
    sampled = list(initial)
    coeffs = {g: initial_coeffs[p].copy() for p, g in enumerate(initial)}
    trajectories = {g: problem.solve(space.point(g)) for g in sampled}
    level, subset_size, iteration = 1, n_subset, 1
    trace = []

    def knn(query, pool, k):
        d2 = [(float(np.sum((space.point(g) - query) ** 2)), g) for g in pool]
        return [g for _, g in sorted(d2)[:k]]

    def rom_prediction(coords):
        neighbors = knn(coords, sampled, min(k_train, len(sampled)))
        if len(neighbors) == 1:
            xi = coeffs[neighbors[0]]
        else:
            pts = np.array([space.point(g) for g in neighbors])
            d2 = np.sum((pts - coords) ** 2, axis=1)
            phi = 1.0 / d2
            xi = sum(
                (w * coeffs[g] for g, w in zip(neighbors, phi / phi.sum())),
                start=np.zeros_like(coeffs[neighbors[0]]),
            )
        frozen = RomModel(
            space=space,
            sample_set=SampleSet((sampled[0],)),
            coeffs=[xi],
            mlp=mlp,
            library=library,
        )
        return predict(frozen, coords, 1, problem)

    def indicator(U, coords):
        total = 0.0
        for n in range(1, n_ts + 1):
            total += problem.residual_norm(U[:, n], U[:, n - 1], coords)
        return total / n_ts

    for _ in range(n_events):
        candidates = sorted(set(range(space.n_points)) - set(sampled))
        size = min(subset_size, len(candidates))
        draw = np.random.default_rng(rng_seed + iteration).choice(
            np.array(candidates), size=size, replace=False
        )
        scored = []
        for g in draw:
            coords = space.point(int(g))
            scored.append((indicator(rom_prediction(coords), coords), int(g)))
        best_score = max(s for s, _ in scored)
        chosen = min(g for s, g in scored if s == best_score)

        used_level, used_size = level, size
        trajectories[chosen] = problem.solve(space.point(chosen))
        nearest = knn(space.point(chosen), sampled, 1)[0]
        coeffs[chosen] = coeffs[nearest].copy()
        sampled.append(chosen)

        e_res, e_max = [], []
        for g in sampled:
            U = rom_prediction(space.point(g))
            ref = trajectories[g].snapshots
            diff = np.linalg.norm(ref[:, 1:] - U[:, 1:], axis=0)
            e_max.append(float(np.max(diff / np.linalg.norm(ref[:, 1:], axis=0))))
            e_res.append(indicator(U, space.point(g)))
        x, y = np.array(e_res), np.array(e_max)
        if np.ptp(x) == 0:
            estimate = float(np.max(y))
        else:
            slope, intercept = np.polyfit(x, y, 1)
            estimate = float(slope * np.max(x) + intercept)

        converged = False
        if tol > 0.0 and estimate <= tol:
            if level == 1:
                subset_size *= 2
                level = 2
            else:
                converged = True
        trace.append(
            {
                "iter": iteration,
                "chosen": chosen,
                "subset_size": used_size,
                "level": used_level,
                "estimate": estimate,
                "converged": converged,
            }
        )
        iteration += 1
        if converged:
            break
    return trace


def run_greedy_trace(space, problem, mlp, library, initial, initial_coeffs, n_events, tol, n_subset, rng_seed):
    db = TrainingDatabase(
        space=space,
        sample_set=SampleSet(tuple(initial)),
        trajectories=[problem.solve(space.point(g)) for g in initial],
        coeffs=[c.copy() for c in initial_coeffs],
        sampler_state=SamplerState(subset_size=n_subset, rng_seed=rng_seed),
    )
    n_ts = default_transition_count(problem.n_steps)

    def predictor(coords):
        model = RomModel.from_database(db, mlp, library)
        return predict(model, coords, 1, problem)

    trace = []
    for _ in range(n_events):
        audit, converged = greedy_step(db, problem, predictor, tol, n_ts)
        chosen = db.sample_set.indices[-1]
        trace.append(
            {
                "iter": audit["iter"],
                "chosen": int(chosen),
                "subset_size": audit["subset_size"],
                "level": audit["level"],
                "estimate": audit["e_v_max"],
                "converged": converged,
            }
        )
        if converged:
            break
    return trace


def compare_traces(got, expected):
    assert len(got) == len(expected)
    for g, e in zip(got, expected):
        assert g["iter"] == e["iter"]
        assert g["chosen"] == e["chosen"]
        assert g["subset_size"] == e["subset_size"]
        assert g["level"] == e["level"]
        assert g["converged"] == e["converged"]
        assert g["estimate"] == pytest.approx(e["estimate"], rel=1e-9, abs=1e-12)


def test_criterion_7_greedy_trace_oracle():
    space = build_grid(((0.7, 0.9), (0.9, 1.1)), (5, 5))
    problem = Burgers1D(FomConfig1D(n_points=31, dt=1 / 40, n_steps=2))
    library = BasisLibrary(latent_dim=3, poly_order=1)
    mlp = MlpParams.initialize(LayerSpec((31, 10, 3)), seed=11)
    initial = list(corner_indices(space))
    rng = np.random.default_rng(12)
    initial_coeffs = [0.05 * rng.normal(size=(library.n_features, 3)) for _ in initial]

    args = (space, problem, mlp, library, initial, initial_coeffs)
    # sustained sampling without tolerance: five selection events
    got_a = run_greedy_trace(*args, n_events=5, tol=0.0, n_subset=6, rng_seed=17)
    ref_a = reference_greedy_trace(*args, n_events=5, tol=0.0, n_subset=6, rng_seed=17)
    compare_traces(got_a, ref_a)
    # permissive tolerance: level doubles at the first event, converges at the second
    got_b = run_greedy_trace(*args, n_events=5, tol=1e9, n_subset=6, rng_seed=23)
    ref_b = reference_greedy_trace(*args, n_events=5, tol=1e9, n_subset=6, rng_seed=23)
    compare_traces(got_b, ref_b)
    assert [t["subset_size"] for t in got_b] == [6, 12]
    assert [t["level"] for t in got_b] == [1, 2]
    assert got_b[-1]["converged"]
    picks = [t["chosen"] for t in got_a]
    report(
        7,
        "greedy trace oracle",
        True,
        f"5-event trace {picks} and doubling schedule match the reference exactly",
    )


def test_criterion_8_speedup(greedy_run, desk_problem):
    _, model = greedy_run
    result = measure_speedup(model, np.array([0.79, 1.01]), DESK_EVAL_K, desk_problem, repetitions=5)
    ok = result.ratio >= 10.0
    report(
        8,
        "speedup",
        ok,
        f"FOM {1e3 * result.t_fom:.1f} ms vs ROM {1e3 * result.t_rom:.2f} ms, ratio {result.ratio:.0f}x >= 10x",
    )
    assert ok


def test_criterion_9_deterministic_runs(tmp_path):
    config = {
        "version": 1,
        "grid": {"ranges": [[0.7, 0.9], [0.9, 1.1]], "counts": [5, 5]},
        "fom": {"kind": "burgers1d", "n_points": 31, "dt": 0.025, "n_steps": 40},
        "model": {"hidden": [12], "latent_dim": 3},
        "training": {
            "n_up": 20,
            "n_subset": 5,
            "n_mu_max": 7,
            "n_epoch_max": 200,
            "batch_size": 64,
            "seed": 9,
        },
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert cli_main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        outs.append(out)
    ckpt_same = (outs[0] / "checkpoint.glasdi").read_bytes() == (outs[1] / "checkpoint.glasdi").read_bytes()
    audit_same = (outs[0] / "audit.jsonl").read_bytes() == (outs[1] / "audit.jsonl").read_bytes()
    ok = ckpt_same and audit_same
    report(9, "determinism", ok, f"checkpoint bytes identical: {ckpt_same}, audit bytes identical: {audit_same}")
    assert ok
