"""Scikit-learn style estimator wrapping the full offline/online pipeline.

``fit`` runs the greedy training loop against the configured full-order
model (no external data is consumed; the solver generates it), and
``predict`` maps parameter points to predicted snapshot matrices. All
constructor arguments are stored verbatim so ``get_params`` /
``set_params`` compose with the usual tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .dynamics import BasisLibrary
from .greedy import TerminationCriteria
from .network import LayerSpec
from .param_space import build_grid
from .rom import RomModel, error_heatmap
from .rom import predict as rom_predict
from .training import TrainConfig, build_problem, train


def check_param_points(X, dim: int) -> np.ndarray:
    """Validate parameter queries as a (n_queries, dim) float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("parameter points must be finite")
    return X


class GlasdiRom(BaseEstimator):
    """Greedy latent-space dynamics surrogate for a parameterized solver.

    Parameters mirror the run-config file of the command-line tool; see the
    README for the meaning of each knob. `fom_options` is passed through to
    the full-order solver configuration for `fom_kind`.
    """

    def __init__(
        self,
        param_ranges=((0.7, 0.9), (0.9, 1.1)),
        param_counts=(11, 11),
        fom_kind="burgers1d",
        fom_options=None,
        hidden=(50,),
        latent_dim=5,
        activation="tanh",
        poly_order=1,
        include_constant=True,
        n_up=500,
        n_subset=16,
        k_train=1,
        k_eval=3,
        tol=0.0,
        n_mu_max=12,
        n_epoch_max=5000,
        batch_size=256,
        learning_rate=1e-3,
        zdot_weight=1e-2,
        udot_weight=1e-2,
        seed=0,
        n_ts=None,
        normalize_distance=False,
        greedy=True,
        initial_indices=None,
    ):
        self.param_ranges = param_ranges
        self.param_counts = param_counts
        self.fom_kind = fom_kind
        self.fom_options = fom_options
        self.hidden = hidden
        self.latent_dim = latent_dim
        self.activation = activation
        self.poly_order = poly_order
        self.include_constant = include_constant
        self.n_up = n_up
        self.n_subset = n_subset
        self.k_train = k_train
        self.k_eval = k_eval
        self.tol = tol
        self.n_mu_max = n_mu_max
        self.n_epoch_max = n_epoch_max
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.zdot_weight = zdot_weight
        self.udot_weight = udot_weight
        self.seed = seed
        self.n_ts = n_ts
        self.normalize_distance = normalize_distance
        self.greedy = greedy
        self.initial_indices = initial_indices

    def _build(self):
        space = build_grid(tuple(self.param_ranges), tuple(self.param_counts))
        problem = build_problem(self.fom_kind, dict(self.fom_options or {}))
        layer_spec = LayerSpec(
            widths=(problem.n_state, *self.hidden, self.latent_dim),
            activation=self.activation,
        )
        library = BasisLibrary(
            latent_dim=self.latent_dim,
            poly_order=self.poly_order,
            include_constant=self.include_constant,
        )
        config = TrainConfig(
            termination=TerminationCriteria(
                tol=self.tol, n_mu_max=self.n_mu_max, n_epoch_max=self.n_epoch_max
            ),
            n_up=self.n_up,
            n_subset=self.n_subset,
            k_train=self.k_train,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            zdot_weight=self.zdot_weight,
            udot_weight=self.udot_weight,
            seed=self.seed,
            n_ts=self.n_ts,
            normalize_distance=self.normalize_distance,
            greedy=self.greedy,
        )
        return space, problem, layer_spec, library, config

    def fit(self, X=None, y=None):
        """Run the offline stage; X and y are ignored (data is generated)."""
        space, problem, layer_spec, library, config = self._build()
        result = train(
            config,
            space,
            problem,
            layer_spec,
            library,
            initial_indices=self.initial_indices,
        )
        self.problem_ = problem
        self.space_ = space
        self.library_ = library
        self.result_ = result
        self.model_ = RomModel.from_database(
            result.db, result.mlp, library, space.scales(self.normalize_distance)
        )
        self.audit_log_ = result.audit_log
        self.loss_history_ = result.loss_history
        self.epochs_run_ = result.epochs_run
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() first")

    def predict(self, X, k: int | None = None) -> np.ndarray:
        """Predicted snapshot matrices for parameter points X.

        A single point returns (n_state, n_steps+1); an (n, dim) array
        returns (n, n_state, n_steps+1).
        """
        self._require_fitted()
        single = np.asarray(X).ndim == 1
        points = check_param_points(X, self.space_.dim)
        k = self.k_eval if k is None else k
        out = np.stack(
            [rom_predict(self.model_, p, k, self.problem_) for p in points]
        )
        return out[0] if single else out

    def score(self, X=None, y=None) -> float:
        """Negated worst relative error over the whole grid (higher is better)."""
        self._require_fitted()
        result = error_heatmap(self.model_, self.space_, self.k_eval, self.problem_)
        return -result.summary_max
