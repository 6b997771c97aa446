import numpy as np
import pytest
from sklearn.base import clone

from glasdi.estimator import GlasdiRom, check_param_points

MINI = dict(
    param_ranges=((0.7, 0.9), (0.9, 1.1)),
    param_counts=(5, 5),
    fom_options={"n_points": 31, "dt": 1 / 40, "n_steps": 40},
    hidden=(12,),
    latent_dim=3,
    n_up=20,
    n_subset=5,
    n_mu_max=6,
    n_epoch_max=60,
    batch_size=64,
    seed=3,
)


@pytest.fixture(scope="module")
def fitted():
    return GlasdiRom(**MINI).fit()


class TestSklearnApi:
    def test_get_params_round_trip(self):
        est = GlasdiRom(**MINI)
        params = est.get_params()
        assert params["latent_dim"] == 3
        est2 = GlasdiRom().set_params(**params)
        assert est2.get_params() == params

    def test_clone(self):
        est = GlasdiRom(**MINI)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(RuntimeError):
            GlasdiRom(**MINI).predict([0.8, 1.0])

    def test_fit_returns_self_and_sets_state(self, fitted):
        assert hasattr(fitted, "model_")
        assert len(fitted.result_.db) == 6
        assert fitted.epochs_run_ == 60
        assert len(fitted.audit_log_) == 2

    def test_predict_shapes(self, fitted):
        single = fitted.predict(np.array([0.8, 1.0]))
        assert single.shape == (31, 41)
        batch = fitted.predict(np.array([[0.8, 1.0], [0.7, 0.9]]))
        assert batch.shape == (2, 31, 41)
        np.testing.assert_array_equal(batch[0], single)

    def test_predict_validates_points(self, fitted):
        with pytest.raises(ValueError):
            fitted.predict(np.array([0.8]))
        with pytest.raises(ValueError):
            fitted.predict(np.array([[0.8, 1.0, 2.0]]))
        with pytest.raises(ValueError):
            fitted.predict(np.array([np.nan, 1.0]))

    def test_score_is_negative_worst_error(self, fitted):
        from glasdi import error_heatmap

        score = fitted.score()
        assert score < 0
        expected = error_heatmap(
            fitted.model_, fitted.space_, fitted.k_eval, fitted.problem_
        ).summary_max
        assert -score == pytest.approx(expected)


class TestValidationHelper:
    def test_single_point_promoted(self):
        out = check_param_points([0.5, 0.6], 2)
        assert out.shape == (1, 2)

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            check_param_points([[0.5, 0.6, 0.7]], 2)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            check_param_points([np.inf, 0.0], 2)
