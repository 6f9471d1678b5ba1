"""Losses, physics terms, analytic gradients, Adam training, and the
two-phase constrained scheme."""

import math

import numpy as np
import pytest

from pwlopt.cases import make_blending_dataset, make_cdu_dataset, make_column_dataset
from pwlopt.network import Dataset, IDENTITY, NetworkParams, Scaler, TANH
from pwlopt.physics import (BlendingComponentBalance, CduMassBalance,
                            ColumnMassBalance, SchemaMismatchError)
from pwlopt.training import (
    ConstrainedPhaseConfig, TrainingConfig, TrainingDivergedError, gradient,
    init_params, mse_loss, physics_eval, train, train_constrained,
)


def constant_prediction_dataset(u_raw, y_raw_pred, y_raw_true, u_box, y_box):
    """Dataset plus params whose identity-output network always predicts the
    normalized image of y_raw_pred, regardless of the input."""
    u_raw = np.atleast_2d(np.asarray(u_raw, float))
    y_true = np.atleast_2d(np.asarray(y_raw_true, float))
    if y_true.shape[0] == 1 and u_raw.shape[0] > 1:
        y_true = np.tile(y_true, (u_raw.shape[0], 1))
    su = Scaler(np.array([b[0] for b in u_box]), np.array([b[1] for b in u_box]))
    sy = Scaler(np.array([b[0] for b in y_box]), np.array([b[1] for b in y_box]))
    n = u_raw.shape[0]
    data = Dataset(su.to_normalized(u_raw), sy.to_normalized(y_true), su, sy,
                   np.arange(n), np.arange(n, n),
                   tuple(f"u{i}" for i in range(u_raw.shape[1])),
                   tuple(f"y{i}" for i in range(y_true.shape[1])))
    n_out = y_true.shape[1]
    target_norm = sy.to_normalized(np.atleast_2d(np.asarray(y_raw_pred, float)))[0]
    params = NetworkParams(np.zeros((n_out, 1)), np.zeros((1, u_raw.shape[1])),
                           np.zeros(1), target_norm, TANH, IDENTITY)
    return data, params


class TestMseLoss:
    def test_zero_at_perfect_fit(self):
        data, params = constant_prediction_dataset(
            [[0.2, 0.8, 10.0, 10.0]], [0.5, 20.0], [[0.5, 20.0]],
            [(0.1, 0.5), (0.5, 1.0), (0, 50), (0, 50)], [(0.1, 1.0), (0, 100)])
        assert mse_loss(params, data, "train") == 0.0

    def test_single_residual(self):
        # one sample, one output, prediction off by 0.5 in normalized units
        data, params = constant_prediction_dataset(
            [[0.0]], [[0.25]], [[0.0]], [(-1, 1)], [(-1, 1)])
        assert mse_loss(params, data, "train") == pytest.approx(0.25 ** 2)

    def test_mean_over_samples(self):
        data, params = constant_prediction_dataset(
            [[0.0], [0.0]], [[0.0]], [[0.1], [0.3]], [(-1, 1)], [(-1, 1)])
        assert mse_loss(params, data, "train") == pytest.approx((0.01 + 0.09) / 2)

    def test_empty_subset_errors(self):
        data, params = constant_prediction_dataset(
            [[0.0]], [[0.0]], [[0.0]], [(-1, 1)], [(-1, 1)])
        with pytest.raises(ValueError):
            mse_loss(params, data, "test")


class TestPhysicsTerms:
    BOX_U = [(0.1, 0.5), (0.5, 1.0), (0.0, 50.0), (0.0, 50.0)]
    BOX_Y = [(0.1, 1.0), (0.0, 100.0)]

    def test_blending_balanced_sample_is_zero(self):
        data, params = constant_prediction_dataset(
            [[0.2, 0.8, 10.0, 10.0]], [0.5, 20.0], [[0.5, 20.0]], self.BOX_U, self.BOX_Y)
        term = BlendingComponentBalance()
        assert physics_eval(term, params, data) == pytest.approx(0.0, abs=1e-18)

    def test_blending_hand_value(self):
        # prediction x=0.6, w=20 against inputs balancing to 10: (12 - 10)^2 = 4
        data, params = constant_prediction_dataset(
            [[0.2, 0.8, 10.0, 10.0]], [0.6, 20.0], [[0.5, 20.0]], self.BOX_U, self.BOX_Y)
        assert physics_eval(BlendingComponentBalance(), params, data) == pytest.approx(4.0)

    def test_blending_sums_over_samples(self):
        data, params = constant_prediction_dataset(
            [[0.2, 0.8, 10.0, 10.0]] * 3, [0.6, 20.0], [[0.5, 20.0]],
            self.BOX_U, self.BOX_Y)
        assert physics_eval(BlendingComponentBalance(), params, data) == pytest.approx(12.0)

    def test_cdu_exact_balance_is_zero(self):
        # six predicted flows summing exactly to the crude feed
        u_box = [(50, 100)] + [(0, 700)] * 5
        y_box = [(0, 30)] * 6
        data, params = constant_prediction_dataset(
            [[60.0, 1, 2, 3, 4, 5]], [10.0] * 6, [[10.0] * 6], u_box, y_box)
        assert physics_eval(CduMassBalance(), params, data) == pytest.approx(0.0, abs=1e-12)

    def test_cdu_root_of_squared_residuals(self):
        u_box = [(50, 100)] + [(0, 700)] * 5
        y_box = [(0, 30)] * 6
        data, params = constant_prediction_dataset(
            [[63.0, 0, 0, 0, 0, 0], [66.0, 0, 0, 0, 0, 0]],
            [10.0] * 6, [[10.0] * 6], u_box, y_box)
        # residuals 3 and 6 against the 60 predicted total
        assert physics_eval(CduMassBalance(), params, data) == pytest.approx(
            math.sqrt(9.0 + 36.0))

    def test_column_mean_squared_and_signed_variant(self):
        u_box = [(50, 200)] + [(0, 30)] * 6
        y_box = [(0, 100)]
        rows = [[100.0, 5, 5, 5, 5, 5, 5], [100.0, 5, 5, 5, 5, 5, 5]]
        data, params = constant_prediction_dataset(rows, [60.0], [[70.0]], u_box, y_box)
        # residual per sample: 100 - 30 - 60 = 10
        assert physics_eval(ColumnMassBalance(), params, data) == pytest.approx(100.0)
        assert physics_eval(ColumnMassBalance(signed=True), params, data) == pytest.approx(10.0)

    def test_schema_mismatch(self):
        data, params = constant_prediction_dataset(
            [[0.0]], [[0.0]], [[0.0]], [(-1, 1)], [(-1, 1)])
        with pytest.raises(SchemaMismatchError):
            physics_eval(BlendingComponentBalance(), params, data)


def finite_difference(params, data, loss_fn, h=1e-6):
    grads = {}
    for name in "ABCD":
        base = getattr(params, name)
        g = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            for sign in (+1, -1):
                arr = base.copy()
                arr[idx] += sign * h
                kwargs = {n: getattr(params, n) for n in "ABCD"}
                kwargs[name] = arr
                p = NetworkParams(kwargs["A"], kwargs["B"], kwargs["C"], kwargs["D"],
                                  params.hidden_activation, params.output_activation)
                g[idx] += sign * loss_fn(p)
            g[idx] /= 2 * h
        grads[name] = g
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for name in "ABCD":
        a, f = getattr(analytic, name), numeric[name]
        scale = max(1e-6, float(np.max(np.abs(f))))
        worst = max(worst, float(np.max(np.abs(a - f))) / scale)
    return worst


class TestGradients:
    def test_zero_at_perfect_fit(self):
        data, params = constant_prediction_dataset(
            [[0.0]], [[0.0]], [[0.0]], [(-1, 1)], [(-1, 1)])
        g = gradient(params, data, "mse")
        for name in "ABCD":
            np.testing.assert_allclose(getattr(g, name), 0.0, atol=1e-15)

    def test_mse_gradient_matches_finite_differences(self):
        data = make_blending_dataset(20, 40.0, seed=2)
        params = init_params(3, 4, 3, 2)
        g = gradient(params, data, "mse")
        fd = finite_difference(params, data, lambda p: mse_loss(p, data, "train"))
        assert max_rel_error(g, fd) < 1e-5

    @pytest.mark.parametrize("case,maker,term,n_hidden", [
        ("blending", make_blending_dataset, BlendingComponentBalance(), 3),
        ("column", make_column_dataset, ColumnMassBalance(), 3),
        ("cdu", make_cdu_dataset, CduMassBalance(), 4),
    ])
    def test_physics_gradients_match_finite_differences(self, case, maker, term, n_hidden):
        data = maker(24, 40.0, seed=5)
        params = init_params(11, data.inputs.shape[1], n_hidden, data.outputs.shape[1])
        g = gradient(params, data, "physics", term=term)
        fd = finite_difference(params, data,
                               lambda p: physics_eval(term, p, data, "train"))
        assert max_rel_error(g, fd) < 1e-5

    def test_combined_gradient_matches_finite_differences(self):
        term = BlendingComponentBalance()
        data = make_blending_dataset(16, 40.0, seed=7)
        params = init_params(13, 4, 3, 2)
        g = gradient(params, data, "combined", term=term, physics_weight=0.37)
        fd = finite_difference(
            params, data,
            lambda p: mse_loss(p, data) + 0.37 * physics_eval(term, p, data))
        assert max_rel_error(g, fd) < 1e-5

    def test_unknown_spec_rejected(self):
        data = make_blending_dataset(12, 40.0, seed=1)
        with pytest.raises(ValueError):
            gradient(init_params(0, 4, 2, 2), data, "hinge")


class TestTrain:
    def test_zero_epochs_returns_init(self):
        data = make_blending_dataset(20, 40.0, seed=1)
        init = init_params(9, 4, 5, 2)
        res = train(TrainingConfig(epochs=0, seed=9), data, init=init)
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(res.params, name), getattr(init, name))

    def test_zero_weight_pi_plus_equals_pi_minus(self):
        data = make_blending_dataset(30, 40.0, seed=4)
        term = BlendingComponentBalance()
        a = train(TrainingConfig(epochs=60, seed=2, mode="pi_minus"), data)
        b = train(TrainingConfig(epochs=60, seed=2, mode="pi_plus", physics_weight=0.0),
                  data, term=term)
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(a.params, name), getattr(b.params, name))

    def test_noiseless_blending_reaches_low_mse(self):
        data = make_blending_dataset(100, math.inf, seed=1)
        res = train(TrainingConfig(epochs=5000, learning_rate=5e-3, seed=1), data,
                    n_hidden=5)
        assert res.trace.mse_train[-1] < 1e-3

    def test_determinism(self):
        data = make_blending_dataset(25, 40.0, seed=6)
        cfg = TrainingConfig(epochs=40, seed=5)
        a, b = train(cfg, data), train(cfg, data)
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(a.params, name), getattr(b.params, name))

    def test_bounds_respected(self):
        data = make_blending_dataset(25, 40.0, seed=6)
        cfg = TrainingConfig(epochs=150, learning_rate=0.5, seed=5,
                             weight_bounds=(-0.8, 0.8))
        res = train(cfg, data)
        for name in "ABCD":
            arr = getattr(res.params, name)
            assert np.all(arr >= -0.8) and np.all(arr <= 0.8)

    def test_physics_weight_monotone_trade(self):
        data = make_blending_dataset(60, math.inf, seed=3)
        term = BlendingComponentBalance()
        base = train(TrainingConfig(epochs=1500, seed=8, mode="pi_plus",
                                    physics_weight=0.0), data, term=term)
        heavy = train(TrainingConfig(epochs=1500, seed=8, mode="pi_plus",
                                     physics_weight=10.0), data, term=term)
        p0 = physics_eval(term, base.params, data)
        p10 = physics_eval(term, heavy.params, data)
        assert p10 <= p0 + 1e-6

    def test_divergence_aborts_with_epoch(self):
        data = make_blending_dataset(20, 40.0, seed=2)
        cfg = TrainingConfig(epochs=4000, learning_rate=1e9, seed=1,
                             weight_bounds=(-1e12, 1e12))
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(cfg, data, n_hidden=3,
                  hidden_activation=IDENTITY, output_activation=IDENTITY)

    def test_pi_plus_requires_term(self):
        data = make_blending_dataset(20, 40.0, seed=2)
        with pytest.raises(ValueError):
            train(TrainingConfig(epochs=1, mode="pi_plus"), data)

    def test_constrained_mode_redirects(self):
        data = make_blending_dataset(20, 40.0, seed=2)
        with pytest.raises(ValueError):
            train(TrainingConfig(epochs=1, mode="pi_plus_constrained"), data)

    def test_trace_csv(self):
        data = make_blending_dataset(20, 40.0, seed=2)
        res = train(TrainingConfig(epochs=3, seed=1), data)
        lines = res.trace.to_csv_text().strip().splitlines()
        assert lines[0] == "epoch,mse_train,mse_test,physics_value,combined_loss"
        assert len(lines) == 5  # header + initial state + 3 epochs


class TestTrainConstrained:
    def phase1(self, data, term, epochs=600):
        cfg = TrainingConfig(epochs=epochs, learning_rate=5e-3, seed=3)
        return cfg, train(cfg, data, term=term)

    def test_inactive_bounds_return_phase1(self):
        data = make_blending_dataset(40, math.inf, seed=2)
        term = BlendingComponentBalance()
        cfg, warm = self.phase1(data, term)
        p2 = ConstrainedPhaseConfig(mse_upper_bound=math.inf,
                                    physics_upper_bound=math.inf)
        res = train_constrained(cfg, p2, data, term)
        assert res.feasible
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(res.params, name),
                                          getattr(warm.params, name))

    def test_active_bounds_satisfied_on_noiseless_data(self):
        data = make_blending_dataset(60, math.inf, seed=2)
        term = BlendingComponentBalance()
        cfg, warm = self.phase1(data, term, epochs=1500)
        z = 2.0 * mse_loss(warm.params, data, "train")
        u = 0.5 * physics_eval(term, warm.params, data)
        p2 = ConstrainedPhaseConfig(mse_upper_bound=z, physics_upper_bound=u,
                                    max_outer_iterations=8, inner_epochs=800)
        res = train_constrained(cfg, p2, data, term)
        assert res.feasible
        assert mse_loss(res.params, data, "train") <= z + 1e-8
        assert physics_eval(term, res.params, data) <= u + 1e-8

    def test_unattainable_bound_flagged_infeasible(self):
        data = make_blending_dataset(40, 20.0, seed=2)  # noisy
        term = BlendingComponentBalance()
        cfg, warm = self.phase1(data, term, epochs=200)
        p2 = ConstrainedPhaseConfig(mse_upper_bound=1e-12, physics_upper_bound=0.0,
                                    max_outer_iterations=2, inner_epochs=100)
        res = train_constrained(cfg, p2, data, term)
        assert not res.feasible
        assert res.mse_violation > 0.0
