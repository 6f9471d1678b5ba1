"""Network evaluation, activations, scaling, and serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pwlopt.network import (
    Activation, Dataset, IDENTITY, NetworkParams, RELU, Scaler, TANH,
    activation_eval, forward, forward_batch, pwl_tanh_activation,
)


def net_1_1_1(a=1.0, b=1.0, c=0.0, d=0.0, hid=TANH, out=TANH):
    return NetworkParams([[a]], [[b]], [c], [d], hid, out)


class TestForward:
    def test_zero_is_fixed_point(self):
        assert forward(net_1_1_1(), [0.0])[0] == 0.0

    def test_bias_only_output(self):
        # A = 0 makes the hidden layer irrelevant; output is tanh(D)
        net = net_1_1_1(a=0.0, d=0.5)
        for u in (-1.0, 0.0, 0.7):
            assert forward(net, [u])[0] == pytest.approx(math.tanh(0.5), abs=1e-12)

    def test_nested_tanh(self):
        assert forward(net_1_1_1(), [1.0])[0] == pytest.approx(
            math.tanh(math.tanh(1.0)), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(net_1_1_1(), [1.0, 2.0])
        with pytest.raises(ValueError):
            forward_batch(net_1_1_1(), np.zeros((3, 2)))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        net = NetworkParams(rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (3, 4)),
                            rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2))
        U = rng.uniform(-1, 1, (8, 4))
        batch = forward_batch(net, U)
        for i in range(8):
            np.testing.assert_allclose(batch[i], forward(net, U[i]), atol=1e-14)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        net = NetworkParams(rng.uniform(-1, 1, (1, 5)), rng.uniform(-1, 1, (5, 2)),
                            rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 1))
        u = np.array([0.3, -0.8])
        assert forward(net, u)[0] == forward(net, u)[0]

    def test_relu_identity_net(self):
        net = net_1_1_1(a=2.0, b=1.0, c=-0.5, d=0.25, hid=RELU, out=IDENTITY)
        assert forward(net, [1.0])[0] == pytest.approx(2 * 0.5 + 0.25)
        assert forward(net, [-1.0])[0] == pytest.approx(0.25)  # relu clamps

    def test_pwl_net_matches_pwl_eval(self):
        from pwlopt.pwl import tanh_pwl
        net = net_1_1_1().as_pwl(3)
        f = tanh_pwl(3)
        assert forward(net, [0.5])[0] == pytest.approx(f(f(0.5)), abs=1e-14)


class TestActivation:
    def test_eval_table(self):
        assert activation_eval(TANH, 0.0) == 0.0
        assert activation_eval(RELU, -2.0) == 0.0
        assert activation_eval(RELU, 3.0) == 3.0
        assert activation_eval(IDENTITY, -1.5) == -1.5
        assert activation_eval(pwl_tanh_activation(3), 1.0) == pytest.approx(0.76)

    def test_tokens_round_trip(self):
        for act in (TANH, RELU, IDENTITY, pwl_tanh_activation(3), pwl_tanh_activation(5)):
            assert Activation.from_token(act.token) == act

    def test_invalid_kinds(self):
        with pytest.raises(ValueError):
            Activation("sigmoid")
        with pytest.raises(ValueError):
            Activation("pwl_tanh", 7)
        with pytest.raises(ValueError):
            Activation("tanh", 3)


class TestNetworkParams:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            NetworkParams(np.zeros((1, 3)), np.zeros((2, 4)), np.zeros(2), np.zeros(1))
        with pytest.raises(ValueError):
            NetworkParams(np.zeros((1, 2)), np.zeros((2, 4)), np.zeros(2), np.zeros(2))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            NetworkParams([[np.inf]], [[1.0]], [0.0], [0.0])

    def test_immutable_arrays(self):
        net = net_1_1_1()
        with pytest.raises(ValueError):
            net.A[0, 0] = 5.0

    def test_text_round_trip_exact(self):
        rng = np.random.default_rng(11)
        net = NetworkParams(rng.uniform(-2, 2, (2, 5)), rng.uniform(-2, 2, (5, 3)),
                            rng.uniform(-2, 2, 5), rng.uniform(-2, 2, 2),
                            TANH, pwl_tanh_activation(5))
        back = NetworkParams.from_text(net.to_text())
        for name in "ABCD":
            np.testing.assert_array_equal(getattr(net, name), getattr(back, name))
        assert back.hidden_activation == TANH
        assert back.output_activation == pwl_tanh_activation(5)

    def test_text_header(self):
        header = net_1_1_1(hid=RELU, out=IDENTITY).to_text().splitlines()[0]
        assert header == "1 1 1 relu identity"

    def test_save_load(self, tmp_path):
        net = net_1_1_1(a=0.25)
        path = tmp_path / "net.txt"
        net.save(path)
        assert NetworkParams.load(path).A[0, 0] == 0.25


class TestScaler:
    def test_midpoint_and_endpoints(self):
        s = Scaler(np.array([0.0]), np.array([50.0]))
        assert s.to_normalized(np.array([25.0]))[0] == 0.0
        assert s.to_normalized(np.array([50.0]))[0] == 1.0
        s2 = Scaler(np.array([0.1]), np.array([0.5]))
        assert s2.to_raw(np.array([-1.0]))[0] == pytest.approx(0.1, abs=1e-15)

    def test_degenerate_feature_rejected_at_construction(self):
        with pytest.raises(ValueError):
            Scaler(np.array([1.0, 2.0]), np.array([3.0, 2.0]))

    def test_scale_directions(self):
        s = Scaler(np.array([0.0]), np.array([10.0]))
        assert s.scale(np.array([5.0]), "to_normalized")[0] == 0.0
        assert s.scale(np.array([0.0]), "to_raw")[0] == 5.0
        with pytest.raises(ValueError):
            s.scale(np.array([0.0]), "sideways")

    @given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=8))
    def test_round_trip(self, values):
        s = Scaler(np.array([-1.0]), np.array([51.0]))
        raw = np.array(values).reshape(-1, 1)
        np.testing.assert_allclose(s.to_raw(s.to_normalized(raw)), raw, atol=1e-12)

    def test_matrix_rows(self):
        s = Scaler(np.array([0.0, 10.0]), np.array([2.0, 20.0]))
        raw = np.array([[0.0, 10.0], [2.0, 20.0], [1.0, 15.0]])
        np.testing.assert_allclose(s.to_normalized(raw),
                                   [[-1, -1], [1, 1], [0, 0]], atol=1e-12)


class TestDataset:
    def make(self):
        rng = np.random.default_rng(5)
        raw_u = rng.uniform(0, 1, (10, 2))
        raw_y = rng.uniform(5, 9, (10, 1))
        su, sy = Scaler.fit(raw_u), Scaler.fit(raw_y)
        return Dataset(su.to_normalized(raw_u), sy.to_normalized(raw_y), su, sy,
                       np.arange(8), np.arange(8, 10), ("a", "b"), ("y",))

    def test_partition_enforced(self):
        d = self.make()
        with pytest.raises(ValueError):
            Dataset(d.inputs, d.outputs, d.input_scaler, d.output_scaler,
                    np.arange(8), np.arange(7, 10), ("a", "b"), ("y",))

    def test_subsets(self):
        d = self.make()
        U, Y = d.subset("train")
        assert U.shape == (8, 2) and Y.shape == (8, 1)
        with pytest.raises(ValueError):
            d.subset("validation")

    def test_csv_round_trip(self):
        d = self.make()
        back = Dataset.from_csv_text(d.to_csv_text())
        np.testing.assert_array_equal(back.inputs, d.inputs)
        np.testing.assert_array_equal(back.outputs, d.outputs)
        np.testing.assert_array_equal(back.train_idx, d.train_idx)
        assert back.input_names == d.input_names
        assert back.to_csv_text() == d.to_csv_text()

    def test_header_names_features_and_targets(self):
        header = [ln for ln in self.make().to_csv_text().splitlines()
                  if not ln.startswith("#")][0]
        assert header == "a,b,y"
