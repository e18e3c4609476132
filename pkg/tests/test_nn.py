import math

import numpy as np
import pytest

from robust_fusion import datagen, nn, verify
from robust_fusion.errors import DimensionError
from robust_fusion.nn import Layer, MlpModel, TrainConfig


def naive_forward(m, x):
    h = np.asarray(x, dtype=float)
    for layer in m.layers:
        out = np.array([sum(layer.weight[i, j] * h[j] for j in range(h.size)) + layer.bias[i]
                        for i in range(layer.weight.shape[0])])
        h = np.maximum(out, 0) if layer.activation == "relu" else out
    return h


@pytest.fixture(scope="module")
def moons():
    ds = datagen.two_moons(2000, 0.1, seed=3)
    return ds.split(0.8, seed=4)


class TestModel:
    def test_last_layer_must_be_linear(self):
        with pytest.raises(ValueError):
            MlpModel((Layer(np.eye(2), np.zeros(2), "relu"),))

    def test_chain_mismatch(self):
        with pytest.raises(DimensionError):
            MlpModel((Layer(np.ones((3, 2)), np.zeros(3)), Layer(np.ones((2, 4)), np.zeros(2), "identity")))

    def test_init_bounds(self):
        m = nn.init_mlp([2, 16, 16, 2], seed=0)
        assert m.sizes == [2, 16, 16, 2]
        for layer in m.layers:
            assert np.all(np.abs(layer.weight) <= math.sqrt(6 / layer.weight.shape[1]))
            assert np.all(layer.bias == 0)


class TestForward:
    def test_zero_weights(self):
        m = MlpModel((Layer(np.zeros((3, 2)), np.array([1.0, -2.0, 0.5]), "identity"),))
        np.testing.assert_array_equal(nn.logits(m, [4.0, 5.0]), [1.0, -2.0, 0.5])

    def test_identity_layer(self):
        m = MlpModel((Layer(np.eye(3), np.zeros(3), "identity"),))
        np.testing.assert_array_equal(nn.logits(m, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_against_naive(self, rng):
        m = nn.init_mlp([3, 5, 4, 2], seed=1)
        for x in rng.normal(size=(5, 3)):
            np.testing.assert_allclose(nn.logits(m, x), naive_forward(m, x), atol=1e-12)

    def test_feature_feeds_head(self, rng):
        m = nn.init_mlp([2, 8, 3], seed=2)
        x = rng.normal(size=2)
        z, h = nn.forward(m, x)
        np.testing.assert_allclose(nn.as_head(m).logits(h), z, atol=1e-14)
        np.testing.assert_allclose(nn.features(m, x), h)

    def test_batch_matches_single(self, rng):
        m = nn.init_mlp([2, 6, 2], seed=0)
        x = rng.normal(size=(4, 2))
        np.testing.assert_allclose(nn.logits(m, x), np.stack([nn.logits(m, r) for r in x]))

    def test_wrong_width(self):
        with pytest.raises(DimensionError):
            nn.logits(nn.init_mlp([2, 2]), [1.0, 2.0, 3.0])


class TestGradients:
    def test_uniform_logits_loss(self):
        m = MlpModel((Layer(np.zeros((2, 3)), np.zeros(2), "identity"),))
        loss, _, _ = nn.loss_and_grads(m, np.ones(3), 1)
        assert loss == pytest.approx(math.log(2), abs=1e-15)

    def test_finite_differences(self, rng):
        m = nn.init_mlp([2, 16, 16, 2], seed=5)
        wp, wi = verify.gradient_check(m, rng.normal(size=(6, 2)), rng.integers(0, 2, size=6))
        assert wp <= 1e-5 and wi <= 1e-5

    def test_single_sample_input_grad_shape(self):
        m = nn.init_mlp([3, 4, 2], seed=0)
        _, grads, g = nn.loss_and_grads(m, np.ones(3), 0)
        assert g.shape == (3,)
        assert [dw.shape for dw, _ in grads] == [(4, 3), (2, 4)]

    def test_label_range(self):
        with pytest.raises(ValueError):
            nn.loss_and_grads(nn.init_mlp([2, 2]), np.ones(2), 2)


class TestTraining:
    def test_zero_epochs(self, rng):
        m = nn.init_mlp([2, 4, 2], seed=0)
        out = nn.train(m, rng.normal(size=(10, 2)), np.arange(10) % 2, TrainConfig(epochs=0))
        for a, b in zip(m.layers, out.layers):
            np.testing.assert_array_equal(a.weight, b.weight)
            np.testing.assert_array_equal(a.bias, b.bias)

    def test_does_not_mutate_input(self, rng):
        m = nn.init_mlp([2, 4, 2], seed=0)
        before = m.layers[0].weight.copy()
        nn.train(m, rng.normal(size=(10, 2)), np.arange(10) % 2, TrainConfig(epochs=3))
        np.testing.assert_array_equal(m.layers[0].weight, before)

    def test_deterministic(self, moons):
        train, _ = moons
        cfg = TrainConfig(epochs=5, seed=9)
        a = nn.fit([2, 16, 16, 2], train.combined, train.y, cfg)
        b = nn.fit([2, 16, 16, 2], train.combined, train.y, cfg)
        assert nn.dumps(a) == nn.dumps(b)

    def test_loss_decreases(self, moons):
        train, _ = moons
        history = []
        nn.fit([2, 16, 16, 2], train.combined, train.y, TrainConfig(epochs=20), history)
        assert len(history) == 20 and history[-1] < history[0]

    def test_bimodal_and_unimodal_accuracy(self, moons):
        train, test = moons
        both = nn.fit([2, 16, 16, 2], train.combined, train.y, TrainConfig())
        only_x = nn.fit([1, 16, 16, 2], train.xa, train.y, TrainConfig())
        acc_both = nn.accuracy(both, test.combined, test.y)
        acc_x = nn.accuracy(only_x, test.xa, test.y)
        assert acc_both >= 0.95
        assert 0.5 < acc_x < acc_both


class TestAccuracy:
    def test_constant_net(self):
        m = MlpModel((Layer(np.zeros((2, 1)), np.array([0.0, 1.0]), "identity"),))
        assert nn.accuracy(m, np.ones((5, 1)), np.ones(5)) == 1.0

    def test_brute_count(self, rng):
        m = nn.init_mlp([2, 8, 3], seed=1)
        x, y = rng.normal(size=(50, 2)), rng.integers(0, 3, size=50)
        count = sum(int(np.argmax(nn.logits(m, xi)) == yi) for xi, yi in zip(x, y))
        assert nn.accuracy(m, x, y) == count / 50

    def test_empty(self):
        with pytest.raises(ValueError):
            nn.accuracy(nn.init_mlp([2, 2]), np.zeros((0, 2)), [])


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        m = nn.init_mlp([2, 7, 3], seed=11)
        nn.save(m, tmp_path / "m.txt")
        back = nn.load(tmp_path / "m.txt")
        assert nn.dumps(back) == nn.dumps(m)
        for a, b in zip(m.layers, back.layers):
            np.testing.assert_array_equal(a.weight, b.weight)

    @pytest.mark.parametrize("text", ["", "other 1\n", "robust-fusion-mlp 1\nlayers 1\nlayer 2 2 identity\n1 2 3\n0 0\n"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            nn.loads(text)
