import math

import numpy as np
import pytest

from sdattack import models as M
from sdattack.dataset import DatasetSpec, generate

SHAPE = (1, 8, 8)
CLASSES = 4


def reference_logits(model, image):
    """Independent forward pass written with plain loops, no shared helpers."""
    if model.kind == "softmax_regression":
        x = image.ravel()
        return np.array(
            [sum(model.weight[k, i] * x[i] for i in range(x.size)) + model.bias[k]
             for k in range(model.num_classes)]
        )
    if model.kind == "mlp":
        x = image.ravel()
        hidden = []
        for j in range(model.w1.shape[0]):
            z = sum(model.w1[j, i] * x[i] for i in range(x.size)) + model.b1[j]
            hidden.append(max(z, 0.0))
        return np.array(
            [sum(model.w2[k, j] * hidden[j] for j in range(len(hidden))) + model.b2[k]
             for k in range(model.num_classes)]
        )
    if model.kind == "tiny_cnn":
        c_in, h, w = image.shape
        k = model.ksize
        p = (k - 1) // 2
        pooled = []
        for o in range(model.channels):
            total = 0.0
            for y in range(h):
                for x in range(w):
                    acc = model.conv_b[o]
                    for ci in range(c_in):
                        for i in range(k):
                            for j in range(k):
                                yy, xx = y + i - p, x + j - p
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += image[ci, yy, xx] * model.conv_w[o, ci, i, j]
                    total += max(acc, 0.0)
            pooled.append(total / (h * w))
        return np.array(
            [sum(model.head_w[kk, o] * pooled[o] for o in range(model.channels)) + model.head_b[kk]
             for kk in range(model.num_classes)]
        )
    raise AssertionError(model.kind)


@pytest.fixture(scope="module")
def tiny_dataset():
    return generate(DatasetSpec(num_classes=3, image_shape=SHAPE, samples_per_class=20, seed=5))


class TestForward:
    def test_zero_softmax_regression_gives_zero_logits(self, rng):
        model = M.SoftmaxRegression(CLASSES, SHAPE)
        out = M.forward(model, rng.uniform(size=SHAPE))
        np.testing.assert_array_equal(out, np.zeros(CLASSES))

    def test_deterministic(self, rng):
        model = M.make_model("tiny_cnn", CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        np.testing.assert_array_equal(M.forward(model, x), M.forward(model, x.copy()))

    @pytest.mark.parametrize("kind", M.MODEL_KINDS)
    def test_matches_reference_forward(self, kind, rng):
        model = M.make_model(kind, CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        np.testing.assert_allclose(M.forward(model, x), reference_logits(model, x), atol=1e-10)

    def test_shape_mismatch_raises(self, rng):
        model = M.make_model("mlp", CLASSES, SHAPE, rng)
        with pytest.raises(ValueError, match="shape"):
            M.forward(model, np.zeros((1, 4, 4)))


class TestLoss:
    def test_uniform_logits(self, rng):
        model = M.SoftmaxRegression(CLASSES, SHAPE)  # zero weights: uniform softmax
        assert M.loss(model, rng.uniform(size=SHAPE), 1) == pytest.approx(math.log(CLASSES))

    def test_saturated_logit_margin(self):
        model = M.SoftmaxRegression(2, (1, 1, 1))
        model.bias[:] = [50.0, 0.0]
        assert M.loss(model, np.zeros((1, 1, 1)), 0) < 1e-20

    def test_matches_log_sum_exp_oracle(self, rng):
        model = M.make_model("mlp", CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        logits = M.forward(model, x)
        m = logits.max()
        expected = m + math.log(np.sum(np.exp(logits - m))) - logits[2]
        assert M.loss(model, x, 2) == pytest.approx(expected, rel=1e-14)

    def test_non_negative(self, rng):
        for kind in M.MODEL_KINDS:
            model = M.make_model(kind, CLASSES, SHAPE, rng)
            assert M.loss(model, rng.uniform(size=SHAPE), 0) >= 0.0

    def test_label_out_of_range(self, rng):
        model = M.make_model("mlp", CLASSES, SHAPE, rng)
        with pytest.raises(ValueError, match="label"):
            M.loss(model, rng.uniform(size=SHAPE), CLASSES)

    def test_softmax_normalized(self, rng):
        for _ in range(20):
            p = M.softmax(rng.normal(scale=10, size=CLASSES))
            assert abs(p.sum() - 1.0) <= 1e-12


class TestInputGradient:
    def test_softmax_regression_closed_form(self, rng):
        model = M.make_model("softmax_regression", CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        y = 3
        p = M.softmax(model.weight @ x.ravel() + model.bias)
        p[y] -= 1.0
        expected = (model.weight.T @ p).reshape(SHAPE)
        np.testing.assert_allclose(M.input_gradient(model, x, y), expected, atol=1e-14)

    def test_zero_weight_model_has_zero_gradient(self, rng):
        model = M.SoftmaxRegression(CLASSES, SHAPE)
        out = M.input_gradient(model, rng.uniform(size=SHAPE), 0)
        np.testing.assert_array_equal(out, np.zeros(SHAPE))

    @pytest.mark.parametrize("kind", M.MODEL_KINDS)
    def test_matches_finite_differences(self, kind):
        gen = np.random.Generator(np.random.PCG64(77))
        model = M.make_model(kind, CLASSES, SHAPE, gen)
        for trial in range(3):
            x = gen.uniform(size=SHAPE)
            label = int(gen.integers(CLASSES))
            analytic = M.input_gradient(model, x, label)
            coords = gen.choice(x.size, size=40, replace=False)
            fd = M.finite_difference_gradient(model, x, label, h=1e-5, coords=coords)
            an = analytic.ravel()[coords]
            mask = np.abs(an) > 1e-6
            assert mask.sum() > 10
            rel = np.abs(fd[mask] - an[mask]) / np.abs(an[mask])
            assert rel.max() < 1e-4


class TestFiniteDifference:
    def test_quadratic_exactness(self):
        # on a model with linear logits the loss is smooth; h-halving quarters the error
        gen = np.random.Generator(np.random.PCG64(3))
        model = M.make_model("softmax_regression", CLASSES, SHAPE, gen)
        x = gen.uniform(size=SHAPE)
        exact = M.input_gradient(model, x, 1).ravel()[:5]
        err_h = np.abs(
            M.finite_difference_gradient(model, x, 1, h=1e-2, coords=range(5)) - exact
        )
        err_h2 = np.abs(
            M.finite_difference_gradient(model, x, 1, h=5e-3, coords=range(5)) - exact
        )
        ratio = err_h / np.maximum(err_h2, 1e-300)
        assert np.all(ratio > 3.0)  # second-order convergence: ~4x per halving

    def test_full_tensor_shape(self, rng):
        model = M.make_model("softmax_regression", 2, (1, 2, 2), rng)
        out = M.finite_difference_gradient(model, rng.uniform(size=(1, 2, 2)), 0)
        assert out.shape == (1, 2, 2)

    def test_bad_h_raises(self, rng):
        model = M.make_model("mlp", CLASSES, SHAPE, rng)
        with pytest.raises(ValueError, match="h"):
            M.finite_difference_gradient(model, rng.uniform(size=SHAPE), 0, h=0.0)


class TestEnsemble:
    def test_identical_members_match_single_model(self, rng):
        model = M.make_model("mlp", CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        single = M.input_gradient(model, x, 2)
        triple = M.ensemble_input_gradient([model, model, model], x, 2)
        np.testing.assert_allclose(triple, single, atol=1e-12)

    def test_two_linear_models_closed_form(self, rng):
        m1 = M.make_model("softmax_regression", CLASSES, SHAPE, rng)
        m2 = M.make_model("softmax_regression", CLASSES, SHAPE, rng)
        x = rng.uniform(size=SHAPE)
        y = 0
        mean_logits = 0.5 * (m1.weight + m2.weight) @ x.ravel() + 0.5 * (m1.bias + m2.bias)
        v = M.softmax(mean_logits)
        v[y] -= 1.0
        expected = (0.5 * (m1.weight + m2.weight).T @ v).reshape(SHAPE)
        np.testing.assert_allclose(
            M.ensemble_input_gradient([m1, m2], x, y), expected, atol=1e-12
        )

    def test_mismatched_members_raise(self, rng):
        m1 = M.make_model("mlp", CLASSES, SHAPE, rng)
        m2 = M.make_model("mlp", CLASSES + 1, SHAPE, rng)
        with pytest.raises(ValueError, match="ensemble"):
            M.ensemble_input_gradient([m1, m2], rng.uniform(size=SHAPE), 0)


class TestTrain:
    def test_deterministic_retraining(self, tiny_dataset):
        train_split, _ = tiny_dataset
        a = M.train("mlp", train_split, seed=9, epochs=3, lr=0.3)
        b = M.train("mlp", train_split, seed=9, epochs=3, lr=0.3)
        for name, p in a.model.params().items():
            np.testing.assert_array_equal(p, b.model.params()[name])
        assert a.train_accuracy == b.train_accuracy

    def test_zero_lr_keeps_initialization(self, tiny_dataset):
        train_split, _ = tiny_dataset
        trained = M.train("tiny_cnn", train_split, seed=4, epochs=2, lr=0.0)
        init_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((4, 0))))
        fresh = M.make_model("tiny_cnn", 3, SHAPE, init_rng)
        for name, p in trained.model.params().items():
            np.testing.assert_array_equal(p, fresh.params()[name])

    def test_two_seeds_distinct_but_accurate(self, tiny_dataset):
        train_split, _ = tiny_dataset
        a = M.train("softmax_regression", train_split, seed=1, epochs=40, lr=0.5)
        b = M.train("softmax_regression", train_split, seed=2, epochs=40, lr=0.5)
        assert not np.array_equal(a.model.weight, b.model.weight)
        assert a.train_accuracy >= 0.95
        assert b.train_accuracy >= 0.95

    def test_recorded_accuracy_matches_recomputation(self, tiny_dataset):
        train_split, _ = tiny_dataset
        entry = M.train("mlp", train_split, seed=3, epochs=10, lr=0.5)
        assert entry.train_accuracy == M.accuracy(entry.model, train_split)

    def test_empty_dataset_raises(self):
        with pytest.raises(ValueError, match="empty"):
            M.train("mlp", [], seed=0, epochs=1, lr=0.1)

    def test_loss_mostly_decreases_at_default_lr(self):
        train_split, _ = generate(DatasetSpec(seed=11, noise_std=0.05))
        for kind in M.MODEL_KINDS:
            entry = M.train(kind, train_split, seed=1, epochs=60, lr=0.5)
            losses = entry.epoch_losses
            ups = sum(1 for a, b in zip(losses, losses[1:]) if b > a)
            assert ups / (len(losses) - 1) <= 0.10, f"{kind}: {ups} non-monotone epochs"


class TestSerialization:
    @pytest.mark.parametrize("kind", M.MODEL_KINDS)
    def test_round_trip_reproduces_logits(self, kind, tiny_dataset, tmp_path, rng):
        train_split, _ = tiny_dataset
        entry = M.train(kind, train_split, seed=6, epochs=2, lr=0.4)
        path = tmp_path / f"{kind}.sta"
        M.save_model(entry, path)
        loaded = M.load_model(path)
        assert loaded.kind == kind
        assert loaded.seed == 6
        assert loaded.train_accuracy == entry.train_accuracy
        x = rng.uniform(size=SHAPE)
        np.testing.assert_array_equal(
            M.forward(entry.model, x), M.forward(loaded.model, x)
        )

    def test_save_is_byte_deterministic(self, tiny_dataset, tmp_path):
        train_split, _ = tiny_dataset
        entry = M.train("mlp", train_split, seed=8, epochs=1, lr=0.4)
        p1, p2 = tmp_path / "a.sta", tmp_path / "b.sta"
        M.save_model(entry, p1)
        M.save_model(entry, p2)
        assert p1.read_bytes() == p2.read_bytes()
