"""Differentiable classifiers with hand-derived gradients.

Three small architectures (softmax regression, one-hidden-layer MLP, a tiny
CNN) serve as victim models. Each implements exact backpropagation for the
gradient of the cross-entropy loss with respect to the input, verifiable
against the central finite-difference oracle in this module. Trained models
are immutable in practice: nothing here mutates parameters outside
:func:`train`, so forward/gradient calls are safe to share across workers.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from . import archive
from .backend import conv2d_same_multi, conv2d_same_weight_grad

MODEL_KINDS = ("softmax_regression", "mlp", "tiny_cnn")

MODEL_FORMAT_VERSION = 1


class Classifier(abc.ABC):
    """Deterministic differentiable classifier over (C, H, W) images in [0, 1]."""

    kind: str
    num_classes: int
    input_shape: tuple[int, int, int]

    @abc.abstractmethod
    def logits(self, image: np.ndarray) -> np.ndarray:
        """Finite logit vector of length num_classes."""

    @abc.abstractmethod
    def input_vjp(self, image: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Jacobian-transpose product d(logits)/d(image)^T @ cotangent."""

    @abc.abstractmethod
    def param_grads(self, image: np.ndarray, cotangent: np.ndarray) -> dict:
        """Per-parameter Jacobian-transpose products, keyed like ``params``."""

    @abc.abstractmethod
    def params(self) -> dict:
        """Live parameter arrays keyed by name."""


@dataclass
class LabeledSample:
    image: np.ndarray  # (C,H,W) in [0,1]
    label: int


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class SoftmaxRegression(Classifier):
    """Linear map on the flattened image."""

    kind = "softmax_regression"

    def __init__(self, num_classes, input_shape, rng=None):
        self.num_classes = int(num_classes)
        self.input_shape = tuple(input_shape)
        dim = int(np.prod(self.input_shape))
        if rng is None:
            self.weight = np.zeros((num_classes, dim))
            self.bias = np.zeros(num_classes)
        else:
            self.weight = _uniform_init(rng, (num_classes, dim), dim)
            self.bias = np.zeros(num_classes)

    def logits(self, image):
        return self.weight @ image.ravel() + self.bias

    def input_vjp(self, image, cotangent):
        return (self.weight.T @ cotangent).reshape(self.input_shape)

    def param_grads(self, image, cotangent):
        return {"weight": np.outer(cotangent, image.ravel()), "bias": cotangent.copy()}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}


class Mlp(Classifier):
    """One hidden ReLU layer (width 64) on the flattened image."""

    kind = "mlp"
    hidden = 64

    def __init__(self, num_classes, input_shape, rng=None):
        self.num_classes = int(num_classes)
        self.input_shape = tuple(input_shape)
        dim = int(np.prod(self.input_shape))
        if rng is None:
            self.w1 = np.zeros((self.hidden, dim))
            self.w2 = np.zeros((num_classes, self.hidden))
        else:
            self.w1 = _uniform_init(rng, (self.hidden, dim), dim)
            self.w2 = _uniform_init(rng, (num_classes, self.hidden), self.hidden)
        self.b1 = np.zeros(self.hidden)
        self.b2 = np.zeros(num_classes)

    def _pre_activation(self, image):
        return self.w1 @ image.ravel() + self.b1

    def logits(self, image):
        z1 = self._pre_activation(image)
        return self.w2 @ np.maximum(z1, 0.0) + self.b2

    def input_vjp(self, image, cotangent):
        z1 = self._pre_activation(image)
        dz1 = (self.w2.T @ cotangent) * (z1 > 0.0)
        return (self.w1.T @ dz1).reshape(self.input_shape)

    def param_grads(self, image, cotangent):
        z1 = self._pre_activation(image)
        h = np.maximum(z1, 0.0)
        dz1 = (self.w2.T @ cotangent) * (z1 > 0.0)
        return {
            "w1": np.outer(dz1, image.ravel()),
            "b1": dz1,
            "w2": np.outer(cotangent, h),
            "b2": cotangent.copy(),
        }

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


class TinyCnn(Classifier):
    """One 3x3 conv (8 channels, ReLU), global average pooling, linear head."""

    kind = "tiny_cnn"
    channels = 8
    ksize = 3

    def __init__(self, num_classes, input_shape, rng=None):
        self.num_classes = int(num_classes)
        self.input_shape = tuple(input_shape)
        c = self.input_shape[0]
        if rng is None:
            self.conv_w = np.zeros((self.channels, c, self.ksize, self.ksize))
            self.head_w = np.zeros((num_classes, self.channels))
        else:
            self.conv_w = _uniform_init(
                rng, (self.channels, c, self.ksize, self.ksize), c * self.ksize**2
            )
            self.head_w = _uniform_init(rng, (num_classes, self.channels), self.channels)
        self.conv_b = np.zeros(self.channels)
        self.head_b = np.zeros(num_classes)

    def _conv_out(self, image):
        img = np.ascontiguousarray(image, dtype=np.float64)
        return conv2d_same_multi(img, self.conv_w) + self.conv_b[:, None, None]

    def logits(self, image):
        pooled = np.maximum(self._conv_out(image), 0.0).mean(axis=(1, 2))
        return self.head_w @ pooled + self.head_b

    def _conv_cotangent(self, image, cotangent):
        z = self._conv_out(image)
        _, h, w = self.input_shape
        da = (self.head_w.T @ cotangent) / (h * w)
        return da[:, None, None] * (z > 0.0)

    def input_vjp(self, image, cotangent):
        dz = self._conv_cotangent(image, cotangent)
        # gradient through 'same' cross-correlation: correlate with the
        # spatially flipped kernels, swapping in/out channel axes
        flipped = np.ascontiguousarray(
            self.conv_w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        )
        return conv2d_same_multi(np.ascontiguousarray(dz), flipped)

    def param_grads(self, image, cotangent):
        z = self._conv_out(image)
        pooled = np.maximum(z, 0.0).mean(axis=(1, 2))
        dz = self._conv_cotangent(image, cotangent)
        img = np.ascontiguousarray(image, dtype=np.float64)
        return {
            "conv_w": conv2d_same_weight_grad(img, np.ascontiguousarray(dz), self.ksize),
            "conv_b": dz.sum(axis=(1, 2)),
            "head_w": np.outer(cotangent, pooled),
            "head_b": cotangent.copy(),
        }

    def params(self):
        return {
            "conv_w": self.conv_w,
            "conv_b": self.conv_b,
            "head_w": self.head_w,
            "head_b": self.head_b,
        }


_MODEL_CLASSES = {cls.kind: cls for cls in (SoftmaxRegression, Mlp, TinyCnn)}


def make_model(kind, num_classes, input_shape, rng=None) -> Classifier:
    if kind not in _MODEL_CLASSES:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _MODEL_CLASSES[kind](num_classes, input_shape, rng)


def forward(model: Classifier, image: np.ndarray) -> np.ndarray:
    """Logit vector; argmax is the predicted class."""
    if tuple(image.shape) != tuple(model.input_shape):
        raise ValueError(
            f"image shape {image.shape} does not match model input {model.input_shape}"
        )
    return model.logits(image)


def predict(model: Classifier, image: np.ndarray) -> int:
    return int(np.argmax(forward(model, image)))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def log_sum_exp(logits: np.ndarray) -> float:
    m = float(np.max(logits))
    return m + float(np.log(np.sum(np.exp(logits - m))))


def _check_label(model, label):
    if not 0 <= label < model.num_classes:
        raise ValueError(f"label {label} out of range [0, {model.num_classes})")


def loss(model: Classifier, image: np.ndarray, label: int) -> float:
    """Cross-entropy of the softmaxed logits, computed via stable log-sum-exp."""
    _check_label(model, label)
    logits = forward(model, image)
    return log_sum_exp(logits) - float(logits[label])


def _loss_cotangent(model, image, label):
    logits = forward(model, image)
    v = softmax(logits)
    v[label] -= 1.0
    return v


def input_gradient(model: Classifier, image: np.ndarray, label: int) -> np.ndarray:
    """Exact gradient of the cross-entropy loss with respect to the input."""
    _check_label(model, label)
    return model.input_vjp(image, _loss_cotangent(model, image, label))


def _check_ensemble(models):
    if len(models) == 0:
        raise ValueError("ensemble must contain at least one model")
    shape, classes = models[0].input_shape, models[0].num_classes
    for m in models[1:]:
        if tuple(m.input_shape) != tuple(shape) or m.num_classes != classes:
            raise ValueError(
                "ensemble models disagree on input shape or class count: "
                f"{m.input_shape}/{m.num_classes} vs {shape}/{classes}"
            )


def ensemble_logits(models, image: np.ndarray) -> np.ndarray:
    """Mean of the member logit vectors."""
    _check_ensemble(models)
    total = forward(models[0], image).copy()
    for m in models[1:]:
        total += forward(m, image)
    return total / len(models)


def ensemble_input_gradient(models, image: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy of the averaged logits."""
    _check_ensemble(models)
    _check_label(models[0], label)
    if len(models) == 1:
        return input_gradient(models[0], image, label)
    v = softmax(ensemble_logits(models, image))
    v[label] -= 1.0
    grad = models[0].input_vjp(image, v)
    for m in models[1:]:
        grad = grad + m.input_vjp(image, v)
    return grad / len(models)


def finite_difference_gradient(model, image, label, h=1e-5, coords=None):
    """Central-difference gradient oracle.

    With ``coords=None`` estimates every coordinate and returns an array of
    the image's shape; with a list of flat indices returns one estimate per
    index in order.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    flat = image.ravel()
    indices = range(flat.size) if coords is None else coords
    estimates = []
    for idx in indices:
        bumped = flat.copy()
        bumped[idx] = flat[idx] + h
        up = loss(model, bumped.reshape(image.shape), label)
        bumped[idx] = flat[idx] - h
        down = loss(model, bumped.reshape(image.shape), label)
        estimates.append((up - down) / (2.0 * h))
    out = np.array(estimates)
    return out.reshape(image.shape) if coords is None else out


@dataclass
class ModelZooEntry:
    """A trained model plus the provenance needed to reproduce it."""

    kind: str
    seed: int
    model: Classifier
    train_accuracy: float
    epochs: int
    lr: float
    epoch_losses: list = field(default_factory=list)


def accuracy(model: Classifier, samples) -> float:
    if len(samples) == 0:
        raise ValueError("cannot compute accuracy on an empty sample list")
    hits = sum(1 for s in samples if predict(model, s.image) == s.label)
    return hits / len(samples)


def train(kind, dataset, seed, epochs, lr, batch_size=16) -> ModelZooEntry:
    """Deterministic minibatch SGD on cross-entropy.

    Initialization draws from PCG64 seeded with (seed, 0) and epoch shuffles
    from (seed, 1), so retraining with identical arguments is bit-identical.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    shape = tuple(dataset[0].image.shape)
    if any(tuple(s.image.shape) != shape for s in dataset):
        raise ValueError("all training samples must share one image shape")
    num_classes = max(s.label for s in dataset) + 1

    init_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0))))
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1))))
    model = make_model(kind, num_classes, shape, init_rng)
    params = model.params()

    epoch_losses = []
    n = len(dataset)
    for _ in range(epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, batch_size):
            batch = [dataset[i] for i in order[start : start + batch_size]]
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            for sample in batch:
                logits = forward(model, sample.image)
                total_loss += log_sum_exp(logits) - float(logits[sample.label])
                v = softmax(logits)
                v[sample.label] -= 1.0
                for name, g in model.param_grads(sample.image, v).items():
                    grads[name] += g
            scale = lr / len(batch)
            for name in params:
                params[name] -= scale * grads[name]
        epoch_losses.append(total_loss / n)

    return ModelZooEntry(
        kind=kind,
        seed=seed,
        model=model,
        train_accuracy=accuracy(model, dataset),
        epochs=epochs,
        lr=lr,
        epoch_losses=epoch_losses,
    )


def save_model(entry: ModelZooEntry, path) -> None:
    """Write a model file; see docs/file_formats.md."""
    entries = {
        "meta": {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": entry.kind,
            "seed": entry.seed,
            "num_classes": entry.model.num_classes,
            "input_shape": list(entry.model.input_shape),
            "train_accuracy": entry.train_accuracy,
            "epochs": entry.epochs,
            "lr": entry.lr,
            "epoch_losses": list(entry.epoch_losses),
        }
    }
    for name, p in entry.model.params().items():
        entries[f"param/{name}"] = p
    archive.save_archive(path, entries)


def load_model(path) -> ModelZooEntry:
    entries = archive.load_archive(path)
    meta = entries["meta"]
    if meta["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format {meta['format_version']}")
    model = make_model(meta["kind"], meta["num_classes"], tuple(meta["input_shape"]))
    params = model.params()
    for name, p in params.items():
        stored = entries[f"param/{name}"]
        if stored.shape != p.shape:
            raise ValueError(f"{path}: parameter {name} has shape {stored.shape}, want {p.shape}")
        p[...] = stored
    return ModelZooEntry(
        kind=meta["kind"],
        seed=meta["seed"],
        model=model,
        train_accuracy=meta["train_accuracy"],
        epochs=meta["epochs"],
        lr=meta["lr"],
        epoch_losses=list(meta["epoch_losses"]),
    )
