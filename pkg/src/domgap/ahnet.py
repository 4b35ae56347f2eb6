"""Domain DCNN, gradient sign maps and the domain gap eliminator.

The domain DCNN is three conv blocks (16/32/64 kernels of 3x3, each followed
by batchnorm, ReLU and 2x2 max-pool) and two fully connected layers, the
first with a sigmoid. Its input gradient, reduced to signs and scaled by
``alpha``, is added to a sample so that the sample climbs the domain loss
and loses its domain signature. The same mechanics with ``eps`` in place of
``alpha`` give a plain FGSM adversarial example.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .dataset import Dataset, LabeledSample
from .errors import ConfigError, FormatError, LabelError, ShapeError
from .nn import (BatchNorm, Conv2d, Flatten, Linear, MaxPool2d, Network, ReLU, Sigmoid,
                 copy_params, input_gradient, per_sample_cross_entropy)
from .training import TrainConfig, train_classifier

KERNELS = (16, 32, 64)
KERNEL_SIZE = 3
HIDDEN = 128
LABEL_SOURCES = ("true_label", "predicted_label")


def build_cnn(shape, n_out: int, strict_paper_arch: bool = False, hidden: int = HIDDEN) -> Network:
    rows, cols = shape
    layers, ch = [], 1
    for i, k in enumerate(KERNELS, 1):
        layers += [Conv2d(f"conv{i}", ch, k, KERNEL_SIZE, stride=1, padding=1),
                   BatchNorm(f"bn{i}", k), ReLU(), MaxPool2d(2)]
        ch = k
    layers.append(Flatten())
    flat = Network(layers, (1, rows, cols)).output_shape[0]
    layers += [Linear("fc1", flat, hidden), Sigmoid(), Linear("fc2", hidden, n_out)]
    if strict_paper_arch:
        layers.append(Sigmoid())
    return Network(layers, (1, rows, cols))


@dataclass
class CnnClassifier:
    """A trained (or freshly initialised) CNN over (rows, cols) samples.

    Used both as the domain DCNN (``kind="domain"``, one output per domain) and
    as the gesture CNN recogniser (``kind="gesture"``).
    """

    shape: tuple
    n_classes: int
    params: dict
    strict_paper_arch: bool = False
    kind: str = "domain"
    hidden: int = HIDDEN
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        self.net = build_cnn(self.shape, self.n_classes, self.strict_paper_arch, self.hidden)
        self.net.check_params(self.params)

    @classmethod
    def initialise(cls, shape, n_classes, seed=0, strict_paper_arch=False, kind="domain"):
        net = build_cnn(shape, n_classes, strict_paper_arch)
        return cls(shape, n_classes, net.init_params(seed), strict_paper_arch, kind)

    def _batch(self, x):
        x = np.asarray(x, dtype=np.float32)
        if x.shape == self.shape:
            x = x[None]
        if x.shape[1:] != self.shape:
            raise ShapeError(f"sample shape {x.shape[1:]} does not match model input {self.shape}")
        return x[:, None]

    def logits(self, x) -> np.ndarray:
        return self.net.predict_logits(self.params, self._batch(x))

    def predict(self, x) -> np.ndarray:
        return self.logits(x).argmax(axis=1)

    def loss(self, x, y) -> np.ndarray:
        """Per-sample cross-entropy of the model output against labels ``y``."""
        return per_sample_cross_entropy(self.logits(x).astype(np.float64), np.atleast_1d(y))

    def input_gradient(self, x, y) -> np.ndarray:
        xb = self._batch(x)
        y = np.atleast_1d(np.asarray(y))
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise LabelError(f"labels must lie in [0, {self.n_classes})")
        return input_gradient(self.net, self.params, xb, y)[:, 0]

    def architecture(self) -> dict:
        return {
            "kind": self.kind,
            "N": self.n_classes,
            "strict_paper_arch": self.strict_paper_arch,
            "shape": list(self.shape),
            "kernels": list(KERNELS),
            "kernel_size": [KERNEL_SIZE, KERNEL_SIZE],
            "fc_layers": 2,
            "hidden": self.hidden,
            "output_width": self.n_classes,
        }

    def save(self, path) -> None:
        container.save_tensors(path, self.params, {"architecture": self.architecture()})

    @classmethod
    def load(cls, path) -> "CnnClassifier":
        params, meta = container.load_tensors(path)
        arch = meta.get("architecture")
        if not arch or "N" not in arch:
            raise FormatError(f"{path}: no CNN architecture block")
        return cls(tuple(arch["shape"]), arch["N"], params, arch["strict_paper_arch"],
                   arch.get("kind", "domain"), arch.get("hidden", HIDDEN))


DomainDcnn = CnnClassifier


def train_cnn(x, labels, n_classes: int, cfg: TrainConfig = TrainConfig(),
              strict_paper_arch: bool = False, kind: str = "domain") -> CnnClassifier:
    if n_classes < 2:
        raise ConfigError(f"a {kind} classifier needs at least 2 classes, got {n_classes}")
    if len(x) == 0:
        raise ConfigError("empty training set")
    model = CnnClassifier.initialise(x.shape[1:], n_classes, cfg.seed, strict_paper_arch, kind)
    result = train_classifier(model.net, model.params, np.asarray(x, np.float32)[:, None],
                              np.asarray(labels), cfg)
    model.trace = result.trace
    return model


def train_domain_dcnn(train: Dataset, cfg: TrainConfig = TrainConfig(),
                      strict_paper_arch: bool = False) -> DomainDcnn:
    """Fit the domain DCNN to the domain labels of ``train``."""
    return train_cnn(train.x, train.domains, train.n_domains, cfg, strict_paper_arch, "domain")


# ------------------------------------------------------------ sign maps

def sign_of(gradient) -> np.ndarray:
    return np.sign(gradient).astype(np.int8)


def sign_map(model: CnnClassifier, x, y) -> np.ndarray:
    """sign(d LOSS_d(x, y) / dx) as int8 in {-1, 0, +1}; batched if ``x`` is."""
    single = np.shape(x) == model.shape
    s = sign_of(model.input_gradient(x, y))
    return s[0] if single else s


def _perturb(x, s, step: float) -> np.ndarray:
    x = np.asarray(x)
    s = np.asarray(s)
    if x.shape != s.shape:
        raise ShapeError(f"sample shape {x.shape} != sign map shape {s.shape}")
    # float32 step added in float64 is exact for samples in [2**-25, 2**4)
    step = float(np.float32(step))
    return x.astype(np.float64) + step * s


def apply_dge(x, s, alpha: float) -> np.ndarray:
    """x + alpha * s, unclamped. Returned in float64 so the displacement is exactly alpha."""
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    return _perturb(x, s, alpha)


@dataclass(frozen=True)
class DgeConfig:
    alpha: float = 0.1
    label_source: str = "true_label"
    strict_paper_arch: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.label_source not in LABEL_SOURCES:
            raise ConfigError(f"label_source must be one of {LABEL_SOURCES}")


def make_domain_independent(model: DomainDcnn, sample, cfg: DgeConfig = DgeConfig()) -> np.ndarray:
    """Convert one sample. Labelled samples may use their true domain; otherwise the model's guess."""
    if isinstance(sample, LabeledSample):
        x, true_domain = sample.sample, sample.domain
    else:
        x, true_domain = np.asarray(sample), None
    if cfg.label_source == "true_label":
        if true_domain is None:
            raise LabelError("true_label requested for an unlabelled sample")
        y = true_domain
    else:
        y = int(model.predict(x)[0])
    return apply_dge(x, sign_map(model, x, y), cfg.alpha)


def convert_dataset(model: DomainDcnn, ds: Dataset, alpha: float,
                    label_source: str = "true_label") -> Dataset:
    """Domain-independent copy of a whole dataset (float32 storage)."""
    DgeConfig(alpha, label_source)
    if ds.n_domains != model.n_classes:
        raise ShapeError(f"dataset has {ds.n_domains} domains, model has {model.n_classes} outputs")
    y = ds.domains if label_source == "true_label" else model.predict(ds.x)
    x_di = apply_dge(ds.x, sign_map(model, ds.x, y), alpha)
    return ds.with_samples(x_di.astype(np.float32), dge={"alpha": alpha, "label_source": label_source})


@dataclass(frozen=True)
class FgsmResult:
    sample: np.ndarray
    flipped: bool        # argmax on the perturbed sample differs from the clean prediction
    misclassified: bool  # argmax on the perturbed sample differs from the given label


def fgsm_adversarial(model: CnnClassifier, x, y: int, eps: float) -> FgsmResult:
    if eps < 0:
        raise ConfigError(f"eps must be non-negative, got {eps}")
    x = np.asarray(x)
    x_adv = _perturb(x, sign_map(model, x, y), eps) if eps > 0 else x.astype(np.float64)
    before = int(model.predict(x)[0])
    after = int(model.predict(x_adv)[0])
    return FgsmResult(x_adv, after != before, after != int(y))


def domain_accuracy(model: DomainDcnn, ds: Dataset) -> float:
    if ds.shape != model.shape:
        raise ShapeError(f"dataset samples {ds.shape} do not match model input {model.shape}")
    if len(ds) == 0:
        raise ConfigError("empty dataset")
    return float((model.predict(ds.x) == ds.domains).mean())


def params_equal(a: dict, b: dict) -> bool:
    return list(a) == list(b) and all(np.array_equal(a[k], b[k]) for k in a)


__all__ = [
    "CnnClassifier", "DomainDcnn", "DgeConfig", "FgsmResult", "apply_dge", "build_cnn",
    "convert_dataset", "copy_params", "domain_accuracy", "fgsm_adversarial",
    "make_domain_independent", "sign_map", "sign_of", "train_cnn", "train_domain_dcnn",
]
