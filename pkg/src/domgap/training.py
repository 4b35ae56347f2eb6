"""Mini-batch momentum-SGD training shared by the domain and gesture CNNs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .nn import Network, OptimState, ParamSet, sgd_step, softmax_cross_entropy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batchnorm needs batch statistics)")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    params: ParamSet
    trace: list = field(default_factory=list)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    starts = list(range(0, n, batch_size))
    # a trailing batch of one would break batchnorm; fold it into its predecessor
    if len(starts) > 1 and n - starts[-1] == 1:
        starts.pop()
    for k, s in enumerate(starts):
        end = starts[k + 1] if k + 1 < len(starts) else n
        yield order[s:end]


def train_classifier(net: Network, params: ParamSet, x: np.ndarray, y: np.ndarray,
                     cfg: TrainConfig) -> TrainResult:
    """Minimise mean softmax cross-entropy. ``params`` is updated in place and returned."""
    if len(x) < 2:
        raise ConfigError("need at least two training samples")
    rng = np.random.default_rng(cfg.seed)
    state = OptimState(cfg.lr, cfg.momentum)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        total, correct = 0.0, 0
        for idx in _batches(len(x), cfg.batch_size, rng):
            logits, tape = net.forward(params, x[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            _, grads = net.backward(params, dlogits.astype(logits.dtype, copy=False), tape)
            sgd_step(params, grads, state)
            total += loss * len(idx)
            # running accuracy, measured on each batch before its update
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
        stats = EpochStats(epoch, total / len(x), correct / len(x))
        if not np.isfinite(stats.loss):
            raise TrainingDivergedError(epoch)
        trace.append(stats)
        log.info("epoch %d loss %.4f acc %.4f", epoch, stats.loss, stats.accuracy)
    return TrainResult(params, trace)
