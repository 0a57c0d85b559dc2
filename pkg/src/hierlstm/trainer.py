"""SGD with classic momentum, mini-batch epoch loop and training logs."""

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .numcore import ShapeError, make_rng

logger = logging.getLogger(__name__)

VIDEO_LEARNING_RATE = 1e-5
VIDEO_MOMENTUM = 0.9


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainHyper:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 8
    max_epochs: int = 100
    clip_norm: float = None
    shuffle_seed: int = 0
    early_stop: tuple = None  # (patience, min_delta) on the epoch training loss

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")
        if self.early_stop is not None:
            self.early_stop = (int(self.early_stop[0]), float(self.early_stop[1]))

    @classmethod
    def video(cls, **overrides):
        """Settings for fine-tuning on CNN video features: lr 1e-5, momentum 0.9."""
        return cls(learning_rate=VIDEO_LEARNING_RATE, momentum=VIDEO_MOMENTUM, **overrides)


def zero_velocity(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def sgd_momentum_step(params, grads, vel, lr, mu):
    """In place: ``v <- mu*v - lr*g``; ``p <- p + v``."""
    for k, p in params.items():
        g = grads[k]
        v = vel[k]
        if g.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"{k}: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= mu
        v -= lr * g
        p += v
    return params, vel


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss: float
    accuracy: float
    wall_time: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def losses(self):
        return [r.loss for r in self.records]

    @property
    def accuracies(self):
        return [r.accuracy for r in self.records]

    def extend(self, other):
        self.records.extend(other.records)

    def to_tsv(self):
        """Tab-separated ``epoch, phase, loss, accuracy``.

        Wall time is left out so that reruns produce identical files.
        """
        lines = ["epoch\tphase\tloss\taccuracy"]
        for r in self.records:
            lines.append(f"{r.epoch}\t{r.phase}\t{r.loss!r}\t{r.accuracy!r}")
        return "\n".join(lines) + "\n"


def run_epochs(params, loss_and_grad, data, hyper, phase="train"):
    """Optimise ``params`` (name -> array, updated in place) over ``data``.

    ``loss_and_grad(batch)`` receives a list of items and returns
    ``(loss, grads, n_correct, n_total)``; ``loss`` is the batch mean. The
    epoch loss is the item-weighted mean of batch losses and the accuracy is
    measured on the predictions made before each update.
    """
    data = list(data)
    if not data:
        raise TrainingError("no training data")
    log = TrainingLog()
    if hyper.max_epochs == 0:
        return log
    vel = zero_velocity(params)
    rng = make_rng(hyper.shuffle_seed)
    best = np.inf
    stale = 0
    for epoch in range(1, hyper.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(data))
        total_loss = 0.0
        correct = 0
        count = 0
        for b, lo in enumerate(range(0, len(data), hyper.batch_size)):
            batch = [data[j] for j in order[lo:lo + hyper.batch_size]]
            loss, grads, n_ok, n = loss_and_grad(batch)
            if not np.isfinite(loss):
                raise TrainingError(f"{phase}: non-finite loss at epoch {epoch}, batch {b}")
            if hyper.clip_norm is not None:
                clip_by_global_norm(grads, hyper.clip_norm)
            sgd_momentum_step(params, grads, vel, hyper.learning_rate, hyper.momentum)
            total_loss += loss * len(batch)
            correct += n_ok
            count += n
        rec = EpochRecord(epoch, phase, total_loss / len(data), correct / max(count, 1),
                          time.perf_counter() - start)
        log.records.append(rec)
        logger.debug("%s epoch %d loss %.6f acc %.4f", phase, epoch, rec.loss, rec.accuracy)
        if hyper.early_stop is not None:
            patience, min_delta = hyper.early_stop
            if rec.loss < best - min_delta:
                best = rec.loss
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
    return log
