"""Training loop (Adam + clipping + dropout + dev-accuracy early stopping)
and evaluation reporting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from . import tensor as T
from .config import TrainConfig
from .errors import TrainingError, UsageError
from .metrics import ConfusionMatrix, confusion
from .optim import AdamState, adam_step, clip_gradients
from .rng import Rng
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_accuracy: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "dev_accuracy": self.dev_accuracy}


@dataclass
class EvalReport:
    accuracy: float
    confusion: ConfusionMatrix
    n_positive: int
    n_negative: int
    model_id: str = ""
    dataset_id: str = ""
    best_epoch: int | None = None

    def to_dict(self) -> dict:
        out = {
            "model": self.model_id,
            "dataset": self.dataset_id,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
        }
        if self.best_epoch is not None:
            out["best_epoch"] = self.best_epoch
        return out


def sample_target(sample) -> int:
    return 0 if sample.label == "none" else 1


def batch_loss(y_hats, labels) -> Tensor:
    """Mean negative log-likelihood of the true labels over the batch.

    Each y_hat is a (2, 1) probability column. Probabilities below 1e-12
    are clamped before the log (and logged as a warning).
    """
    if len(y_hats) != len(labels):
        raise UsageError(f"batch size mismatch: {len(y_hats)} vs {len(labels)}")
    if not y_hats:
        raise UsageError("batch_loss on an empty batch")
    clamped = 0
    losses = []
    for y_hat, y in zip(y_hats, labels):
        if y not in (0, 1):
            raise UsageError(f"label must be 0 or 1, got {y!r}")
        p = T.slice_rows(y_hat, y, y + 1)
        if p.data.item() < LOG_FLOOR:
            clamped += 1
        losses.append(T.neg(T.log(T.clamp_min(p, LOG_FLOOR))))
    if clamped:
        logger.warning("batch_loss: %d probabilities clamped to %g", clamped, LOG_FLOOR)
    return T.mul_scalar(T.add_n(losses), 1.0 / len(losses))


def evaluate(model, data, model_id: str = "", dataset_id: str = "") -> EvalReport:
    """Argmax predictions, accuracy and confusion counts; deterministic."""
    data = list(data)
    if not data:
        raise UsageError("evaluate: empty dataset")
    preds = [model.predict_label(s) for s in data]
    labels = [sample_target(s) for s in data]
    cm = confusion(preds, labels)
    accuracy = cm.accuracy
    # independent cross-check of the two accuracy computations
    direct = sum(p == y for p, y in zip(preds, labels)) / len(labels)
    if accuracy != direct:
        raise ArithmeticError("confusion-matrix accuracy disagrees with direct count")
    return EvalReport(accuracy=accuracy, confusion=cm,
                      n_positive=sum(labels), n_negative=len(labels) - sum(labels),
                      model_id=model_id, dataset_id=dataset_id)


@dataclass
class TrainResult:
    best_values: dict
    best_epoch: int
    best_accuracy: float
    history: list = field(default_factory=list)


def train(model, train_set, dev_set, cfg: TrainConfig, rng: Rng,
          dev_eval=None) -> TrainResult:
    """Mini-batch Adam with elementwise gradient clipping and early stopping.

    Per epoch: seeded shuffle, batches of cfg.batch_size (last short batch
    included), forward in train mode, mean cross-entropy, backward, clip,
    Adam step, then dev accuracy. Stops once dev accuracy has not strictly
    improved for cfg.patience epochs; the returned model carries the
    parameters of the best (earliest, on ties) dev epoch.

    dev_eval(model, dev_set, epoch) -> accuracy may be injected for testing
    the stopping rule.
    """
    train_set = list(train_set)
    dev_set = list(dev_set)
    if not train_set or not dev_set:
        raise UsageError("train: empty train or dev split")
    state = AdamState(model.params, lr=cfg.lr)
    shuffle_rng = rng.child("shuffle")
    dropout_rng = rng.child("dropout")

    best_acc = -math.inf
    best_values = model.params.copy_values()
    best_epoch = 0
    stale = 0
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            with Tape() as tape:
                y_hats = [model.forward(s, mode="train", rng=dropout_rng,
                                        dropout_p=cfg.dropout)[0] for s in batch]
                loss = batch_loss(y_hats, [sample_target(s) for s in batch])
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"batch starting at {start}; labels="
                    f"{[s.label for s in batch]}")
            loss_sum += loss_value * len(batch)
            grads = backward(tape, loss).for_store(model.params)
            grads = clip_gradients(grads, cfg.clip_lo, cfg.clip_hi)
            adam_step(model.params, grads, state)
        train_loss = loss_sum / len(train_set)

        if dev_eval is not None:
            dev_acc = dev_eval(model, dev_set, epoch)
        else:
            dev_acc = evaluate(model, dev_set).accuracy
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss,
                                   dev_accuracy=dev_acc))
        if dev_acc > best_acc:
            best_acc = dev_acc
            best_values = model.params.copy_values()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model.params.load_values(best_values)
    return TrainResult(best_values=best_values, best_epoch=best_epoch,
                       best_accuracy=best_acc, history=history)
