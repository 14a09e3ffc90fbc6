"""Training recipe: cross-entropy loss, momentum SGD, step LR decay,
early stopping, the epoch loop with best-model checkpointing, and evaluation.

Defaults follow the recipe the package implements end to end: learning rate
0.01 with momentum 0.9, multiplied by 0.1 every 10 epochs, halting when
validation accuracy fails to improve for 10 consecutive epochs.  Improvement
means a strict increase; ties do not reset patience.  Epochs are 0-based
everywhere: the schedule, the log, and the stopping bookkeeping.
"""

import csv
import logging
import os
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from .checkpoint import save_weights
from .errors import ConfigError, DataError, NumericError
from .metrics import compute_report, confusion
from .rng import TAG_SHUFFLE, derive_rng

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    lr_step: int = 10
    lr_gamma: float = 0.1
    patience: int = 10
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_step < 1:
            raise ConfigError(f"lr_step must be >= 1, got {self.lr_step}")
        if self.lr_gamma <= 0:
            raise ConfigError(f"lr_gamma must be positive, got {self.lr_gamma}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingLog:
    rows: list
    best_epoch: int = -1
    stopped_epoch: int = -1
    early_stopped: bool = False


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Computed through the log-sum-exp form, so the result is invariant to a
    constant shift of the logits.  Returns (avg_loss, grad) with grad equal
    to (softmax - onehot) / N in the logits' dtype.
    """
    if logits.ndim != 2:
        raise DataError(f"cross_entropy expects (N, K) logits, got rank {logits.ndim}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DataError(
            f"cross_entropy labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(
            f"label out of range [0, {k}): {labels[(labels < 0) | (labels >= k)][0]}")
    z = logits.astype(np.float64)
    m = z.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    loss = float((lse[:, 0] - z[np.arange(n), labels]).mean())
    probs = np.exp(z - lse)
    probs[np.arange(n), labels] -= 1.0
    return loss, (probs / n).astype(logits.dtype)


class SGD:
    """Momentum SGD: v <- momentum*v + g; p <- p - lr*v.

    Velocity buffers start at zero and mirror param shapes.  Layers with
    trainable=False are skipped entirely, so their params stay bit-identical.
    """

    def __init__(self, model, momentum=0.9):
        self.model = model
        self.momentum = momentum
        self.velocity = {}

    def step(self, lr):
        for name, layer, pname in self.model.named_params():
            if not layer.trainable:
                continue
            g = layer.grads[pname]
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            layer.params[pname] -= (lr * v).astype(layer.params[pname].dtype)


def lr_at_epoch(epoch, cfg):
    """lr0 * gamma^floor(epoch / lr_step).

    Evaluated in decimal so the schedule lands exactly on its decimal values
    (0.01 * 0.1^2 is 1e-4, not float(0.01)*float(0.1)**2).
    """
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    power = epoch // cfg.lr_step
    return float(Decimal(repr(cfg.lr0)) * Decimal(repr(cfg.lr_gamma)) ** power)


def early_stop_check(val_acc_history, patience):
    """True iff the last `patience` entries all failed to strictly exceed the
    best value seen before them."""
    if not val_acc_history:
        raise ConfigError("early_stop_check needs a non-empty history")
    if len(val_acc_history) <= patience:
        return False
    best_before = max(val_acc_history[:len(val_acc_history) - patience])
    return all(v <= best_before for v in val_acc_history[-patience:])


def _iter_batches(n, batch_size, order=None):
    ids = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield ids[start:start + batch_size]


def evaluate(model, source, batch_size=32):
    """Average loss and the full metric report over an eval-path source."""
    n = len(source)
    if n == 0:
        raise DataError("cannot evaluate an empty split")
    total_loss = 0.0
    preds = []
    labels = []
    for ids in _iter_batches(n, batch_size):
        x, y = source.batch(ids)
        logits = model.forward(x, training=False)
        loss, _ = cross_entropy(logits, y)
        total_loss += loss * len(ids)
        preds.extend(int(p) for p in logits.argmax(axis=1))
        labels.extend(int(v) for v in y)
    avg_loss = total_loss / n
    k = model.config.num_classes
    names = getattr(source, "class_names", None)
    cm = confusion(preds, labels, k, class_names=names)
    return avg_loss, compute_report(cm, avg_loss)


def train_loop(model, train_source, val_source, cfg, out_dir=None,
               checkpoint_name="best.nncp"):
    """Run the full recipe and return (TrainingLog, best_checkpoint_path).

    Per epoch: seeded shuffle of the train set, minibatch forward/loss/
    backward/step at the scheduled rate, then a validation pass.  The model
    is checkpointed whenever validation accuracy strictly improves, and
    training halts on early stopping or at max_epochs.  Identical (seed,
    config, data) reproduce the log and checkpoint bytes exactly.
    """
    n_train = len(train_source)
    if n_train == 0:
        raise DataError("train split is empty")
    opt = SGD(model, momentum=cfg.momentum)
    best_path = None
    ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = os.path.join(out_dir, checkpoint_name)

    log_rows = []
    val_history = []
    best_acc = -1.0
    best_epoch = -1
    stopped_epoch = -1
    early = False

    for epoch in range(cfg.max_epochs):
        lr = lr_at_epoch(epoch, cfg)
        order = derive_rng(cfg.seed, TAG_SHUFFLE, epoch).permutation(n_train)
        run_loss = 0.0
        correct = 0
        for b, ids in enumerate(_iter_batches(n_train, cfg.batch_size, order)):
            x, y = train_source.batch(ids, epoch=epoch)
            logits = model.forward(x, training=True)
            loss, grad = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {b}")
            run_loss += loss * len(ids)
            correct += int((logits.argmax(axis=1) == y).sum())
            model.backward(grad)
            opt.step(lr)

        val_loss, report = evaluate(model, val_source, batch_size=cfg.batch_size)
        val_acc = report.accuracy
        val_history.append(val_acc)
        row = EpochRecord(epoch=epoch, lr=lr, train_loss=run_loss / n_train,
                          train_acc=correct / n_train, val_loss=val_loss,
                          val_acc=val_acc)
        log_rows.append(row)
        log.info("epoch %d lr %g train_loss %.4f train_acc %.4f "
                 "val_loss %.4f val_acc %.4f", epoch, lr, row.train_loss,
                 row.train_acc, val_loss, val_acc)

        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            if ckpt_path is not None:
                save_weights(model, ckpt_path)
                best_path = ckpt_path
        stopped_epoch = epoch
        if early_stop_check(val_history, cfg.patience):
            early = True
            break

    return (TrainingLog(rows=log_rows, best_epoch=best_epoch,
                        stopped_epoch=stopped_epoch, early_stopped=early),
            best_path)


def save_training_log(tl, path):
    """Persist per-epoch rows as CSV; floats use repr so values round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in tl.rows:
            writer.writerow([r.epoch, repr(r.lr), repr(r.train_loss),
                             repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])


def read_training_log(path):
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(LOG_COLUMNS):
            raise DataError(f"bad training log header in {path}: {header}")
        for row in reader:
            rows.append(EpochRecord(epoch=int(row[0]), lr=float(row[1]),
                                    train_loss=float(row[2]), train_acc=float(row[3]),
                                    val_loss=float(row[4]), val_acc=float(row[5])))
    return TrainingLog(rows=rows)
