"""Supervised training loop: stratified splits, cross-entropy, AdamW with
decoupled weight decay, reduce-on-plateau scheduling, per-epoch augmentation,
and few-shot subsampling of the train split."""

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, augment_batch, build_pool
from .autodiff import Tensor, backward
from .checkpoint import save_params
from .seeding import child_seed, substream
from .siggen import Dataset
from .splits import stratified_split


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 150
    initial_lr: float = 0.001
    scheduler_factor: float = 0.1
    scheduler_patience: int = 10
    min_delta: float = 0.0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    min_lr: float = 1e-6
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    few_shot_fraction: float | None = None
    few_shot_per_cell: int | None = None

    def validate(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise ValueError("scheduler factor must be in (0, 1)")
        if self.scheduler_patience < 1:
            raise ValueError("scheduler patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("betas must be in [0, 1)")
        if self.few_shot_fraction is not None and not 0.0 < self.few_shot_fraction <= 1.0:
            raise ValueError("few_shot_fraction must be in (0, 1]")
        if self.few_shot_per_cell is not None and self.few_shot_per_cell < 1:
            raise ValueError("few_shot_per_cell must be >= 1")
        self.augment.validate()
        return self

    def to_dict(self):
        data = asdict(self)
        data["augment"] = self.augment.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "augment" in data and isinstance(data["augment"], dict):
            data["augment"] = AugmentConfig.from_dict(data["augment"])
        return cls(**data).validate()


def split(dataset: Dataset, ratios=(0.6, 0.2, 0.2), seed=0):
    """Stratified (label, snr) split; every cell needs at least 5 frames."""
    cells = {}
    for frame in dataset.frames:
        cells.setdefault((frame.label, float(frame.snr_db)), []).append(frame.frame_id)
    for (label, snr), ids in sorted(cells.items()):
        if len(ids) < 5:
            raise ValueError(f"cell (label={label}, snr={snr}) has only {len(ids)} frames; "
                             "need at least 5 to split")
    return stratified_split([f.frame_id for f in dataset.frames],
                            [f.label for f in dataset.frames],
                            [f.snr_db for f in dataset.frames],
                            ratios=ratios, seed=seed)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood from raw logits (max-subtraction stabilized)."""
    labels = np.asarray(labels)
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label index out of range")
    onehot = np.zeros((batch, n_classes), dtype=logits.dtype)
    onehot[np.arange(batch), labels] = 1.0
    picked = (ad.log_softmax(logits, axis=1) * Tensor(onehot)).sum()
    return picked * (-1.0 / batch)


class AdamWState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adamw_step(params, grads, state: AdamWState, lr, betas=(0.9, 0.999), eps=1e-8,
               weight_decay=0.0):
    """One decoupled-weight-decay Adam update, in place.

    Decay multiplies parameters by (1 - lr*weight_decay) separately from the
    bias-corrected moment update, so a zero gradient with zero decay leaves
    parameters bit-identical.
    """
    beta1, beta2 = betas
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        if grad is None:
            continue
        m = state.m[name]
        v = state.v[name]
        if weight_decay:
            param.data *= 1.0 - lr * weight_decay
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        param.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class PlateauScheduler:
    """Cut lr by `factor` after `patience` epochs without val-loss improvement."""

    def __init__(self, lr, factor=0.1, patience=10, min_delta=0.0):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.stale = 0

    def step(self, val_loss):
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.lr *= self.factor
                self.stale = 0
        return self.lr


def few_shot_subsample(dataset: Dataset, fraction=None, per_cell=None, seed=0):
    """Reduced train frame-id list, stratified per (label, snr), >= 1 per cell."""
    if (fraction is None) == (per_cell is None):
        raise ValueError("specify exactly one of fraction / per_cell")
    cells = {}
    for frame in dataset.frames:
        if dataset.split[frame.frame_id] != "train":
            continue
        cells.setdefault((frame.label, float(frame.snr_db)), []).append(frame.frame_id)
    if not cells:
        raise ValueError("train split is empty")
    kept = []
    for key in sorted(cells):
        ids = sorted(cells[key])
        if fraction is not None:
            n_keep = max(1, int(round(fraction * len(ids))))
        else:
            n_keep = per_cell
            if n_keep > len(ids):
                raise ValueError(f"cell (label={key[0]}, snr={key[1]}) has {len(ids)} "
                                 f"train frames, need {n_keep}")
        rng = substream(seed, "fewshot", key[0], int(round(key[1] * 100)))
        picks = rng.choice(len(ids), size=n_keep, replace=False)
        kept.extend(ids[i] for i in sorted(picks))
    return kept


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_loss: float
    best_params: dict
    final_params: dict


def _stack_batch(frames):
    x = np.stack([f.data for f in frames]).astype(np.float32, copy=False)
    y = np.asarray([f.label for f in frames], dtype=np.int64)
    return x, y


def _eval_loss_acc(model, frames, batch_size):
    total_loss = 0.0
    correct = 0
    with ad.no_grad():
        for start in range(0, len(frames), batch_size):
            chunk = frames[start:start + batch_size]
            x, y = _stack_batch(chunk)
            logits = model.forward(x)
            loss = cross_entropy(logits, y)
            total_loss += loss.item() * len(chunk)
            correct += int((np.argmax(logits.data, axis=1) == y).sum())
    return total_loss / len(frames), correct / len(frames)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"]),
                             repr(row["val_acc"]), repr(row["lr"])])
    return path


def train_loop(model, dataset: Dataset, config: TrainConfig, out_dir=None,
               log=None) -> TrainResult:
    """Train on the dataset's train split, tracking the best-val checkpoint.

    Per epoch: reshuffle, augment train batches, forward/backward/AdamW,
    then validate and step the plateau scheduler. Stops early once the lr
    falls below config.min_lr. With out_dir set, writes checkpoint.bin
    (best-val parameters) and history.csv there.
    """
    config.validate()
    if dataset.domain != "ap":
        raise ValueError("training expects an A/P-domain dataset")
    frames_by_id = {f.frame_id: f for f in dataset.frames}
    train_ids = dataset.frame_ids("train")
    if config.few_shot_fraction is not None or config.few_shot_per_cell is not None:
        train_ids = few_shot_subsample(dataset, config.few_shot_fraction,
                                       config.few_shot_per_cell,
                                       seed=child_seed(config.seed, "fewshot"))
    val_frames = dataset.subset("val")
    if not train_ids or not val_frames:
        raise ValueError("need non-empty train and val splits")

    pool = None
    if config.augment.strategy in ("discrete_ss", "continuous_ss"):
        pool_source = dataset
        if len(train_ids) != len(dataset.frame_ids("train")):
            # few-shot: donors must come from the reduced split actually trained on
            reduced = set(train_ids)
            pool_split = {fid: (which if which != "train" or fid in reduced else "test")
                          for fid, which in dataset.split.items()}
            pool_source = Dataset(dataset.frames, dataset.class_names, pool_split, domain="ap")
        per_class = min(config.augment.pool_per_class,
                        min_cell_count(pool_source))
        pool = build_pool(pool_source, per_class, seed=child_seed(config.seed, "pool"))

    optimizer_state = AdamWState(model.params)
    scheduler = PlateauScheduler(config.initial_lr, config.scheduler_factor,
                                 config.scheduler_patience, config.min_delta)
    history = []
    best_val = math.inf
    best_epoch = -1
    best_params = {name: p.data.copy() for name, p in model.params.items()}
    grad_names = list(model.params)

    previous_checks = ad.set_finite_checks(False)  # loss checked per batch below
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = substream(config.seed, "shuffle", epoch).permutation(len(train_ids))
            dropout_rng = substream(config.seed, "dropout", epoch)
            lr = scheduler.lr
            loss_sum = 0.0
            seen = 0
            for batch_index, start in enumerate(range(0, len(train_ids), config.batch_size)):
                ids = [train_ids[i] for i in order[start:start + config.batch_size]]
                batch = [frames_by_id[i] for i in ids]
                if config.augment.strategy != "none":
                    batch = augment_batch(batch, pool, config.augment,
                                          epoch_seed=child_seed(config.seed, "augment",
                                                                epoch, batch_index))
                x, y = _stack_batch(batch)
                logits = model.forward(x, train=True, rng=dropout_rng)
                loss = cross_entropy(logits, y)
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise RuntimeError(f"non-finite loss {loss_value} at epoch {epoch}, "
                                       f"batch {batch_index} (lr={lr:g})")
                backward(loss)
                grads = {name: model.params[name].grad for name in grad_names}
                adamw_step(model.params, grads, optimizer_state, lr,
                           betas=(config.beta1, config.beta2), eps=config.epsilon,
                           weight_decay=config.weight_decay)
                for name in grad_names:
                    model.params[name].zero_grad()
                loss_sum += loss_value * len(ids)
                seen += len(ids)

            val_loss, val_acc = _eval_loss_acc(model, val_frames, config.batch_size)
            new_lr = scheduler.step(val_loss)
            row = {"epoch": epoch, "train_loss": loss_sum / seen, "val_loss": val_loss,
                   "val_acc": val_acc, "lr": lr}
            history.append(row)
            if log:
                log(row)
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = {name: p.data.copy() for name, p in model.params.items()}
            if new_lr < config.min_lr:
                break
    finally:
        ad.set_finite_checks(previous_checks)

    result = TrainResult(history, best_epoch, best_val, best_params,
                         {name: p.data.copy() for name, p in model.params.items()})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_params(out_dir / "checkpoint.bin", best_params,
                    extra={"model_config": model.config.to_dict(),
                           "best_epoch": best_epoch, "best_val_loss": best_val})
        write_history(out_dir / "history.csv", history)
    return result


def min_cell_count(dataset: Dataset) -> int:
    """Smallest (label, snr) train-cell population."""
    cells = {}
    for frame in dataset.frames:
        if dataset.split[frame.frame_id] != "train":
            continue
        key = (frame.label, float(frame.snr_db))
        cells[key] = cells.get(key, 0) + 1
    if not cells:
        raise ValueError("train split is empty")
    return min(cells.values())
