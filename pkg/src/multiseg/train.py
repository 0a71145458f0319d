"""Tools for training models: mini-batch training, early stopping, learning-rate search and
nested cross-validation."""
import csv
import json
import logging
import re
from collections import OrderedDict, namedtuple
from dataclasses import dataclass
from pathlib import Path
import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold
from multiseg import ClassSet
from multiseg.dataset import augment_all, base_ids_of, select, split_dataset
from multiseg.errors import ConfigError, DatasetError, NumericError, StorageError
from multiseg.evaluate import METRICS, evaluate_corpus
from multiseg.optim import OPTIMIZERS, AdamState
from multiseg.unet import build_unet, loss_and_grads, forward, save_weights
from multiseg.tensor import bce_with_logits

logger = logging.getLogger(__name__)

DEFAULT_LR_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01)
RUN_PATTERN = re.compile(r"^run-(\d{4,})$")


@dataclass
class TrainConfig:
    """Optimization settings.

    Attributes:
        learning_rate (float): Step size used by `train` (the grid is used by `cv`).
        max_epochs (int): Upper bound on epochs.
        patience (int): Epochs without strict validation-loss improvement before stopping.
        batch_size (int): Records per mini-batch.
        seed (int): Seed for initialization, shuffling and fold assignment.
        lr_grid (tuple of float): Learning rates tried by the grid search.
        outer_folds (int): Outer cross-validation folds.
        inner_folds (int): 1 for a single inner train/validation split, k > 1 for inner k-fold.
        inner_split (tuple of int): Train to validation ratio of the single inner split.
        optimizer (str): "adam" or "sgd".

    """

    learning_rate: float = 0.001
    max_epochs: int = 40
    patience: int = 5
    batch_size: int = 8
    seed: int = 0
    lr_grid: tuple = DEFAULT_LR_GRID
    outer_folds: int = 5
    inner_folds: int = 1
    inner_split: tuple = (4, 1)
    optimizer: str = "adam"

    def validate(self):
        if self.max_epochs < 1:
            raise ConfigError("train.max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("train.patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("train.learning_rate must be >= 0")
        if not self.lr_grid or any(lr < 0 for lr in self.lr_grid):
            raise ConfigError("train.lr_grid must be a nonempty list of learning rates >= 0")
        if self.outer_folds < 2:
            raise ConfigError("train.outer_folds must be >= 2")
        if self.inner_folds < 1:
            raise ConfigError("train.inner_folds must be >= 1")
        if len(self.inner_split) != 2 or any(v < 1 for v in self.inner_split):
            raise ConfigError("train.inner_split must be two positive integers, e.g. [4, 1]")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                "train.optimizer must be one of %s, got %r" % (sorted(OPTIMIZERS), self.optimizer)
            )
        return self


#: Output of `fit`. curves holds one dict (epoch, train_loss, val_loss) per epoch.
FitResult = namedtuple("FitResult", ["model", "curves", "best_epoch", "best_val_loss"])
#: One grid-search arm, without its model.
ArmResult = namedtuple("ArmResult", ["learning_rate", "split", "curves", "best_epoch", "best_val_loss"])
#: Output of `grid_search`. losses maps each learning rate to its (mean) best validation loss.
GridResult = namedtuple("GridResult", ["best_lr", "losses", "arms"])
#: Output of `nested_cv`.
CVResult = namedtuple("CVResult", ["folds", "summary"])


@dataclass
class FoldResult:
    """Outcome of one outer cross-validation fold."""

    fold: int
    learning_rate: float
    curves: list
    best_epoch: int
    metrics: object
    test_ids: list
    inner_ids: list
    lr_losses: dict

    def to_dict(self):
        return {
            "fold": self.fold,
            "learning_rate": self.learning_rate,
            "best_epoch": self.best_epoch,
            "curves": self.curves,
            "metrics": self.metrics.to_dict(),
            "test_ids": self.test_ids,
            "inner_ids": self.inner_ids,
            "lr_losses": {repr(lr): v for lr, v in self.lr_losses.items()},
        }


def _check_finite(value, what):
    if not np.isfinite(value):
        raise NumericError("%s is %s" % (what, value))
    return float(value)


def stack_batch(records):
    """Images and float masks of `records` as (N, C, S, S) arrays."""
    images = np.stack([r.image for r in records]).astype(np.float32)
    masks = np.stack([r.mask for r in records]).astype(np.float32)
    return images, masks


def corpus_loss(model, records, batch_size=8):
    """Mean BCE-with-logits over all elements of `records`."""
    if not records:
        raise DatasetError("Cannot compute the loss of an empty corpus")
    total = 0.0
    for start in range(0, len(records), batch_size):
        images, masks = stack_batch(records[start : start + batch_size])
        total += bce_with_logits(forward(model, images), masks) * len(images)
    return _check_finite(total / len(records), "Validation loss")


def train_epoch(model, records, config, rng, state=None, learning_rate=None):
    """One pass over a seeded shuffle of `records` in mini-batches.

    The model is updated in place.

    Args:
        model (UNetModel): Model to train.
        records (list of SampleRecord): Training records.
        config (TrainConfig): Batch size and optimizer.
        rng (numpy.random.Generator): Shuffle source.
        state (AdamState, optional): Optimizer state carried across epochs.
        learning_rate (float, optional): Overrides `config.learning_rate`.

    Returns:
        float: Mean per-batch loss.

    """
    if not records:
        raise DatasetError("Cannot train on an empty dataset")
    lr = config.learning_rate if learning_rate is None else learning_rate
    step = OPTIMIZERS[config.optimizer]
    state = AdamState() if state is None else state
    order = rng.permutation(len(records))
    losses = []
    for start in range(0, len(order), config.batch_size):
        images, masks = stack_batch([records[i] for i in order[start : start + config.batch_size]])
        value, grads = loss_and_grads(model, images, masks)
        losses.append(_check_finite(value, "Training loss"))
        step(model.params, grads, state, lr)
    return float(np.mean(losses))


def fit(model, train_records, val_records, config, learning_rate=None, evaluate_loss=None):
    """Train with early stopping on the validation loss and restore the best weights.

    Training stops after `config.patience` consecutive epochs without a strict improvement of
    the validation loss, or after `config.max_epochs`.

    Args:
        model (UNetModel): Model, trained in place.
        train_records (list of SampleRecord): Training records.
        val_records (list of SampleRecord): Validation records.
        config (TrainConfig): Settings.
        learning_rate (float, optional): Overrides `config.learning_rate`.
        evaluate_loss (callable, optional): `f(model, epoch) -> float` replacing the
            validation loss computation.

    Returns:
        FitResult: The model holding the best weights and the loss curves.

    """
    if not train_records or not val_records:
        raise DatasetError("Training and validation sets must be nonempty")
    config.validate()
    lr = config.learning_rate if learning_rate is None else learning_rate
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    if evaluate_loss is None:

        def evaluate_loss(m, _):
            return corpus_loss(m, val_records, config.batch_size)

    curves = []
    best_loss, best_epoch, best_params = np.inf, 0, None
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        train_loss = train_epoch(model, train_records, config, rng, state, lr)
        val_loss = _check_finite(evaluate_loss(model, epoch), "Validation loss")
        curves.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.info("Epoch %d: train loss %.6f, val loss %.6f", epoch, train_loss, val_loss)
        if val_loss < best_loss:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("Early stopping at epoch %d, best epoch %d", epoch, best_epoch)
                break
    model.params.update(best_params)
    return FitResult(model, curves, best_epoch, best_loss)


def _fit_arm(unet_config, config, lr, split, train_records, val_records):
    model = build_unet(unet_config, config.seed)
    result = fit(model, train_records, val_records, config, learning_rate=lr)
    logger.debug("lr %s split %d: best val loss %.6f", lr, split, result.best_val_loss)
    return ArmResult(lr, split, result.curves, result.best_epoch, result.best_val_loss)


def _search(splits, unet_config, config, jobs):
    config.validate()
    grid = sorted(set(float(lr) for lr in config.lr_grid))
    jobs_list = [(lr, k) for lr in grid for k in range(len(splits))]
    arms = Parallel(n_jobs=jobs)(
        delayed(_fit_arm)(unet_config, config, lr, k, *splits[k]) for lr, k in jobs_list
    )
    losses = OrderedDict(
        (lr, float(np.mean([a.best_val_loss for a in arms if a.learning_rate == lr])))
        for lr in grid
    )
    best_lr = min(grid, key=lambda lr: (losses[lr], lr))
    return GridResult(best_lr, losses, arms)


def grid_search(train_records, val_records, unet_config, config, jobs=1):
    """Train one model per learning rate on the same split and seed.

    The learning rate with the lowest best validation loss wins; ties go to the smaller rate.

    Returns:
        GridResult: Chosen learning rate, loss per learning rate and the arm curves.

    """
    return _search([(train_records, val_records)], unet_config, config, jobs)


def inner_splits(base_ids, config):
    """Inner (train ids, val ids) pairs over the bases of an outer training fold."""
    base_ids = sorted(base_ids)
    if config.inner_folds == 1:
        return [split_dataset(base_ids, config.inner_split, config.seed)]
    if len(base_ids) < config.inner_folds:
        raise DatasetError(
            "%d inner folds need at least as many bases, got %d" % (config.inner_folds, len(base_ids))
        )
    folds = KFold(n_splits=config.inner_folds, shuffle=True, random_state=config.seed)
    return [
        ([base_ids[i] for i in train], [base_ids[i] for i in val])
        for train, val in folds.split(base_ids)
    ]


def outer_folds(base_ids, config):
    """Outer (train ids, test ids) pairs; every base is tested in exactly one fold."""
    base_ids = sorted(base_ids)
    if len(base_ids) < config.outer_folds:
        raise DatasetError(
            "%d outer folds need at least as many base images, got %d"
            % (config.outer_folds, len(base_ids))
        )
    folds = KFold(n_splits=config.outer_folds, shuffle=True, random_state=config.seed)
    return [
        ([base_ids[i] for i in train], [base_ids[i] for i in test])
        for train, test in folds.split(base_ids)
    ]


def nested_cv(base_records, unet_config, config, threshold=0.5, class_set=None, jobs=1):
    """Nested cross-validation over base images with an inner learning-rate search.

    Folds are assigned on base images and augmented afterwards. The inner search only sees
    the outer-training bases of its fold; the fold model is then trained on the first inner
    split at the chosen learning rate and scored on the augmented outer-test records.

    Args:
        base_records (list of SampleRecord): Unaugmented records.
        unet_config (UNetConfig): Architecture.
        config (TrainConfig): Settings.
        threshold (float, optional): Binarization threshold. Defaults to 0.5.
        class_set (ClassSet, optional): Channel names.
        jobs (int, optional): Parallel grid-search arms. Defaults to 1.

    Returns:
        CVResult: Fold results and a summary with mean and sample SD of every macro metric.

    """
    config.validate()
    class_set = class_set or ClassSet()
    all_ids = base_ids_of(base_records)
    folds = []
    for k, (train_ids, test_ids) in enumerate(outer_folds(all_ids, config)):
        splits = inner_splits(train_ids, config)
        inner_ids = sorted(set(i for s in splits for side in s for i in side))
        if set(inner_ids) & set(test_ids):
            raise DatasetError("Fold %d: inner search would read outer-test bases" % k)
        augmented = [
            (augment_all(select(base_records, t)), augment_all(select(base_records, v)))
            for t, v in splits
        ]
        search = _search(augmented, unet_config, config, jobs)
        logger.info("Fold %d: chose learning rate %s", k, search.best_lr)

        model = build_unet(unet_config, config.seed)
        fitted = fit(model, *augmented[0], config, learning_rate=search.best_lr)
        test_records = augment_all(select(base_records, test_ids))
        evaluation = evaluate_corpus(
            fitted.model, test_records, threshold, config.batch_size, class_set
        )
        folds.append(
            FoldResult(
                fold=k,
                learning_rate=search.best_lr,
                curves=fitted.curves,
                best_epoch=fitted.best_epoch,
                metrics=evaluation.suite,
                test_ids=sorted(test_ids),
                inner_ids=inner_ids,
                lr_losses=dict(search.losses),
            )
        )
    summary = summarize_folds(folds)
    logger.info(
        "CV accuracy %.6f +- %.6f", summary["accuracy"]["mean"], summary["accuracy"]["sd"]
    )
    return CVResult(folds, summary)


def summarize_folds(folds):
    """Mean and sample SD of each macro metric, and the learning rate with the lowest mean
    inner validation loss over all folds (ties to the smaller rate)."""
    summary = OrderedDict()
    for metric in METRICS + ("bce",):
        if metric == "bce":
            values = np.array([f.metrics.bce for f in folds], dtype=np.float64)
        else:
            values = np.array([f.metrics.macro[metric] for f in folds], dtype=np.float64)
        sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        summary[metric] = {"mean": float(values.mean()), "sd": sd}
    grid = sorted(folds[0].lr_losses)
    mean_losses = {lr: float(np.mean([f.lr_losses[lr] for f in folds])) for lr in grid}
    summary["selected_lr"] = min(grid, key=lambda lr: (mean_losses[lr], lr))
    summary["fold_learning_rates"] = [f.learning_rate for f in folds]
    return summary


class RunDirectory:
    """Numbered, append-only output directory of one training or CV run."""

    def __init__(self, path):
        self.path = Path(path)

    @classmethod
    def create(cls, root):
        """Create the next free `run-NNNN` directory under `root`; existing runs are kept."""
        root = Path(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
            taken = [
                int(m.group(1)) for m in (RUN_PATTERN.match(p.name) for p in root.iterdir()) if m
            ]
            path = root / ("run-%04d" % (max(taken, default=0) + 1))
            path.mkdir()
        except OSError as e:
            raise StorageError("Could not create a run directory in '%s': %s" % (root, e)) from e
        logger.info("Writing run to %s", path)
        return cls(path)

    def _write_text(self, name, text):
        try:
            (self.path / name).write_text(text)
        except OSError as e:
            raise StorageError("Could not write '%s': %s" % (self.path / name, e)) from e
        return self.path / name

    def write_json(self, name, doc):
        return self._write_text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_config(self, config_dict):
        return self.write_json("config.json", config_dict)

    def write_curves(self, curves, name="curves.csv"):
        path = self.path / name
        try:
            with open(path, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_loss"])
                writer.writeheader()
                for row in curves:
                    writer.writerow(
                        {
                            "epoch": row["epoch"],
                            "train_loss": repr(row["train_loss"]),
                            "val_loss": repr(row["val_loss"]),
                        }
                    )
        except OSError as e:
            raise StorageError("Could not write '%s': %s" % (path, e)) from e
        return path

    def save_weights(self, model, name="weights.mssw"):
        save_weights(model, self.path / name)
        return self.path / name

    def write_summary(self, summary):
        return self.write_json("summary.json", summary)
