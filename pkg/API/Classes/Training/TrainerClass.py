from dataclasses import dataclass, field, fields
import logging
import time

import numpy as np
import pandas as pd

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import (
    EmptyEvaluationSet, HeadMismatch, InvalidConfig, OddBatchSize, ShapeMismatch,
)
from Classes.Descriptor import ModelClass as M
from Classes.Descriptor.CheckpointClass import save_checkpoint
from Classes.Network.AdamClass import AdamState, adam_step
from Classes.Network.LossClass import hinge_embedding_loss, l2_penalty, labels_to_classes, softmax_cross_entropy
from Classes.Patch.BatchClass import make_batches

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = Config.BATCH_SIZE
    learning_rate: float = Config.LEARNING_RATE
    l2_eta: float = Config.L2_ETA
    epochs: int = Config.EPOCHS
    seed: int = 0
    head: str = 'metric'
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 2 or self.batch_size % 2:
            raise OddBatchSize(f"batch_size must be even and >= 2, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2_eta < 0:
            raise InvalidConfig(f"l2_eta must be >= 0, got {self.l2_eta}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.head not in Config.HEADS:
            raise InvalidConfig(f"head must be one of {', '.join(Config.HEADS)}, got '{self.head}'")
        if self.checkpoint_every < 0:
            raise InvalidConfig(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")

    @classmethod
    def from_mapping(cls, mapping):
        return Config.from_mapping(cls, mapping)


def read_train_config(path):
    return TrainConfig.from_mapping(Config.read_config_file(path, [f.name for f in fields(TrainConfig)]))


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    epoch_means: list = field(default_factory=list)
    params: object = None
    seconds: float = 0.0
    adam_steps: int = 0

    @property
    def steps(self):
        return len(self.losses)

    def to_frame(self):
        return pd.DataFrame({
            'step': np.arange(1, len(self.losses) + 1),
            'epoch': self.epochs,
            'loss': self.losses,
        })


def _merge(*grad_sets):
    total = {}
    for grads in grad_sets:
        for name, g in grads.items():
            total[name] = total[name] + g if name in total else g
    return total


def metric_step(params, batch, eta):
    """Loss and gradients of batch-mean cross entropy plus the l2 term."""
    n = len(batch.labels)
    desc, cache = M.forward_features(params, np.concatenate([batch.x_a, batch.x_b]), 'train')
    logits, metric_cache = M.forward_metric(params, desc[:n], desc[n:])
    ce, dlogits = softmax_cross_entropy(logits, labels_to_classes(batch.labels))
    metric_grads, dda, ddb = M.backward_metric(params, dlogits, metric_cache)
    feature_grads = M.backward_features(params, np.concatenate([dda, ddb]), cache)
    l2, l2_grads = l2_penalty(params.tensors, eta)
    return ce + l2, _merge(metric_grads, feature_grads, l2_grads)


def hinge_step(params, batch, eta):
    """Loss and gradients of batch-mean hinge embedding on descriptor distance plus l2."""
    n = len(batch.labels)
    desc, cache = M.forward_features(params, np.concatenate([batch.x_a, batch.x_b]), 'train')
    diff = desc[:n] - desc[n:]
    distance = np.sqrt(np.sum(diff * diff, axis=1))
    losses, dloss = hinge_embedding_loss(distance, batch.labels, params.config.hinge_margin)
    safe = np.where(distance > 0, distance, 1.0)
    # d distance / d a = (a - b) / distance, taken as 0 where the descriptors coincide
    dda = np.where(distance[:, None] > 0, (dloss / n / safe)[:, None] * diff, 0.0)
    feature_grads = M.backward_features(params, np.concatenate([dda, -dda]), cache)
    l2, l2_grads = l2_penalty(params.tensors, eta)
    return float(np.mean(losses)) + l2, _merge(feature_grads, l2_grads)


def train(model, dataset, config=None, checkpoint_path=None):
    """Minimise the head's loss over ``dataset`` with Adam after every batch.

    ``model`` is left untouched; the trained copy is ``report.params``.
    """
    config = config or TrainConfig()
    if config.head != model.config.head:
        raise HeadMismatch(f"Train config asks for the '{config.head}' head, model has '{model.config.head}'")
    if dataset.params.channels != model.config.channels:
        raise ShapeMismatch(f"Model expects '{model.config.channels}' patches, dataset holds '{dataset.params.channels}'")
    step = metric_step if config.head == 'metric' else hinge_step

    stream = make_batches(dataset, config.batch_size, config.seed)
    params = model.copy()
    state = AdamState(learning_rate=config.learning_rate)
    report = TrainReport()
    started = time.perf_counter()
    logger.info("Training %s head: %d epoch(s) x %d batch(es) of %d",
                config.head, config.epochs, stream.batches_per_epoch, config.batch_size)

    for epoch in range(1, config.epochs + 1):
        epoch_losses = []
        for batch in stream.epoch():
            loss, grads = step(params, batch, config.l2_eta)
            params.tensors, state = adam_step(params.tensors, grads, state)
            report.losses.append(loss)
            report.epochs.append(epoch)
            epoch_losses.append(loss)
            logger.debug("epoch %d step %d loss %.6f", epoch, state.step_count, loss)
        report.epoch_means.append(float(np.mean(epoch_losses)))
        logger.info("epoch %d/%d mean loss %.6f", epoch, config.epochs, report.epoch_means[-1])
        if checkpoint_path and config.checkpoint_every and epoch % config.checkpoint_every == 0 and epoch < config.epochs:
            save_checkpoint(params, checkpoint_path)

    if checkpoint_path:
        save_checkpoint(params, checkpoint_path)
    report.params = params
    report.adam_steps = state.step_count
    report.seconds = time.perf_counter() - started
    return params, report


def evaluate_split(model, pairs, batch_size=256):
    """Scores (higher = more likely a match) and labels for ``pairs``.

    Metric models score with the match probability, hinge models with the
    negated descriptor distance.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyEvaluationSet("No pairs to evaluate")
    slots, patches = {}, []
    for pair in pairs:
        for patch in (pair.patch_a, pair.patch_b):
            if id(patch) not in slots:
                slots[id(patch)] = len(patches)
                patches.append(patch)
    desc = M.describe(model, patches, batch_size)
    a = desc[[slots[id(p.patch_a)] for p in pairs]]
    b = desc[[slots[id(p.patch_b)] for p in pairs]]
    if model.config.head == 'metric':
        scores = np.concatenate([M.metric_forward(model, a[s:s + batch_size], b[s:s + batch_size])
                                 for s in range(0, len(pairs), batch_size)])
    else:
        scores = -np.atleast_1d(M.euclidean_distance(a, b))
    return scores, np.array([p.label for p in pairs], dtype=np.int64)
