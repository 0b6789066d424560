from typing import NamedTuple
import logging

import numpy as np

from Classes.Base.CustomExceptionClass import InsufficientPairs, OddBatchSize
from Classes.Patch.VoxelPatchClass import stack_patches

logger = logging.getLogger(__name__)


class Batch(NamedTuple):
    x_a: np.ndarray
    x_b: np.ndarray
    labels: np.ndarray
    pair_ids: np.ndarray


class BatchStream:
    """Label-balanced batches: half positives, half negatives.

    Positives are drawn without replacement once per epoch. Negatives are
    drawn without replacement across epochs and reshuffled only when too few
    remain for the next batch, so every negative is seen before any repeats.
    """

    def __init__(self, dataset, batch_size, seed=0):
        if batch_size < 2 or batch_size % 2:
            raise OddBatchSize(f"Batch size must be even and >= 2, got {batch_size}")
        self.half = batch_size // 2
        self.batch_size = batch_size
        self.positives = np.array([i for i, p in enumerate(dataset.pairs) if p.label == 1], dtype=np.int64)
        self.negatives = np.array([i for i, p in enumerate(dataset.pairs) if p.label == 0], dtype=np.int64)
        if len(self.positives) < self.half or len(self.negatives) < self.half:
            raise InsufficientPairs(
                f"Batch size {batch_size} needs {self.half} positives and {self.half} negatives, "
                f"dataset has {len(self.positives)} and {len(self.negatives)}",
            )
        self.rng = np.random.default_rng(seed)
        self.values = stack_patches(dataset.records)
        self.record_a = np.array([p.record_a for p in dataset.pairs], dtype=np.int64)
        self.record_b = np.array([p.record_b for p in dataset.pairs], dtype=np.int64)
        self.labels = np.array([p.label for p in dataset.pairs], dtype=np.int64)
        self.pair_ids = np.array([p.pair_id for p in dataset.pairs], dtype=np.int64)
        self._negative_order = self.rng.permutation(self.negatives)
        self._negative_cursor = 0

    @property
    def batches_per_epoch(self):
        return len(self.positives) // self.half

    def _next_negatives(self):
        if self._negative_cursor + self.half > len(self._negative_order):
            self._negative_order = self.rng.permutation(self.negatives)
            self._negative_cursor = 0
        chosen = self._negative_order[self._negative_cursor:self._negative_cursor + self.half]
        self._negative_cursor += self.half
        return chosen

    def _batch(self, rows):
        return Batch(self.values[self.record_a[rows]], self.values[self.record_b[rows]],
                     self.labels[rows], self.pair_ids[rows])

    def epoch(self):
        order = self.rng.permutation(self.positives)
        for k in range(self.batches_per_epoch):
            rows = np.concatenate([order[k * self.half:(k + 1) * self.half], self._next_negatives()])
            yield self._batch(rows)

    def __iter__(self):
        while True:
            yield from self.epoch()


def make_batches(dataset, batch_size, seed=0):
    stream = BatchStream(dataset, batch_size, seed)
    logger.debug("Batch stream: %d batches per epoch of %d", stream.batches_per_epoch, batch_size)
    return stream
