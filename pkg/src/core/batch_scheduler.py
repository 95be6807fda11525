from typing import List, Tuple
import logging

import numpy as np


class BatchScheduler:
    """
    Splits one task's training set into mini-batches.

    Each epoch uses a fresh permutation from a generator keyed by
    (seed, task, epoch), so a run's batch order is fully determined by its
    seeds and does not depend on what ran before it.
    """

    def __init__(self, num_samples: int, batch_size: int, seed: int, task: int):
        if num_samples < 1:
            raise ValueError("Cannot schedule batches over an empty training set")
        if batch_size < 1:
            raise ValueError(f"Batch size must be positive, got {batch_size}")
        self.num_samples = num_samples
        self.batch_size = batch_size
        self.seed = seed
        self.task = task
        self.ranges: List[Tuple[int, int]] = []
        self.logger = logging.getLogger(__name__)

        self._calculate_ranges()

    def _calculate_ranges(self):
        """Contiguous [start, end) ranges; the last batch takes the remainder"""
        ranges = []
        for start in range(0, self.num_samples, self.batch_size):
            ranges.append((start, min(start + self.batch_size, self.num_samples)))
        self.ranges = ranges
        self.logger.debug(
            f"Task {self.task}: {self.num_samples} samples in {len(ranges)} batches of <= {self.batch_size}")

    def __len__(self) -> int:
        return len(self.ranges)

    def epoch_batches(self, epoch: int) -> List[np.ndarray]:
        """Sample indices for every batch of `epoch`"""
        order = np.random.default_rng([self.seed, self.task, epoch]).permutation(self.num_samples)
        return [order[start:end] for start, end in self.ranges]
