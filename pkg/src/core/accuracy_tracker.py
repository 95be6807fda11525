"""
Accuracy matrix bookkeeping, run metrics and cross-run aggregation.

R[i][j] is the accuracy on task j's test set after training task i
(0-based here, task numbers in exported files are 1-based).
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import threading

import numpy as np

from core.errors import MetricsStateError


class AccuracyMatrix:
    """Lower-triangular T x T matrix; undefined cells hold NaN"""

    def __init__(self, num_tasks: int):
        if num_tasks < 1:
            raise ValueError("An accuracy matrix needs at least one task")
        self.num_tasks = num_tasks
        self.values = np.full((num_tasks, num_tasks), np.nan, dtype=np.float64)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> 'AccuracyMatrix':
        matrix = cls(len(rows))
        for i, row in enumerate(rows):
            for j, value in enumerate(row[:i + 1]):
                if value is not None:
                    matrix.record(i, j, value)
        return matrix

    def record(self, after_task: int, task: int, accuracy: float):
        """Accuracy on `task` measured after training `after_task` (0-based)"""
        if not 0 <= task <= after_task < self.num_tasks:
            raise IndexError(f"Cell ({after_task}, {task}) is outside the lower triangle")
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"Accuracy {accuracy} outside [0, 1]")
        self.values[after_task, task] = accuracy

    def is_complete(self) -> bool:
        return not np.any(np.isnan(self.values[np.tril_indices(self.num_tasks)]))

    def row(self, after_task: int) -> List[float]:
        return [float(v) for v in self.values[after_task, :after_task + 1]]

    def first_task_curve(self) -> List[float]:
        """Accuracy on the first task after each task"""
        return [float(v) for v in self.values[:, 0]]

    def to_csv(self) -> str:
        """Lower-triangular matrix with six decimals; blank cells above the diagonal"""
        header = ['after_task'] + [f"acc_task_{j + 1}" for j in range(self.num_tasks)]
        lines = [','.join(header)]
        for i in range(self.num_tasks):
            cells = [str(i + 1)]
            for j in range(self.num_tasks):
                cells.append(f"{self.values[i, j]:.6f}" if j <= i and not np.isnan(self.values[i, j]) else '')
            lines.append(','.join(cells))
        return '\n'.join(lines) + '\n'


@dataclass
class RunMetrics:
    avg: float
    last: float
    first_task_curve: List[float]
    final_accuracies: List[float]

    @property
    def first_task_final(self) -> float:
        return self.first_task_curve[-1]

    def to_record(self) -> dict:
        return {
            'avg': self.avg,
            'last': self.last,
            'first_task_curve': self.first_task_curve,
            'final_accuracies': self.final_accuracies,
        }


def compute_metrics(matrix: AccuracyMatrix) -> RunMetrics:
    """
    avg:  mean over t of the mean accuracy on tasks 1..t after task t
    last: mean accuracy over all tasks after the final task
    """
    if not matrix.is_complete():
        missing = [(int(i) + 1, int(j) + 1) for i, j in zip(*np.tril_indices(matrix.num_tasks))
                   if np.isnan(matrix.values[i, j])]
        raise MetricsStateError(f"Accuracy matrix has unpopulated cells (after_task, task): {missing}")

    count = matrix.num_tasks
    incremental = [float(np.mean(matrix.values[t, :t + 1])) for t in range(count)]
    final = matrix.row(count - 1)
    return RunMetrics(
        avg=float(np.mean(incremental)),
        last=float(np.mean(final)),
        first_task_curve=matrix.first_task_curve(),
        final_accuracies=final,
    )


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)"""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValueError("Cannot aggregate an empty list")
    std = float(np.std(data, ddof=1)) if data.size > 1 else 0.0
    return float(np.mean(data)), std


def summarize(metrics: Sequence[RunMetrics]) -> dict:
    """Mean and sample std of avg, last and the first-task curve over runs"""
    avg = mean_std([m.avg for m in metrics])
    last = mean_std([m.last for m in metrics])
    first = mean_std([m.first_task_final for m in metrics])
    curves = np.array([m.first_task_curve for m in metrics])
    return {
        'runs': len(metrics),
        'avg_mean': avg[0], 'avg_std': avg[1],
        'last_mean': last[0], 'last_std': last[1],
        'first_task_final_mean': first[0], 'first_task_final_std': first[1],
        'first_task_curve_mean': [float(v) for v in np.mean(curves, axis=0)],
        'first_task_curve_std': [float(v) for v in (np.std(curves, axis=0, ddof=1)
                                                    if len(metrics) > 1 else np.zeros(curves.shape[1]))],
    }


class RunCollector:
    """
    Thread-safe store of finished runs keyed by (arm, class_order_seed, seed).
    Workers add; the coordinator reads once everything has finished.
    """

    def __init__(self):
        self.results: Dict[Tuple[str, int, int], RunMetrics] = {}
        self.failures: Dict[Tuple[str, int, int], str] = {}
        self.lock = threading.RLock()
        self.logger = logging.getLogger(__name__)

    def add(self, key: Tuple[str, int, int], metrics: RunMetrics):
        with self.lock:
            self.results[key] = metrics

    def fail(self, key: Tuple[str, int, int], reason: str):
        with self.lock:
            self.failures[key] = reason
            self.logger.error(f"Run {key} failed: {reason}")

    def ordered(self, arm: Optional[str] = None) -> List[Tuple[Tuple[str, int, int], RunMetrics]]:
        with self.lock:
            return sorted(((k, v) for k, v in self.results.items() if arm is None or k[0] == arm),
                          key=lambda item: item[0])

    def aggregate(self, arm: str) -> dict:
        """Summary over all runs of `arm`, overall and per class order"""
        runs = self.ordered(arm)
        if not runs:
            return {'runs': 0}
        summary = summarize([metrics for _, metrics in runs])
        by_order: Dict[int, List[RunMetrics]] = {}
        for (_, order, _), metrics in runs:
            by_order.setdefault(order, []).append(metrics)
        summary['by_class_order_seed'] = {str(order): summarize(group) for order, group in sorted(by_order.items())}
        return summary
