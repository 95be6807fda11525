"""
Class-incremental task streams.

Dataset classes are permuted by `class_order_seed` and chunked into tasks.
Inside a stream every sample carries its *head* label: the position of its
class in the permuted order, so task t always owns a contiguous block of
output units and the classes seen through task t are [0, c_t).
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple
import csv
import logging
import math
import os

import numpy as np

from core.errors import ConfigError, DataError, DataFormatError, LabelRangeError

logger = logging.getLogger(__name__)


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, feature_dim)
    labels: np.ndarray    # (n,), class indices in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.features.shape} features do not match {self.labels.shape} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"Labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise DataError("Features contain non-finite values")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def class_counts(self) -> Dict[int, int]:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}


@dataclass
class Task:
    task_id: int            # 1-based
    class_ids: Tuple[int, ...]
    head_classes: range
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass
class TaskStream:
    tasks: List[Task]
    class_order_seed: int
    class_order: Tuple[int, ...]
    feature_dim: int

    @property
    def total_classes(self) -> int:
        return len(self.class_order)

    def __len__(self) -> int:
        return len(self.tasks)

    def task(self, t: int) -> Task:
        return self.tasks[t - 1]

    def seen_classes(self, t: int) -> range:
        """Head classes of tasks 1..t"""
        return range(0, self.tasks[t - 1].head_classes.stop)

    def class_sample_counts(self) -> Dict[int, Tuple[int, int]]:
        """(train, test) sample counts per dataset class"""
        counts = {}
        for task in self.tasks:
            for offset, class_id in enumerate(task.class_ids):
                head = task.head_classes.start + offset
                counts[class_id] = (int(np.sum(task.train_y == head)), int(np.sum(task.test_y == head)))
        return counts


def class_order(num_classes: int, class_order_seed: int) -> Tuple[int, ...]:
    """Dataset classes in training order: a permutation drawn from `class_order_seed`"""
    return tuple(int(c) for c in np.random.default_rng(class_order_seed).permutation(num_classes))


def build_stream(train: LabeledDataset, test: LabeledDataset,
                 classes_per_task: int, class_order_seed: int) -> TaskStream:
    num_classes = train.num_classes
    if classes_per_task < 1 or num_classes % classes_per_task != 0:
        raise ConfigError('stream.classes_per_task',
                          f"{num_classes} classes cannot be split into tasks of {classes_per_task}")

    order = class_order(num_classes, class_order_seed)
    head_of = np.empty(num_classes, dtype=np.int64)
    head_of[list(order)] = np.arange(num_classes)

    tasks = []
    for index in range(num_classes // classes_per_task):
        start = index * classes_per_task
        class_ids = order[start:start + classes_per_task]
        train_mask = np.isin(train.labels, class_ids)
        test_mask = np.isin(test.labels, class_ids)
        tasks.append(Task(
            task_id=index + 1,
            class_ids=tuple(class_ids),
            head_classes=range(start, start + classes_per_task),
            train_x=train.features[train_mask],
            train_y=head_of[train.labels[train_mask]],
            test_x=test.features[test_mask],
            test_y=head_of[test.labels[test_mask]],
        ))

    logger.info(f"Built {len(tasks)} tasks of {classes_per_task} classes, class order {list(order)}")
    return TaskStream(tasks, class_order_seed, order, train.feature_dim)


def make_blobs_stream(num_classes: int = 10,
                      classes_per_task: int = 2,
                      feature_dim: int = 16,
                      samples_per_class_train: int = 200,
                      samples_per_class_test: int = 50,
                      cluster_spread: float = 0.3,
                      class_order_seed: int = 0,
                      data_seed: int = 0) -> TaskStream:
    """
    Isotropic Gaussian blobs around centres drawn uniformly from [-1, 1]^dim.

    Each class draws its samples from its own generator keyed by
    (data_seed, class), so the class datasets do not depend on the class order.
    """
    if cluster_spread <= 0:
        raise ConfigError('dataset.cluster_spread', f"must be positive, got {cluster_spread}")
    if num_classes < 1 or classes_per_task < 1 or num_classes % classes_per_task != 0:
        raise ConfigError('stream.classes_per_task',
                          f"{num_classes} classes cannot be split into tasks of {classes_per_task}")

    centers = np.random.default_rng(data_seed).uniform(-1.0, 1.0, size=(num_classes, feature_dim))

    splits = {'train': ([], []), 'test': ([], [])}
    for label in range(num_classes):
        rng = np.random.default_rng([data_seed, label + 1])
        for name, count in (('train', samples_per_class_train), ('test', samples_per_class_test)):
            features = centers[label] + cluster_spread * rng.standard_normal((count, feature_dim))
            splits[name][0].append(features)
            splits[name][1].append(np.full(count, label, dtype=np.int64))

    train = LabeledDataset(np.concatenate(splits['train'][0]), np.concatenate(splits['train'][1]), num_classes)
    test = LabeledDataset(np.concatenate(splits['test'][0]), np.concatenate(splits['test'][1]), num_classes)
    return build_stream(train, test, classes_per_task, class_order_seed)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def read_labeled_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rows of feature floats followed by an integer label. Blank lines and lines
    starting with '#' are skipped. The first row may be a header if none of
    its fields is numeric and it has as many fields as the row after it.
    """
    if not os.path.exists(path):
        raise DataError(f"Dataset file not found: {path}")

    features, labels = [], []
    width = None
    header = None  # (line number, field count)
    rows_read = 0
    with open(path, 'r', newline='') as f:
        for line_number, row in enumerate(csv.reader(f), start=1):
            tokens = [token.strip() for token in row]
            if not tokens or all(not token for token in tokens) or tokens[0].startswith('#'):
                continue
            rows_read += 1
            if rows_read == 1 and not any(_is_number(token) for token in tokens):
                header = (line_number, len(tokens))
                continue
            if header is not None and rows_read == 2 and len(tokens) != header[1]:
                raise DataFormatError(path, header[0],
                                      f"header has {header[1]} fields, first data row has {len(tokens)}")
            if len(tokens) < 2:
                raise DataFormatError(path, line_number, "expected at least one feature and a label")
            if width is not None and len(tokens) != width:
                raise DataFormatError(path, line_number, f"expected {width} fields, got {len(tokens)}")
            width = len(tokens)
            try:
                values = [float(token) for token in tokens[:-1]]
                label = int(tokens[-1])
            except ValueError as e:
                raise DataFormatError(path, line_number, str(e)) from e
            if not all(math.isfinite(v) for v in values) or label < 0:
                raise DataFormatError(path, line_number, "non-finite feature or negative label")
            features.append(values)
            labels.append(label)

    if not features:
        raise DataError(f"No samples in {path}")
    return np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64)


def load_csv_stream(path: str,
                    classes_per_task: int,
                    class_order_seed: int = 0,
                    train_fraction: float = 0.8,
                    split_seed: int = 0) -> TaskStream:
    """Stratified per-class train/test split of a CSV dataset, then task chunking"""
    if not 0 < train_fraction < 1:
        raise ConfigError('dataset.train_fraction', f"must lie in (0, 1), got {train_fraction}")

    features, raw_labels = read_labeled_csv(path)
    class_ids = np.unique(raw_labels)
    labels = np.searchsorted(class_ids, raw_labels)

    train_rows, test_rows = [], []
    for index, class_id in enumerate(class_ids):
        rows = np.flatnonzero(labels == index)
        if rows.size < 2:
            raise DataError(f"Class {int(class_id)} has {rows.size} sample(s); at least 2 are needed")
        rows = np.random.default_rng([split_seed, int(class_id)]).permutation(rows)
        n_train = min(max(int(math.floor(train_fraction * rows.size + 1e-9)), 1), rows.size - 1)
        train_rows.append(rows[:n_train])
        test_rows.append(rows[n_train:])

    train_idx = np.sort(np.concatenate(train_rows))
    test_idx = np.sort(np.concatenate(test_rows))
    num_classes = len(class_ids)
    logger.info(f"Loaded {len(labels)} samples of {num_classes} classes from {path}")

    stream = build_stream(
        LabeledDataset(features[train_idx], labels[train_idx], num_classes),
        LabeledDataset(features[test_idx], labels[test_idx], num_classes),
        classes_per_task,
        class_order_seed,
    )
    # report the file's own class labels
    for task in stream.tasks:
        task.class_ids = tuple(int(class_ids[c]) for c in task.class_ids)
    return stream


@dataclass
class DataRead:
    during_task: int
    requested_task: int
    split: str
    samples: int


class InstrumentedSource:
    """
    The trainer's only door to the stream. Every read is recorded so a run can
    prove it never touched earlier tasks' training samples. With `strict` an
    offending read raises instead.
    """

    def __init__(self, stream: TaskStream, strict: bool = False):
        self.stream = stream
        self.strict = strict
        self.current_task = 0
        self.reads: List[DataRead] = []
        self.logger = logging.getLogger(__name__)

    def begin_task(self, t: int):
        self.current_task = t

    def train_data(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        """Training samples of task t, recorded against the task being trained"""
        task = self.stream.task(t)
        if t != self.current_task:
            self.logger.warning(f"Training data of task {t} requested during task {self.current_task}")
            if self.strict:
                raise DataError(f"Task {self.current_task} may not read training data of task {t}")
        self.reads.append(DataRead(self.current_task, t, 'train', len(task.train_y)))
        return task.train_x, task.train_y

    def test_data(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        task = self.stream.task(t)
        self.reads.append(DataRead(self.current_task, t, 'test', len(task.test_y)))
        return task.test_x, task.test_y

    def earlier_training_reads(self) -> List[DataRead]:
        """Reads of an earlier task's training split while a later task trained"""
        return [r for r in self.reads if r.split == 'train' and r.requested_task < r.during_task]
