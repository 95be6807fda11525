"""
The function set of frozen past-task networks, the relaxation schemes that
pick which of them to match, and assembly of the per-iteration loss list
(one cross-entropy term plus one KL term per matched function).

Task numbers are 1-based throughout this module: snapshot i was frozen after
task i, and during task t the candidates are 1 .. t-1.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional
import logging
import math

import numpy as np

from core.errors import ConfigError, LabelRangeError, SequencingError
from core.numerics import softmax
from network.mlp import LossSpec, Network
from network.snapshot import FunctionSnapshot

logger = logging.getLogger(__name__)

STRONG = 'strong'
SCHEME1 = 'scheme1_prefix_plus_last'
SCHEME2 = 'scheme2_prefix_only'
SCHEME3 = 'scheme3_interval'
SCHEME4 = 'scheme4_random'
SINGLE_SHOT_LAST = 'single_shot_last'
SINGLE_FUNCTION = 'single_function'
PLAIN_SGD = 'none_plain_sgd'

SCHEME_KINDS = (STRONG, SCHEME1, SCHEME2, SCHEME3, SCHEME4, SINGLE_SHOT_LAST, SINGLE_FUNCTION, PLAIN_SGD)

# floor() guard so that e.g. 0.29 * 100 lands on 29, not 28
_FLOOR_EPS = 1e-9

NEW_TASK_CE = 'new_task_ce'
MATCH_KL = 'match_kl'

# what the student distribution of a KL term spans
KL_COVERED = 'covered'
KL_SEEN = 'seen'
KL_SUPPORTS = (KL_COVERED, KL_SEEN)


def _floor(value: float) -> int:
    return int(math.floor(value + _FLOOR_EPS))


@dataclass(frozen=True)
class MatchingScheme:
    kind: str = STRONG
    fraction: float = 0.5
    step: int = 2
    count: int = 2
    seed: int = 0
    index: int = 1

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigError('scheme.kind', f"unknown scheme '{self.kind}', expected one of {SCHEME_KINDS}")
        if self.kind in (SCHEME1, SCHEME2) and not 0 < self.fraction <= 1:
            raise ConfigError('scheme.fraction', f"must lie in (0, 1], got {self.fraction}")
        if self.kind == SCHEME3 and self.step < 2:
            raise ConfigError('scheme.step', f"must be at least 2, got {self.step}")
        if self.kind == SCHEME4 and self.count < 1:
            raise ConfigError('scheme.count', f"must be at least 1, got {self.count}")
        if self.kind == SINGLE_FUNCTION and self.index < 1:
            raise ConfigError('scheme.index', f"must be at least 1, got {self.index}")

    @property
    def matches(self) -> bool:
        return self.kind != PLAIN_SGD

    def describe(self) -> str:
        if self.kind in (SCHEME1, SCHEME2):
            return f"{self.kind}({self.fraction:g})"
        if self.kind == SCHEME3:
            return f"{self.kind}({self.step})"
        if self.kind == SCHEME4:
            return f"{self.kind}({self.count}, seed={self.seed})"
        if self.kind == SINGLE_FUNCTION:
            return f"{self.kind}({self.index})"
        return self.kind

    def select(self, t: int) -> List[int]:
        """Snapshot task numbers to match while training task t"""
        if self.kind == PLAIN_SGD:
            return []
        if t < 2:
            raise SequencingError(f"Scheme {self.kind} needs at least one earlier task, got t={t}")

        previous = t - 1
        if self.kind == STRONG:
            chosen = range(1, previous + 1)
        elif self.kind == SCHEME1:
            chosen = set(range(1, _floor(self.fraction * (t - 2)) + 1)) | {previous}
        elif self.kind == SCHEME2:
            chosen = range(1, max(1, _floor(self.fraction * previous)) + 1)
        elif self.kind == SCHEME3:
            chosen = range(1, previous + 1, self.step)
        elif self.kind == SCHEME4:
            if self.count >= previous:
                chosen = range(1, previous + 1)
            else:
                rng = np.random.default_rng([self.seed, t])
                chosen = (rng.choice(previous, size=self.count, replace=False) + 1).tolist()
        elif self.kind == SINGLE_SHOT_LAST:
            chosen = [previous]
        else:
            chosen = [self.index] if self.index <= previous else []

        return sorted(set(int(i) for i in chosen))


class FunctionSet:
    """Append-only, task-ordered list of frozen snapshots"""

    def __init__(self):
        self._snapshots: List[FunctionSnapshot] = []
        self.logger = logging.getLogger(__name__)

    def __len__(self) -> int:
        return len(self._snapshots)

    def __iter__(self):
        return iter(self._snapshots)

    def append(self, snap: FunctionSnapshot):
        if self._snapshots:
            last = self._snapshots[-1].covered_classes
            if snap.covered_classes.stop <= last.stop:
                raise SequencingError(
                    f"Snapshot coverage {snap.covered_classes} does not extend {last}")
        self._snapshots.append(snap)
        self.logger.debug(f"Function set now holds {len(self._snapshots)} snapshots")

    def get(self, task: int) -> FunctionSnapshot:
        """Snapshot frozen after task `task` (1-based)"""
        if not 1 <= task <= len(self._snapshots):
            raise LabelRangeError(f"No snapshot for task {task}; set holds {len(self._snapshots)}")
        return self._snapshots[task - 1]


def select_subset(function_set: FunctionSet, scheme: MatchingScheme, t: int) -> List[int]:
    """Snapshot task numbers matched while training task t, checked against the set"""
    if scheme.matches and len(function_set) != t - 1:
        raise SequencingError(
            f"Training task {t} needs {t - 1} snapshots, function set holds {len(function_set)}")
    return scheme.select(t)


def total_matching_count(scheme: MatchingScheme, total_tasks: int) -> int:
    """Number of snapshot matchings summed over tasks 2..T"""
    if total_tasks < 2:
        raise ValueError(f"Need at least 2 tasks, got {total_tasks}")
    return sum(len(scheme.select(t)) for t in range(2, total_tasks + 1))


@dataclass(frozen=True)
class MatchingConfig:
    """
    kl_support 'covered': each KL term compares distributions over the
    snapshot's own classes only. 'seen': the snapshot's distribution is laid
    over every class seen through the current task, with zero mass on the
    classes it never learned, and the student softmax spans the same range.
    """
    kl_weight: float = 1.0
    temperature: float = 2.0
    normalize_kl: bool = False
    kl_support: str = KL_COVERED

    def __post_init__(self):
        if self.kl_support not in KL_SUPPORTS:
            raise ConfigError('training.kl_support',
                              f"unknown support '{self.kl_support}', expected one of {KL_SUPPORTS}")


@dataclass(frozen=True)
class LossComponent:
    kind: str
    class_range: range
    weight: float
    loss: LossSpec
    target_snapshot_index: Optional[int] = None


def soft_targets(snap: FunctionSnapshot, x, temperature: float) -> np.ndarray:
    """Temperature-softened outputs of `snap` over the classes it covers"""
    return softmax(snap.covered_logits(np.atleast_2d(x)), temperature)


def extend_targets(target: np.ndarray, covered: range, support: range) -> np.ndarray:
    """Zero-pad covered-class targets out to `support`, which starts at the same class"""
    if support.start != covered.start or support.stop < covered.stop:
        raise LabelRangeError(f"Support {support} does not extend coverage {covered}")
    padding = np.zeros((target.shape[0], support.stop - covered.stop), dtype=np.float64)
    return np.concatenate([target, padding], axis=1)


def build_losses(net: Network,
                 function_set: FunctionSet,
                 subset: List[int],
                 x,
                 labels,
                 task_classes: range,
                 t: int,
                 config: MatchingConfig = MatchingConfig(),
                 cached_targets: Optional[Dict[int, np.ndarray]] = None) -> List[LossComponent]:
    """
    Loss components for one mini-batch of task t.

    The cross-entropy term spans every class seen through task t; each KL term
    compares the snapshot's softened outputs with the live network, over the
    snapshot's classes or over all seen classes (see MatchingConfig).
    `cached_targets` maps a snapshot task number to precomputed covered-class
    targets for exactly these rows of `x`.
    """
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if np.any(labels < task_classes.start) or np.any(labels >= task_classes.stop):
        raise LabelRangeError(f"Labels outside task {t} classes {task_classes}")
    if task_classes.stop > net.spec.total_classes:
        raise LabelRangeError(f"Task classes {task_classes} exceed the head")

    seen = range(0, task_classes.stop)
    components = [LossComponent(NEW_TASK_CE, seen, 1.0, LossSpec.cross_entropy(labels, seen))]

    if not subset:
        return components

    kl_weight = config.kl_weight / len(subset) if config.normalize_kl else config.kl_weight
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for index in subset:
        if not 1 <= index <= min(t - 1, len(function_set)):
            raise LabelRangeError(f"Subset index {index} outside 1..{t - 1}")
        snap = function_set.get(index)
        if cached_targets is not None and index in cached_targets:
            target = cached_targets[index]
        else:
            target = soft_targets(snap, batch, config.temperature)
        support = snap.covered_classes
        if config.kl_support == KL_SEEN:
            target = extend_targets(target, support, seen)
            support = seen
        components.append(LossComponent(
            MATCH_KL,
            support,
            kl_weight,
            LossSpec.kl(target, support, config.temperature),
            target_snapshot_index=index,
        ))
    return components
