from dataclasses import dataclass, field
from typing import Callable, List, Optional
import logging

import numpy as np

from core.accuracy_tracker import AccuracyMatrix, RunMetrics, compute_metrics
from core.batch_scheduler import BatchScheduler
from core.credit_optimizer import CreditSettings, credit_step
from core.errors import DimensionError
from core.knowledge_space import (KL_COVERED, FunctionSet, MatchingConfig, MatchingScheme, build_losses,
                                  select_subset, soft_targets)
from core.task_stream import InstrumentedSource, TaskStream
from core.update_rules import UpdateRule
from network.mlp import MlpSpec, Network, forward, init
from network.snapshot import snapshot


@dataclass(frozen=True)
class TrainingSettings:
    epochs_first: int = 40
    epochs_rest: int = 40
    batch_size: int = 32
    kl_weight: float = 1.0
    temperature: float = 2.0
    normalize_kl: bool = False
    cache_targets: bool = False
    log_every: int = 50
    kl_support: str = KL_COVERED

    def epochs_for(self, t: int) -> int:
        return self.epochs_first if t == 1 else self.epochs_rest


@dataclass(frozen=True)
class RunSeeds:
    model_seed: int = 0
    shuffle_seed: int = 0


@dataclass
class TaskSummary:
    task: int
    matched: List[int]
    iterations: int
    mean_loss: float
    conflicts: int
    mean_phi: Optional[float]
    degenerate_pairs: int
    accuracies: List[float]

    def to_record(self) -> dict:
        return {
            'task': self.task,
            'matched': self.matched,
            'iterations': self.iterations,
            'mean_loss': self.mean_loss,
            'conflicts': self.conflicts,
            'mean_phi': self.mean_phi,
            'degenerate_pairs': self.degenerate_pairs,
            'accuracies': self.accuracies,
        }


@dataclass
class ContinualResult:
    accuracy: AccuracyMatrix
    metrics: RunMetrics
    task_summaries: List[TaskSummary]
    function_set: FunctionSet
    network: Network
    source: InstrumentedSource
    diagnostics: List[dict] = field(default_factory=list)


def evaluate(net: Network, x: np.ndarray, y: np.ndarray, seen: range) -> float:
    """Accuracy of the argmax over the seen classes; no task identity is given"""
    if len(y) == 0:
        return 0.0
    logits = forward(net, x)[:, seen.start:seen.stop]
    predictions = np.argmax(logits, axis=1) + seen.start
    return float(np.mean(predictions == y))


class ContinualTrainer:
    """
    Trains one network through a task stream: per task, mini-batch training
    on that task's data with the matching scheme and the credit optimizer,
    then a frozen snapshot, then evaluation on every task seen so far.
    """

    def __init__(self,
                 stream: TaskStream,
                 hidden_dims,
                 scheme: MatchingScheme,
                 rule_factory: Callable[[], UpdateRule],
                 credit_enabled: bool = False,
                 settings: TrainingSettings = TrainingSettings(),
                 seeds: RunSeeds = RunSeeds(),
                 credit: CreditSettings = CreditSettings(),
                 activation: str = 'relu',
                 diagnostics_sink: Optional[Callable[[dict], None]] = None,
                 source: Optional[InstrumentedSource] = None,
                 run_label: str = 'run'):
        if len(stream) < 1:
            raise DimensionError("A task stream needs at least one task")

        self.stream = stream
        self.spec = MlpSpec(stream.feature_dim, tuple(hidden_dims), stream.total_classes, activation)
        self.scheme = scheme
        self.rule_factory = rule_factory
        self.credit_enabled = credit_enabled
        self.settings = settings
        self.seeds = seeds
        self.credit = credit
        self.matching = MatchingConfig(settings.kl_weight, settings.temperature, settings.normalize_kl,
                                       settings.kl_support)
        self.diagnostics_sink = diagnostics_sink
        self.source = source or InstrumentedSource(stream)
        self.run_label = run_label

        self.network: Optional[Network] = None
        self.function_set = FunctionSet()
        self.accuracy = AccuracyMatrix(len(stream))
        self.summaries: List[TaskSummary] = []
        self.diagnostics: List[dict] = []
        self.iteration = 0

        self.logger = logging.getLogger(__name__)

    def run(self) -> ContinualResult:
        """Train every task in order: fit, freeze a snapshot, evaluate"""
        self.network = init(self.spec, self.seeds.model_seed)
        self.logger.info(
            f"[{self.run_label}] {len(self.stream)} tasks, scheme {self.scheme.describe()}, "
            f"credit {'on' if self.credit_enabled else 'off'}, {self.spec.param_count} parameters")

        for t in range(1, len(self.stream) + 1):
            summary = self._train_task(t)
            self.function_set.append(snapshot(self.network, self.stream.seen_classes(t), t))
            summary.accuracies = self._evaluate_seen(t)
            self.summaries.append(summary)
            self.logger.info(
                f"[{self.run_label}] task {t}: loss {summary.mean_loss:.4f}, matched {summary.matched}, "
                f"conflicts {summary.conflicts}, accuracies {[round(a, 4) for a in summary.accuracies]}")

        metrics = compute_metrics(self.accuracy)
        self.logger.info(f"[{self.run_label}] avg {metrics.avg:.4f}, last {metrics.last:.4f}")
        return ContinualResult(self.accuracy, metrics, self.summaries, self.function_set,
                               self.network, self.source, self.diagnostics)

    def _train_task(self, t: int) -> TaskSummary:
        self.source.begin_task(t)
        train_x, train_y = self.source.train_data(t)
        task_classes = self.stream.task(t).head_classes
        subset = select_subset(self.function_set, self.scheme, t) if t > 1 else []

        cached = None
        if self.settings.cache_targets and subset:
            cached = {i: soft_targets(self.function_set.get(i), train_x, self.settings.temperature)
                      for i in subset}

        scheduler = BatchScheduler(len(train_y), self.settings.batch_size, self.seeds.shuffle_seed, t)
        losses, conflicts, degenerate, phis = [], 0, 0, []
        rule = self.rule_factory()

        for epoch in range(self.settings.epochs_for(t)):
            for batch in scheduler.epoch_batches(epoch):
                self.iteration += 1
                x = train_x[batch]
                components = build_losses(
                    self.network, self.function_set, subset, x, train_y[batch], task_classes, t,
                    self.matching,
                    {i: targets[batch] for i, targets in cached.items()} if cached else None)
                diag = credit_step(rule, self.network, x, components, self.credit_enabled,
                                   self.credit, self.iteration)

                losses.append(diag.total_loss)
                conflicts += diag.conflict_count
                degenerate += diag.degenerate_pairs
                if diag.mean_phi is not None:
                    phis.append(diag.mean_phi)
                if self.settings.log_every and self.iteration % self.settings.log_every == 0:
                    self._emit(dict(diag.to_record(), task=t, epoch=epoch))

        return TaskSummary(
            task=t,
            matched=subset,
            iterations=len(losses),
            mean_loss=float(np.mean(losses)) if losses else 0.0,
            conflicts=conflicts,
            mean_phi=float(np.mean(phis)) if phis else None,
            degenerate_pairs=degenerate,
            accuracies=[],
        )

    def _evaluate_seen(self, t: int) -> List[float]:
        seen = self.stream.seen_classes(t)
        accuracies = []
        for j in range(1, t + 1):
            test_x, test_y = self.source.test_data(j)
            accuracy = evaluate(self.network, test_x, test_y, seen)
            self.accuracy.record(t - 1, j - 1, accuracy)
            accuracies.append(accuracy)
        return accuracies

    def _emit(self, record: dict):
        self.diagnostics.append(record)
        self.logger.debug(f"[{self.run_label}] {record}")
        if self.diagnostics_sink is not None:
            self.diagnostics_sink(record)


def run_continual(stream: TaskStream,
                  hidden_dims,
                  scheme: MatchingScheme,
                  rule_factory: Callable[[], UpdateRule],
                  credit_enabled: bool = False,
                  settings: TrainingSettings = TrainingSettings(),
                  seeds: RunSeeds = RunSeeds(),
                  credit: CreditSettings = CreditSettings(),
                  **kwargs) -> ContinualResult:
    return ContinualTrainer(stream, hidden_dims, scheme, rule_factory, credit_enabled,
                            settings, seeds, credit, **kwargs).run()
