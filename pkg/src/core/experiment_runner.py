"""
Executes every (arm, class_order_seed, seed) run of a configuration and
writes per-run matrices, metrics and diagnostics plus per-arm curves and
one aggregate record. Reruns of the same configuration reproduce the files
byte for byte.
"""
from typing import Dict, List, Optional, Tuple
import logging
import os

import numpy as np

from core.accuracy_tracker import RunCollector, RunMetrics
from core.continual_trainer import RunSeeds, run_continual
from core.knowledge_space import STRONG, MatchingScheme, total_matching_count
from core.task_stream import TaskStream, load_csv_stream, make_blobs_stream, read_labeled_csv
from core.thread_pool import ThreadPool
from network.snapshot import save_snapshot
from utils.config import ArmConfig, RunConfig, config_hash, serialize_config
from utils.file_ops import ResultWriter

RunKey = Tuple[str, int, int]


def build_stream(config: RunConfig, class_order_seed: int) -> TaskStream:
    """Task stream of the configured dataset under one class order"""
    dataset = config.dataset
    if dataset['kind'] == 'blobs':
        return make_blobs_stream(
            num_classes=dataset['num_classes'],
            classes_per_task=config.classes_per_task,
            feature_dim=dataset['feature_dim'],
            samples_per_class_train=dataset['samples_per_class_train'],
            samples_per_class_test=dataset['samples_per_class_test'],
            cluster_spread=dataset['cluster_spread'],
            class_order_seed=class_order_seed,
            data_seed=dataset['data_seed'],
        )
    return load_csv_stream(
        dataset['path'],
        classes_per_task=config.classes_per_task,
        class_order_seed=class_order_seed,
        train_fraction=dataset['train_fraction'],
        split_seed=dataset['split_seed'],
    )


def count_tasks(config: RunConfig) -> int:
    """Number of tasks without building the stream"""
    dataset = config.dataset
    if dataset['kind'] == 'blobs':
        num_classes = dataset['num_classes']
    else:
        _, labels = read_labeled_csv(dataset['path'])
        num_classes = len(np.unique(labels))
    return num_classes // config.classes_per_task


class ExperimentRunner:

    def __init__(self, config: RunConfig, output_dir: Optional[str] = None,
                 force: bool = False, jobs: int = 1):
        self.config = config.with_output_dir(output_dir) if output_dir else config
        self.force = force
        self.jobs = max(1, jobs)
        self.hash = config_hash(self.config)
        self.collector = RunCollector()
        self.streams: Dict[int, TaskStream] = {}
        self.logger = logging.getLogger(__name__)

    @property
    def failure_marker(self) -> str:
        return f"{self.hash}_FAILED"

    def run_prefix(self, key: RunKey) -> str:
        arm, order, seed = key
        return f"{self.hash}_{arm}_order{order}_seed{seed}"

    def run_keys(self) -> List[RunKey]:
        return [(arm.name, order, seed)
                for arm in self.config.arms()
                for order in self.config.class_order_seeds
                for seed in self.config.seeds]

    def planned_files(self) -> List[str]:
        """Every file a successful run writes, relative to the output directory"""
        names = []
        for key in self.run_keys():
            prefix = self.run_prefix(key)
            names += [f"{prefix}_accuracy.csv", f"{prefix}_metrics.json", f"{prefix}_diagnostics.jsonl"]
        names += [f"{self.hash}_{arm.name}_first_task_curve.csv" for arm in self.config.arms()]
        names += [f"{self.hash}_aggregate.json", f"{self.hash}_config.json"]
        return names

    def run(self) -> int:
        """Execute all runs; 0 on success, 1 after writing the failure marker"""
        writer = ResultWriter(self.config.output_dir, self.force)
        for name in self.planned_files():
            writer.check_writable(name)
        writer.clear_marker(self.failure_marker)
        writer.write_text(f"{self.hash}_config.json", serialize_config(self.config))

        for order in self.config.class_order_seeds:
            try:
                self.streams[order] = build_stream(self.config, order)
            except Exception as e:
                self.logger.error(f"Cannot build the task stream for class order {order}: {e}")
                writer.mark_failed(self.failure_marker, f"class order {order}: {type(e).__name__}: {e}")
                return 1

        arms = {arm.name: arm for arm in self.config.arms()}
        keys = self.run_keys()
        self.logger.info(f"Config {self.hash}: {len(keys)} runs over {len(arms)} arm(s), {self.jobs} job(s)")

        if self.jobs == 1:
            for key in keys:
                self._guarded_run(arms[key[0]], key, writer)
        else:
            with ThreadPool(self.jobs, name="RunWorker") as pool:
                handles = [pool.submit(self._guarded_run, arms[key[0]], key, writer, name=str(key))
                           for key in keys]
                for handle in handles:
                    handle.done.wait()

        if self.collector.failures:
            reasons = '\n'.join(f"{key}: {reason}" for key, reason in sorted(self.collector.failures.items()))
            writer.mark_failed(self.failure_marker, reasons)
            return 1

        self._write_summaries(writer, list(arms.values()))
        self.logger.info(f"Results written to {os.path.abspath(self.config.output_dir)}")
        return 0

    def _guarded_run(self, arm: ArmConfig, key: RunKey, writer: ResultWriter):
        try:
            self.collector.add(key, self._execute(arm, key, writer))
        except Exception as e:
            self.collector.fail(key, f"{type(e).__name__}: {e}")

    def _execute(self, arm: ArmConfig, key: RunKey, writer: ResultWriter) -> RunMetrics:
        _, order, seed = key
        prefix = self.run_prefix(key)
        log = writer.open_jsonl(f"{prefix}_diagnostics.jsonl")
        try:
            result = run_continual(
                self.streams[order],
                self.config.hidden_dims,
                arm.scheme,
                arm.rule_factory(),
                arm.credit_enabled,
                self.config.training_settings(),
                RunSeeds(model_seed=seed, shuffle_seed=seed),
                arm.credit,
                activation=self.config.activation,
                diagnostics_sink=lambda record: log.append(dict(record, type='iteration')),
                run_label=f"{arm.name}/order{order}/seed{seed}",
            )
            for summary in result.task_summaries:
                log.append(dict(summary.to_record(), type='task_summary'))
        except Exception:
            log.close(keep=True)
            raise
        log.close(keep=True)

        writer.write_text(f"{prefix}_accuracy.csv", result.accuracy.to_csv())
        writer.write_json(f"{prefix}_metrics.json", dict(
            result.metrics.to_record(),
            config_hash=self.hash,
            arm=arm.name,
            scheme=arm.scheme.describe(),
            credit_enabled=arm.credit_enabled,
            optimizer=arm.optimizer['kind'],
            class_order_seed=order,
            seed=seed,
        ))

        if self.config.save_snapshots:
            for snap in result.function_set:
                save_snapshot(snap, writer.path(os.path.join(f"{prefix}_snapshots", f"task_{snap.task_index}.npz")))
        return result.metrics

    def _write_summaries(self, writer: ResultWriter, arms: List[ArmConfig]):
        aggregate = {'config_hash': self.hash, 'arms': {}}
        for arm in arms:
            runs = self.collector.ordered(arm.name)
            num_tasks = len(runs[0][1].first_task_curve)
            header = ['class_order_seed', 'seed'] + [f"after_task_{i + 1}" for i in range(num_tasks)]
            lines = [','.join(header)]
            for (_, order, seed), metrics in runs:
                lines.append(','.join([str(order), str(seed)] + [f"{v:.6f}" for v in metrics.first_task_curve]))

            summary = self.collector.aggregate(arm.name)
            lines.append(','.join(['mean', ''] + [f"{v:.6f}" for v in summary['first_task_curve_mean']]))
            lines.append(','.join(['std', ''] + [f"{v:.6f}" for v in summary['first_task_curve_std']]))
            writer.write_text(f"{self.hash}_{arm.name}_first_task_curve.csv", '\n'.join(lines) + '\n')

            aggregate['arms'][arm.name] = dict(
                summary,
                scheme=arm.scheme.describe(),
                credit_enabled=arm.credit_enabled,
                optimizer=arm.optimizer['kind'],
            )
            self.logger.info(
                f"{arm.name}: avg {summary['avg_mean']:.4f} ± {summary['avg_std']:.4f}, "
                f"last {summary['last_mean']:.4f} ± {summary['last_std']:.4f}, "
                f"first task {summary['first_task_final_mean']:.4f} ± {summary['first_task_final_std']:.4f}")
        writer.write_json(f"{self.hash}_aggregate.json", aggregate, indent=2)


def run_experiment(config: RunConfig, output_dir: Optional[str] = None,
                   force: bool = False, jobs: int = 1) -> int:
    return ExperimentRunner(config, output_dir, force, jobs).run()


def audit_cost(config: RunConfig, output_dir: Optional[str] = None,
               force: bool = False, write: bool = True) -> dict:
    """Matching counts of every arm's scheme, without training"""
    logger = logging.getLogger(__name__)
    num_tasks = count_tasks(config)
    strong = total_matching_count(MatchingScheme(STRONG), num_tasks) if num_tasks >= 2 else 0

    report = {'config_hash': config_hash(config), 'num_tasks': num_tasks, 'strong': strong, 'arms': {}}
    for arm in config.arms():
        count = total_matching_count(arm.scheme, num_tasks) if num_tasks >= 2 else 0
        reduction = 1.0 - count / strong if strong else 0.0
        report['arms'][arm.name] = {
            'scheme': arm.scheme.describe(),
            'matchings': count,
            'reduction': reduction,
        }
        logger.info(f"{arm.name}: {arm.scheme.describe()} -> {count} matchings over {num_tasks} tasks "
                    f"({reduction:.1%} fewer than strong)")

    if write:
        writer = ResultWriter(output_dir or config.output_dir, force)
        writer.write_json(f"{report['config_hash']}_matching_cost.json", report, indent=2)
    return report
