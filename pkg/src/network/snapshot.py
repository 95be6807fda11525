import hashlib
import json
import logging
import os
from typing import Optional

import numpy as np

from core.errors import ClassRangeError, DimensionError
from network.mlp import MlpSpec, Network, forward

logger = logging.getLogger(__name__)


class FunctionSnapshot:
    """
    Frozen copy of the network as it stood after a task, together with the
    head classes it has seen. The parameter array is read-only.
    """

    __slots__ = ('spec', 'params', 'covered_classes', 'task_index', '_fingerprint')

    def __init__(self, spec: MlpSpec, params: np.ndarray, covered_classes: range,
                 task_index: Optional[int] = None):
        if (covered_classes.step != 1 or covered_classes.start != 0
                or not 0 < covered_classes.stop <= spec.total_classes):
            raise ClassRangeError(
                f"Snapshot coverage must be [0, c) within {spec.total_classes} classes, "
                f"got {covered_classes}")

        frozen = np.array(params, dtype=np.float64, copy=True)
        if frozen.shape != (spec.param_count,):
            raise DimensionError(f"Snapshot needs {spec.param_count} parameters, got {frozen.shape}")
        frozen.flags.writeable = False

        object.__setattr__(self, 'spec', spec)
        object.__setattr__(self, 'params', frozen)
        object.__setattr__(self, 'covered_classes', covered_classes)
        object.__setattr__(self, 'task_index', task_index)
        object.__setattr__(self, '_fingerprint', hashlib.sha256(frozen.tobytes()).hexdigest())

    def __setattr__(self, name, value):
        raise AttributeError("FunctionSnapshot is immutable")

    @property
    def fingerprint(self) -> str:
        return self._fingerprint

    def current_fingerprint(self) -> str:
        """Hash recomputed from the live array, for immutability checks"""
        return hashlib.sha256(self.params.tobytes()).hexdigest()

    def forward(self, x) -> np.ndarray:
        return forward(self, x)

    def covered_logits(self, x) -> np.ndarray:
        """Logits of the classes this snapshot was trained on"""
        logits = forward(self, x)
        return logits[..., self.covered_classes.start:self.covered_classes.stop]

    def __repr__(self):
        return (f"FunctionSnapshot(task={self.task_index}, "
                f"classes=[0, {self.covered_classes.stop}), sha={self._fingerprint[:10]})")


def snapshot(net: Network, covered_classes: range, task_index: Optional[int] = None) -> FunctionSnapshot:
    """Freeze a copy of `net` that answers for `covered_classes`"""
    return FunctionSnapshot(net.spec, net.params, covered_classes, task_index)


def save_snapshot(snap: FunctionSnapshot, path: str):
    """Write spec, coverage and float64 parameters; loading is bit-exact"""
    header = json.dumps({
        'spec': snap.spec.to_dict(),
        'covered_classes': [snap.covered_classes.start, snap.covered_classes.stop],
        'task_index': snap.task_index,
    }, sort_keys=True)

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    temp_path = path + '.tmp'
    with open(temp_path, 'wb') as f:
        np.savez(f, header=np.array(header), params=np.asarray(snap.params, dtype='<f8'))
    os.replace(temp_path, path)
    logger.debug(f"Saved {snap!r} to {path}")


def load_snapshot(path: str) -> FunctionSnapshot:
    """Read a snapshot written by save_snapshot"""
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive['header']))
        params = archive['params'].astype(np.float64)

    start, stop = header['covered_classes']
    return FunctionSnapshot(
        MlpSpec.from_dict(header['spec']),
        params,
        range(start, stop),
        header.get('task_index'),
    )
