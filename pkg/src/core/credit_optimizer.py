"""
Credit assignment: per-iteration gradient surgery over the per-loss gradients.

  1. cosine similarity of every gradient pair -> assignment matrix
  2. upper-triangle pairs with negative similarity -> conflict list
  3. for each conflict (a, b), a < b: g_a <- g_a - (g_a . g_b / |g_b|^2) g_b
  4. weighted sum, then the update rule

Gradients are ordered KL terms first (by snapshot task) and the new-task
cross-entropy last, so the highest index is always the new task.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from core.errors import DimensionError, NumericError
from core.knowledge_space import MATCH_KL, NEW_TASK_CE, LossComponent
from core.numerics import DEGENERATE_NORM, cosine_similarity
from core.update_rules import UpdateRule, step
from network.mlp import Network

logger = logging.getLogger(__name__)


@dataclass
class GradientSet:
    vectors: np.ndarray  # (count, param_count)

    @classmethod
    def from_list(cls, grads: Sequence) -> 'GradientSet':
        if len(grads) == 0:
            raise DimensionError("A gradient set needs at least one gradient")
        arrays = [np.asarray(g, dtype=np.float64) for g in grads]
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1 or arrays[0].ndim != 1:
            raise DimensionError(f"Gradients must share one 1-D length, got {sorted(lengths)}")
        return cls(np.stack(arrays))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.vectors[index]

    def copy(self) -> 'GradientSet':
        return GradientSet(self.vectors.copy())


@dataclass
class AssignmentMatrix:
    phi: np.ndarray

    @property
    def size(self) -> int:
        return self.phi.shape[0]

    def upper_values(self) -> np.ndarray:
        return self.phi[np.triu_indices(self.size, k=1)]

    def mean_upper(self) -> Optional[float]:
        values = self.upper_values()
        return float(np.mean(values)) if values.size else None


@dataclass(frozen=True)
class ConflictPair:
    a: int
    b: int


@dataclass(frozen=True)
class CreditSettings:
    project_newer: bool = False
    passes: int = 1


@dataclass
class IterationDiagnostics:
    iteration: int
    conflict_count: int
    mean_phi: Optional[float]
    degenerate_pairs: int
    losses: Dict[str, float]
    total_loss: float
    projections: int = 0

    def to_record(self) -> dict:
        return {
            'iteration': self.iteration,
            'conflict_count': self.conflict_count,
            'mean_phi': self.mean_phi,
            'degenerate_pairs': self.degenerate_pairs,
            'projections': self.projections,
            'losses': self.losses,
            'total_loss': self.total_loss,
        }


def assignment_matrix(grads: GradientSet) -> AssignmentMatrix:
    """Pairwise cosine similarities; zero gradients get a zero row and diagonal"""
    count = len(grads)
    phi = np.zeros((count, count), dtype=np.float64)
    for a in range(count):
        if np.linalg.norm(grads[a]) >= DEGENERATE_NORM:
            phi[a, a] = 1.0
        for b in range(a + 1, count):
            phi[a, b] = phi[b, a] = cosine_similarity(grads[a], grads[b])
    return AssignmentMatrix(phi)


def extract_conflicts(matrix: AssignmentMatrix) -> List[ConflictPair]:
    """Upper-triangle pairs with negative similarity, row-major order"""
    return [
        ConflictPair(a, b)
        for a in range(matrix.size)
        for b in range(a + 1, matrix.size)
        if matrix.phi[a, b] < 0
    ]


def resolve_conflicts(grads: GradientSet,
                      pairs: List[ConflictPair],
                      project_newer: bool = False) -> Tuple[GradientSet, int]:
    """
    Project each conflicting gradient onto the normal plane of its partner.

    Pairs are processed in order on one working copy, so later projections see
    earlier results. By default g_a (the older component) is the one
    projected. Returns the new set and the number of skipped degenerate pairs.
    """
    if not pairs:
        return grads, 0

    working = grads.copy()
    degenerate = 0
    for pair in pairs:
        target, reference = (pair.b, pair.a) if project_newer else (pair.a, pair.b)
        g_ref = working.vectors[reference]
        ref_sq = float(np.dot(g_ref, g_ref))
        if np.sqrt(ref_sq) < DEGENERATE_NORM:
            degenerate += 1
            logger.warning(f"Skipping projection onto degenerate gradient {reference}")
            continue
        g_target = working.vectors[target]
        working.vectors[target] = g_target - (float(np.dot(g_target, g_ref)) / ref_sq) * g_ref

    return working, degenerate


def combine(grads: GradientSet, weights: Sequence[float]) -> np.ndarray:
    """Weighted sum of the gradients in component order"""
    if len(weights) != len(grads):
        raise DimensionError(f"{len(weights)} weights for {len(grads)} gradients")
    total = np.zeros(grads.vectors.shape[1], dtype=np.float64)
    for weight, grad in zip(weights, grads.vectors):
        total += weight * grad
    return total


def credit_update(rule: UpdateRule,
                  params: np.ndarray,
                  grads: GradientSet,
                  weights: Sequence[float],
                  enabled: bool,
                  settings: CreditSettings = CreditSettings(),
                  iteration: Optional[int] = None) -> Tuple[np.ndarray, dict]:
    """Gradient-level core of `credit_step`: surgery, combination and update"""
    if not np.all(np.isfinite(grads.vectors)):
        raise NumericError("Component gradients are not finite", iteration)
    matrix = assignment_matrix(grads) if len(grads) > 1 else None
    conflicts = extract_conflicts(matrix) if matrix is not None else []
    stats = {
        'conflict_count': len(conflicts),
        'mean_phi': matrix.mean_upper() if matrix is not None else None,
        'degenerate_pairs': 0,
        'projections': 0,
    }

    resolved = grads
    if enabled:
        for _ in range(max(1, settings.passes)):
            if not conflicts:
                break
            resolved, degenerate = resolve_conflicts(resolved, conflicts, settings.project_newer)
            stats['degenerate_pairs'] += degenerate
            stats['projections'] += len(conflicts) - degenerate
            conflicts = extract_conflicts(assignment_matrix(resolved))

    combined = combine(resolved, weights)
    if not np.all(np.isfinite(combined)):
        raise NumericError("Combined gradient is not finite", iteration)
    return step(rule, params, combined, iteration), stats


def _component_name(component: LossComponent) -> str:
    if component.kind == NEW_TASK_CE:
        return 'ce'
    return f"kl_{component.target_snapshot_index}"


def order_components(components: Sequence[LossComponent]) -> List[LossComponent]:
    """KL terms by snapshot task, then the cross-entropy term"""
    kl_terms = sorted((c for c in components if c.kind == MATCH_KL),
                      key=lambda c: c.target_snapshot_index)
    ce_terms = [c for c in components if c.kind == NEW_TASK_CE]
    return kl_terms + ce_terms


def credit_step(rule: UpdateRule,
                net: Network,
                x,
                components: Sequence[LossComponent],
                enabled: bool,
                settings: CreditSettings = CreditSettings(),
                iteration: int = 0) -> IterationDiagnostics:
    """
    One optimisation step on `net` (updated in place) over the batch `x`.

    With `enabled` false the per-component gradients are summed unchanged.
    """
    if not components:
        raise ValueError("credit_step needs at least one loss component")

    ordered = order_components(components)
    losses: Dict[str, float] = {}
    grads = []
    for component in ordered:
        try:
            value, grad = net.loss_and_gradient(x, component.loss)
        except NumericError as e:
            if e.iteration is not None:
                raise
            raise NumericError(f"Loss {_component_name(component)}: {e}", iteration) from e
        if not np.isfinite(value):
            raise NumericError(f"Loss {_component_name(component)} is not finite", iteration)
        losses[_component_name(component)] = value
        grads.append(grad)

    weights = [component.weight for component in ordered]
    new_params, stats = credit_update(
        rule, net.params, GradientSet.from_list(grads), weights, enabled, settings, iteration)
    net.set_params(new_params)

    total = float(sum(w * losses[_component_name(c)] for w, c in zip(weights, ordered)))
    return IterationDiagnostics(
        iteration=iteration,
        conflict_count=stats['conflict_count'],
        mean_phi=stats['mean_phi'],
        degenerate_pairs=stats['degenerate_pairs'],
        projections=stats['projections'],
        losses=losses,
        total_loss=total,
    )
