"""
Dense vector primitives shared by the network, the knowledge space and the
credit optimizer. Everything is float64 and pure.
"""
import numpy as np

from core.errors import DimensionError, LabelRangeError, NumericError

LOG_CLAMP = 1e-12
DEGENERATE_NORM = 1e-12


def as_vector(values) -> np.ndarray:
    """Copy `values` into a finite 1-D float64 array"""
    vector = np.array(values, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionError(f"Expected a 1-D vector, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise NumericError("Vector contains non-finite entries")
    return vector


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """
    Temperature-scaled softmax over the last axis.

    Accepts a single logit vector or a (batch, classes) matrix. The row
    maximum is subtracted before dividing by the temperature, so no finite
    input overflows.
    """
    if temperature <= 0:
        raise ValueError(f"Temperature must be positive, got {temperature}")

    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise DimensionError("Cannot take softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise NumericError("Logits contain non-finite entries")

    # gaps wider than the float range become -inf and vanish in exp
    with np.errstate(over='ignore'):
        shifted = (z - np.max(z, axis=-1, keepdims=True)) / temperature
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def kl_rows(p, q) -> np.ndarray:
    """
    KL(p || q) along the last axis, one value per row.

    q is clamped at 1e-12 and 0 * ln 0 counts as 0. Rows are clamped at 0;
    NaN entries propagate so callers can detect them.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"Distribution shapes differ: {p.shape} vs {q.shape}")

    positive = p > 0
    log_ratio = np.where(
        positive,
        np.log(np.where(positive, p, 1.0)) - np.log(np.maximum(q, LOG_CLAMP)),
        0.0)
    return np.maximum(np.sum(p * log_ratio, axis=-1), 0.0)


def kl_divergence(p, q) -> float:
    """KL(p || q) = sum_i p_i ln(p_i / q_i) for two probability vectors"""
    if np.ndim(p) != 1:
        raise DimensionError(f"Expected a probability vector, got shape {np.shape(p)}")
    return float(kl_rows(p, q))


def cross_entropy_rows(p, labels) -> np.ndarray:
    """-ln p[row, label] per row, clamped so saturated outputs stay finite"""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (p.shape[0],):
        raise DimensionError(f"{labels.shape[0]} labels for {p.shape[0]} rows")
    if np.any(labels < 0) or np.any(labels >= p.shape[-1]):
        raise LabelRangeError(f"Labels {labels.tolist()} outside [0, {p.shape[-1]})")

    picked = p[np.arange(labels.shape[0]), labels]
    return -np.log(np.maximum(picked, LOG_CLAMP))


def cross_entropy(p, label: int) -> float:
    """-ln p[label]"""
    if np.ndim(p) != 1:
        raise DimensionError(f"Expected a probability vector, got shape {np.shape(p)}")
    return float(cross_entropy_rows(p, [label])[0])


def cosine_similarity(a, b) -> float:
    """
    Cosine of the angle between `a` and `b`.

    Vectors with norm below 1e-12 are treated as non-conflicting and give 0.
    Each vector is divided by its largest magnitude first, so huge or tiny
    gradients keep the same cosine.
    """
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"Vector lengths differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0

    scale_a = float(np.max(np.abs(a)))
    scale_b = float(np.max(np.abs(b)))
    if scale_a == 0.0 or scale_b == 0.0:
        return 0.0

    unit_a = a / scale_a
    unit_b = b / scale_b
    norm_a = float(np.linalg.norm(unit_a))
    norm_b = float(np.linalg.norm(unit_b))
    if scale_a * norm_a < DEGENERATE_NORM or scale_b * norm_b < DEGENERATE_NORM:
        return 0.0

    value = float(np.dot(unit_a, unit_b)) / (norm_a * norm_b)
    if not np.isfinite(value):
        raise NumericError(f"Cosine similarity is not finite: {value}")
    return min(1.0, max(-1.0, value))
