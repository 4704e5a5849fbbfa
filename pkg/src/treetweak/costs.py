"""Tweaking-cost functions: how much effort a transformation takes.

Five distance-like functions over (original, transformed) vector pairs.
Each satisfies cost(x, x) = 0 and cost(x, x') >= 0 on its documented
domain and is symmetric in its arguments.

"Changed component" means exact float inequality: candidates are built by
explicit assignment, so changed components differ by construction rather
than by rounding noise.
"""

from __future__ import annotations

import math

import numpy as np

from treetweak.errors import LengthMismatch, ZeroVariance, ZeroVector


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    return a, b


def tweaked_feature_rate(x, y) -> float:
    """Proportion of components that changed; range [0, 1]."""
    a, b = _pair(x, y)
    return float(np.count_nonzero(a != b)) / len(a)


def euclidean_distance(x, y) -> float:
    """L2 norm of the change vector."""
    a, b = _pair(x, y)
    return float(math.sqrt(float(((a - b) ** 2).sum())))


def cosine_distance(x, y) -> float:
    """1 minus the cosine of the angle between the vectors; range [0, 2]."""
    a, b = _pair(x, y)
    na = math.sqrt(float((a * a).sum()))
    nb = math.sqrt(float((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine distance undefined for a zero-norm vector")
    if np.array_equal(a, b):
        return 0.0
    cos = float((a * b).sum()) / (na * nb)
    return 1.0 - max(-1.0, min(1.0, cos))


def jaccard_distance(x, y) -> float:
    """Set Jaccard distance over (index, value) pairs; range [0, 1].

    With c changed components out of n, the two sets share n - c pairs out
    of n + c total, giving 1 - (n - c)/(n + c) = 2c/(n + c). This grows
    monotonically with the number of tweaks and needs no assumptions about
    value signs, unlike min/max generalizations.
    """
    a, b = _pair(x, y)
    n = len(a)
    c = int(np.count_nonzero(a != b))
    return 2.0 * c / (n + c)


def pearson_correlation_distance(x, y) -> float:
    """1 minus the Pearson correlation of the two vectors; range [0, 2]."""
    a, b = _pair(x, y)
    if np.array_equal(a, b):
        return 0.0
    if len(a) < 2:
        raise ZeroVariance("vector", "correlation needs at least 2 components")
    da = a - a.mean()
    db = b - b.mean()
    va = float((da * da).sum())
    vb = float((db * db).sum())
    if va == 0.0 or vb == 0.0:
        raise ZeroVariance(
            "vector", "correlation undefined for a constant vector"
        )
    corr = float((da * db).sum()) / math.sqrt(va * vb)
    return 1.0 - max(-1.0, min(1.0, corr))


COST_FUNCTIONS = {
    "tweaked_feature_rate": tweaked_feature_rate,
    "euclidean": euclidean_distance,
    "cosine": cosine_distance,
    "jaccard": jaccard_distance,
    "pearson": pearson_correlation_distance,
}

COST_NAMES = tuple(COST_FUNCTIONS)


def cost_by_name(name: str):
    try:
        return COST_FUNCTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown cost function {name!r}; choose from {', '.join(COST_NAMES)}"
        ) from None
