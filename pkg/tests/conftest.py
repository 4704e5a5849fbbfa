"""Shared builders for hand-made trees, random forests, and synthetic data."""

from __future__ import annotations

import numpy as np

from treetweak.feature_space import FeatureMeta, FeatureSpace, Instance
from treetweak.forest import DecisionTree, Internal, Leaf, TreeEnsemble


def plain_space(n, adjustable=None):
    """A fitted-looking space of n continuous features with mean 0, std 1."""
    if adjustable is None:
        adjustable = [True] * n
    return FeatureSpace(
        [FeatureMeta(f"x{i}", adjustable=adjustable[i]) for i in range(n)]
    )


def stump(feature, threshold, left_label, right_label):
    return DecisionTree(
        Internal(feature, threshold, Leaf(left_label), Leaf(right_label))
    )


def random_tree(rng, n_features, max_depth, p_leaf=0.3):
    """Random structure: uniform thresholds in [-2, 2], random +-1 leaves."""

    def grow(depth):
        if depth >= max_depth or (depth > 0 and rng.random() < p_leaf):
            return Leaf(int(rng.choice((-1, 1))))
        feature = int(rng.integers(n_features))
        threshold = float(rng.uniform(-2.0, 2.0))
        return Internal(feature, threshold, grow(depth + 1), grow(depth + 1))

    return DecisionTree(grow(0))


def random_ensemble(rng, num_trees, n_features, max_depth, space=None):
    trees = tuple(random_tree(rng, n_features, max_depth) for _ in range(num_trees))
    return TreeEnsemble(trees, space or plain_space(n_features))


def sample_negative_instances(ens, rng, count, scale=1.5, attempts=400):
    """Up to `count` instances the ensemble predicts negative."""
    from treetweak.forest import predict_ensemble

    n = ens.feature_space.n
    found = []
    for _ in range(attempts):
        x = Instance(rng.normal(0.0, scale, size=n))
        if predict_ensemble(ens, x) == -1:
            found.append(x)
            if len(found) == count:
                break
    return found


def gaussian_instances(seed, m=2000, n=10, separation=1.0):
    """Two spherical Gaussians: class -1 at the origin, class +1 shifted by
    `separation` along every axis. Returns (space, instances)."""
    rng = np.random.default_rng(seed)
    half = m // 2
    neg = rng.normal(0.0, 1.0, size=(half, n))
    pos = rng.normal(separation, 1.0, size=(m - half, n))
    instances = [Instance(row, label=-1) for row in neg]
    instances += [Instance(row, label=1) for row in pos]
    order = rng.permutation(m)
    return plain_space(n), [instances[i] for i in order]
