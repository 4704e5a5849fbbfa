"""CART-style decision-tree and bagged random-forest training.

Greedy recursive best-split trees: at every node a random subset of
features is scanned, candidate thresholds are midpoints between
consecutive distinct sorted values, and the split with the largest
impurity decrease wins (strictly positive gain required). Leaves carry the
majority label with ties resolved to -1, matching the ensemble's vote-tie
rule.

Training is a pure function of (data, config, seed): bootstrap resampling
and feature subsampling draw from per-tree generators spawned
deterministically from the master seed, and trees are assembled in index
order, so worker counts never change the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from treetweak._parallel import map_ordered
from treetweak.errors import DegenerateLabels, EmptyDataset, EmptyNode
from treetweak.feature_space import FeatureSpace, Instance
from treetweak.forest import (
    DecisionTree,
    Internal,
    Leaf,
    TreeEnsemble,
    positive_vote_fraction,
    predict_ensemble,
)

GINI = "gini"
ENTROPY = "entropy"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; None fields resolve against the data at train time.

    max_depth defaults to the number of features n, which bounds each tree
    to at most 2**n leaves. features_per_split defaults to ceil(sqrt(n));
    bootstrap defaults to True for ensembles of more than one tree.
    """

    criterion: str = GINI
    max_depth: int | None = None
    num_trees: int = 1
    features_per_split: int | None = None
    min_samples_split: int = 2
    bootstrap: bool | None = None
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in (GINI, ENTROPY):
            raise ValueError(f"criterion must be {GINI!r} or {ENTROPY!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def resolve(self, n_features: int) -> tuple[int, int, bool]:
        max_depth = self.max_depth if self.max_depth is not None else n_features
        fps = self.features_per_split
        if fps is None:
            fps = max(1, math.ceil(math.sqrt(n_features)))
        if not 1 <= fps <= n_features:
            raise ValueError(
                f"features_per_split must be in [1, {n_features}], got {fps}"
            )
        bootstrap = self.bootstrap
        if bootstrap is None:
            bootstrap = self.num_trees > 1
        return max_depth, fps, bootstrap


def impurity(counts: tuple[int, int], criterion: str) -> float:
    """Node impurity from (negative, positive) sample counts."""
    neg, pos = counts
    total = neg + pos
    if total <= 0:
        raise EmptyNode("impurity of an empty node is undefined")
    p_neg = neg / total
    p_pos = pos / total
    if criterion == GINI:
        return 1.0 - p_neg * p_neg - p_pos * p_pos
    if criterion == ENTROPY:
        out = 0.0
        for p in (p_neg, p_pos):
            if p > 0.0:
                out -= p * math.log2(p)
        return out
    raise ValueError(f"criterion must be {GINI!r} or {ENTROPY!r}")


def _impurity_vec(neg: np.ndarray, pos: np.ndarray, criterion: str) -> np.ndarray:
    total = neg + pos
    p_neg = neg / total
    p_pos = pos / total
    if criterion == GINI:
        return 1.0 - p_neg * p_neg - p_pos * p_pos

    def plogp(p):
        out = np.zeros_like(p)
        np.log2(p, out=out, where=p > 0)
        return p * out

    return -(plogp(p_neg) + plogp(p_pos))


def _best_split_on_feature(column, pos_mask, parent_imp, criterion):
    """Best (gain, threshold) splitting one feature, or None.

    Thresholds are midpoints between consecutive distinct sorted values;
    the lowest-threshold maximizer wins, keeping the scan deterministic.
    """
    order = np.argsort(column, kind="stable")
    v = column[order]
    boundaries = np.nonzero(v[1:] > v[:-1])[0]
    if len(boundaries) == 0:
        return None
    m = len(v)
    cum_pos = np.cumsum(pos_mask[order])
    n_left = boundaries + 1.0
    pos_left = cum_pos[boundaries].astype(float)
    neg_left = n_left - pos_left
    n_right = m - n_left
    pos_right = cum_pos[-1] - pos_left
    neg_right = n_right - pos_right
    child = (
        n_left * _impurity_vec(neg_left, pos_left, criterion)
        + n_right * _impurity_vec(neg_right, pos_right, criterion)
    ) / m
    gains = parent_imp - child
    best = int(np.argmax(gains))
    b = int(boundaries[best])
    return float(gains[best]), (v[b] + v[b + 1]) / 2.0


def _grow(X, y, depth, limits, rng, gains, n_root, criterion):
    max_depth, fps, min_split = limits
    pos = int(np.count_nonzero(y == 1))
    neg = len(y) - pos
    label = 1 if pos > neg else -1  # majority, ties to -1
    if pos == 0 or neg == 0 or depth >= max_depth or len(y) < min_split:
        return Leaf(label)

    n_features = X.shape[1]
    if fps >= n_features:
        feature_ids = np.arange(n_features)
    else:
        feature_ids = np.sort(rng.choice(n_features, size=fps, replace=False))
    parent_imp = impurity((neg, pos), criterion)
    pos_mask = (y == 1).astype(np.float64)

    best_gain = -math.inf
    best_feature = -1
    best_threshold = 0.0
    for f in feature_ids:
        found = _best_split_on_feature(X[:, f], pos_mask, parent_imp, criterion)
        if found is not None and found[0] > best_gain:
            best_gain, best_threshold = found
            best_feature = int(f)
    if best_feature < 0:
        return Leaf(label)
    # Positive-gain splits are preferred; an impure node where every
    # candidate has exactly zero gain (e.g. XOR patterns) still splits so
    # the subtrees get a chance to separate. Terminates regardless: both
    # children are nonempty and strictly smaller.
    best_gain = max(best_gain, 0.0)

    gains[best_feature] += (len(y) / n_root) * best_gain
    mask = X[:, best_feature] <= best_threshold
    left = _grow(X[mask], y[mask], depth + 1, limits, rng, gains, n_root, criterion)
    right = _grow(X[~mask], y[~mask], depth + 1, limits, rng, gains, n_root, criterion)
    return Internal(best_feature, float(best_threshold), left, right)


def _as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise EmptyDataset("no training instances")
    X = np.stack([inst.values for inst in data])
    labels = [inst.label for inst in data]
    if any(lab is None for lab in labels):
        raise ValueError("training instances must be labeled")
    return X, np.asarray(labels, dtype=int)


def _train_tree_arrays(X, y, cfg: TrainConfig, rng) -> DecisionTree:
    n = X.shape[1]
    max_depth, fps, _ = cfg.resolve(n)
    gains = np.zeros(n)
    root = _grow(
        X, y, 0, (max_depth, fps, cfg.min_samples_split), rng, gains, len(y),
        cfg.criterion,
    )
    tree = DecisionTree(root)
    tree.feature_gains = gains
    return tree


def train_tree(data: list[Instance], cfg: TrainConfig, rng) -> DecisionTree:
    """Grow a single tree; ``rng`` is a numpy Generator."""
    X, y = _as_arrays(data)
    return _train_tree_arrays(X, y, cfg, rng)


def train_forest(
    data: list[Instance],
    cfg: TrainConfig,
    space: FeatureSpace,
    seed: int | None = None,
    workers: int | None = None,
) -> TreeEnsemble:
    """Train a bagged forest of cfg.num_trees trees.

    Each tree draws its bootstrap sample and feature subsets from its own
    generator, spawned from the master seed, so results are identical for
    any worker count.
    """
    X, y = _as_arrays(data)
    if X.shape[1] != space.n:
        raise ValueError(
            f"data has {X.shape[1]} features but the space declares {space.n}"
        )
    if seed is None:
        seed = cfg.seed
    max_depth, fps, bootstrap = cfg.resolve(space.n)
    streams = np.random.SeedSequence(seed).spawn(cfg.num_trees)
    m = len(y)

    def build(k: int) -> DecisionTree:
        rng = np.random.default_rng(streams[k])
        if bootstrap:
            idx = rng.integers(0, m, size=m)
            return _train_tree_arrays(X[idx], y[idx], cfg, rng)
        return _train_tree_arrays(X, y, cfg, rng)

    trees = tuple(map_ordered(build, range(cfg.num_trees), workers))
    metadata = {
        "num_trees": cfg.num_trees,
        "criterion": cfg.criterion,
        "max_depth": max_depth,
        "features_per_split": fps,
        "min_samples_split": cfg.min_samples_split,
        "bootstrap": bootstrap,
        "seed": seed,
    }
    ens = TreeEnsemble(trees, space, metadata=metadata)
    object.__setattr__(ens, "importances", feature_importances(ens))
    return ens


def feature_importances(ens: TreeEnsemble) -> np.ndarray:
    """Mean decrease in impurity, averaged over trees, normalized to sum 1.

    Per tree, each split contributes (node sample fraction x impurity
    decrease) to its feature; these are recorded while training. An
    all-zero vector is returned when no split ever gained (e.g. a forest
    of single leaves).
    """
    gains = []
    for tree in ens.trees:
        if tree.feature_gains is None:
            raise ValueError("tree has no recorded impurity decreases")
        gains.append(tree.feature_gains)
    mean = np.mean(gains, axis=0)
    total = mean.sum()
    if total <= 0.0:
        return np.zeros_like(mean)
    return mean / total


def stratified_split(
    data: list[Instance], test_fraction: float = 0.2, seed: int = 0
) -> tuple[list[Instance], list[Instance]]:
    """Deterministic stratified train/test split on labeled instances."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train: list[Instance] = []
    test: list[Instance] = []
    for label in (-1, 1):
        idx = [i for i, inst in enumerate(data) if inst.label == label]
        if not idx:
            continue
        perm = rng.permutation(len(idx))
        n_test = int(round(len(idx) * test_fraction))
        n_test = min(max(n_test, 1), len(idx) - 1) if len(idx) > 1 else 0
        chosen = {idx[p] for p in perm[:n_test]}
        for i in idx:
            (test if i in chosen else train).append(data[i])
    return train, test


@dataclass(frozen=True)
class ClassifierMetrics:
    f1: float
    mcc: float
    roc_auc: float


def _rank_average(scores: np.ndarray) -> np.ndarray:
    """Midrank transform (1-based); ties share their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc_from_scores(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC AUC needs both classes present")
    ranks = _rank_average(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate_classifier(ens: TreeEnsemble, test_data: list[Instance]) -> ClassifierMetrics:
    """F1, Matthews correlation, and ROC AUC on a labeled holdout set.

    The AUC score for an instance is its fraction of positive tree votes.
    """
    if not test_data:
        raise EmptyDataset("no evaluation instances")
    labels = np.asarray([inst.label for inst in test_data], dtype=object)
    if any(lab is None for lab in labels):
        raise ValueError("evaluation instances must be labeled")
    labels = labels.astype(int)
    if len(set(labels.tolist())) < 2:
        raise DegenerateLabels("evaluation set contains a single class")

    preds = np.asarray([predict_ensemble(ens, inst) for inst in test_data])
    scores = np.asarray([positive_vote_fraction(ens, inst) for inst in test_data])

    tp = int(np.count_nonzero((labels == 1) & (preds == 1)))
    tn = int(np.count_nonzero((labels == -1) & (preds == -1)))
    fp = int(np.count_nonzero((labels == -1) & (preds == 1)))
    fn = int(np.count_nonzero((labels == 1) & (preds == -1)))

    f1 = 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    denom = math.sqrt(
        float(tp + fp) * float(tp + fn) * float(tn + fp) * float(tn + fn)
    )
    mcc = ((tp * tn - fp * fn) / denom) if denom > 0 else 0.0
    return ClassifierMetrics(f1=f1, mcc=mcc, roc_auc=roc_auc_from_scores(scores, labels))
