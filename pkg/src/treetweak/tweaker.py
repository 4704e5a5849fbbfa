"""Minimum-cost feature tweaking for ensemble-negative instances.

Given an instance the forest predicts negative, every positive path of
every negative-voting tree proposes a candidate: conditioned features are
moved to their thresholds with a clearance of epsilon (below the threshold
for a <= condition, above it for a >), everything else keeps the
instance's value. Candidates the whole ensemble re-predicts positive form
the pool; the cheapest one under the chosen cost function is the answer.

Epsilon is expressed in standardized units, i.e. multiples of one standard
deviation of each feature.

Candidate generation fans out per tree (the ensemble is immutable and each
tree is explored independently); results are reduced in fixed
(tree, path) order, so the worker count never changes the outcome. Within
a tree, path prefixes share their folded intervals: the per-feature bounds
are maintained incrementally while walking down, not recomputed per path.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from treetweak._parallel import map_ordered
from treetweak.costs import cost_by_name
from treetweak.errors import (
    InfeasiblePath,
    NotNegative,
    SearchSpaceTooLarge,
    ZeroVariance,
    ZeroVector,
)
from treetweak.feature_space import FeatureSpace, Instance
from treetweak.forest import (
    GT,
    LE,
    POSITIVE,
    DecisionTree,
    Leaf,
    Path,
    TreeEnsemble,
    extract_paths,
    predict_ensemble,
    predict_tree,
)

logger = logging.getLogger(__name__)

BRUTE_FORCE_PATH_LIMIT = 100_000

INF = math.inf


@dataclass(frozen=True, eq=False)
class Transformation:
    """A candidate positive instance plus its provenance and cost."""

    candidate: Instance
    source_tree: int
    source_path: int
    cost: float
    changed_indices: frozenset[int]

    def sort_key(self):
        return (self.cost, self.source_tree, self.source_path)


@dataclass(frozen=True, eq=False)
class Found:
    """A transformation exists; ``best`` is the cheapest candidate.

    Ties on cost break on smallest (source_tree, source_path), which is
    deterministic and independent of evaluation order.
    """

    best: Transformation
    all_candidates: tuple[Transformation, ...]


@dataclass(frozen=True)
class NotCovered:
    """No epsilon-satisfactory candidate flips the ensemble."""

    reason: str


TweakOutcome = Found | NotCovered


@dataclass(frozen=True)
class SearchStats:
    trees_searched: int
    paths_examined: int
    infeasible: int
    rejected: int
    truncated: bool


def _check_epsilon(epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    return float(epsilon)


def _fold_conditions(conditions) -> dict[int, tuple[float, float]]:
    """Collapse a path's conditions into per-feature (lower, upper] bounds."""
    intervals: dict[int, tuple[float, float]] = {}
    for feature, direction, threshold in conditions:
        lo, hi = intervals.get(feature, (-INF, INF))
        if direction == LE:
            hi = min(hi, threshold)
        elif direction == GT:
            lo = max(lo, threshold)
        else:
            raise ValueError(f"unknown condition direction {direction!r}")
        intervals[feature] = (lo, hi)
    return intervals


def _apply_intervals(x_values, intervals, epsilon, adjustable, skip_satisfied):
    """Assign conditioned features from their folded intervals.

    The upper bound binds when present (value = upper - epsilon), otherwise
    the feature clears the lower bound (value = lower + epsilon). A value
    that does not land strictly inside (lower, upper] means the interval is
    narrower than epsilon: the path is infeasible. Non-adjustable features
    are never moved; they block the path unless already inside the bounds.
    """
    values = x_values.copy()
    for feature in sorted(intervals):
        lo, hi = intervals[feature]
        current = x_values[feature]
        satisfied = lo < current <= hi
        if not adjustable[feature]:
            if not satisfied:
                raise InfeasiblePath(feature)
            continue
        if skip_satisfied and satisfied:
            continue
        v = hi - epsilon if hi < INF else lo + epsilon
        if not lo < v:
            raise InfeasiblePath(feature)
        values[feature] = v
    return values


def build_positive_instance(
    x: Instance,
    path: Path,
    epsilon: float,
    space: FeatureSpace,
    skip_satisfied: bool = False,
) -> Instance:
    """The epsilon-satisfactory instance of a positive path, seeded from x.

    Every feature the path conditions is set to clear its folded bounds by
    epsilon, even when x already satisfies the condition (pass
    ``skip_satisfied=True`` to keep already-satisfying values instead);
    unconditioned features keep x's values. The result is guaranteed to
    route through the path's tree to this exact leaf.

    Raises InfeasiblePath when an interval is too narrow for epsilon or a
    non-adjustable feature stands outside its bounds.
    """
    if path.leaf_label != 1:
        raise ValueError("positive instances are built from positive paths only")
    epsilon = _check_epsilon(epsilon)
    intervals = _fold_conditions(path.conditions)
    values = _apply_intervals(
        x.values, intervals, epsilon, space.adjustable_mask, skip_satisfied
    )
    return Instance(values)


def _positive_leaf_walk(tree: DecisionTree):
    """Yield (leaf_ordinal, folded_intervals) for each positive leaf.

    Walks the tree once, maintaining the interval map incrementally so
    shared path prefixes are folded a single time.
    """
    intervals: dict[int, tuple[float, float]] = {}
    out: list[tuple[int, dict[int, tuple[float, float]]]] = []
    ordinal = 0

    def visit(node):
        nonlocal ordinal
        if isinstance(node, Leaf):
            if node.label == 1:
                out.append((ordinal, dict(intervals)))
            ordinal += 1
            return
        f, t = node.feature, node.threshold
        saved = intervals.get(f)
        lo, hi = saved if saved is not None else (-INF, INF)
        intervals[f] = (lo, min(hi, t))
        visit(node.left)
        intervals[f] = (max(lo, t), hi)
        visit(node.right)
        if saved is None:
            del intervals[f]
        else:
            intervals[f] = saved

    visit(tree.root)
    return out


@dataclass(frozen=True, eq=False)
class _RawCandidate:
    tree_index: int
    path_index: int
    values: np.ndarray


def _generate_candidates(
    ens: TreeEnsemble,
    x: Instance,
    epsilon: float,
    skip_satisfied: bool,
    budget: int | None,
    workers: int | None,
) -> tuple[list[_RawCandidate], SearchStats]:
    """All ensemble-positive candidates from negative-voting trees, in
    (tree, path) order, plus counters describing the search.

    A tree is searched only when the ensemble prediction and its own vote
    are both negative; for an ensemble-positive instance nothing is
    selected and the set is empty.
    """
    x_values = x.values
    adjustable = ens.feature_space.adjustable_mask
    if predict_ensemble(ens, x_values) == -1:
        selected = [
            k for k, tree in enumerate(ens.trees) if predict_tree(tree, x_values) == -1
        ]
    else:
        selected = []

    # Pre-allocate the budget across trees in index order so that any
    # truncation point is independent of scheduling.
    quotas: dict[int, int] = {}
    truncated = False
    remaining = budget if budget is not None else None
    for k in selected:
        need = ens.trees[k].positive_leaf_count
        if remaining is None:
            quotas[k] = need
        else:
            quotas[k] = min(need, remaining)
            remaining -= quotas[k]
            if quotas[k] < need:
                truncated = True

    def search_tree(k: int):
        tree = ens.trees[k]
        quota = quotas[k]
        found: list[_RawCandidate] = []
        examined = infeasible = rejected = 0
        for ordinal, intervals in _positive_leaf_walk(tree):
            if examined >= quota:
                break
            examined += 1
            try:
                values = _apply_intervals(
                    x_values, intervals, epsilon, adjustable, skip_satisfied
                )
            except InfeasiblePath:
                infeasible += 1
                continue
            if predict_ensemble(ens, values) == 1:
                found.append(_RawCandidate(k, ordinal, values))
            else:
                rejected += 1
        return found, examined, infeasible, rejected

    results = map_ordered(search_tree, selected, workers)
    candidates: list[_RawCandidate] = []
    examined = infeasible = rejected = 0
    for found, ex, inf_, rej in results:
        candidates.extend(found)
        examined += ex
        infeasible += inf_
        rejected += rej
    if truncated:
        logger.warning(
            "tweak search truncated by budget=%s after %d paths", budget, examined
        )
    stats = SearchStats(len(selected), examined, infeasible, rejected, truncated)
    return candidates, stats


def _cost_or_incomparable(delta: Callable, x_values, cand_values, where: str) -> float:
    try:
        return delta(x_values, cand_values)
    except (ZeroVector, ZeroVariance) as exc:
        logger.warning("cost undefined for candidate %s (%s); ranked last", where, exc)
        return INF


def _to_transformations(
    raw: Iterable[_RawCandidate], x_values, delta: Callable
) -> list[Transformation]:
    out = []
    for cand in raw:
        cost = _cost_or_incomparable(
            delta, x_values, cand.values,
            f"tree {cand.tree_index} path {cand.path_index}",
        )
        changed = frozenset(
            int(i) for i in np.nonzero(cand.values != x_values)[0]
        )
        out.append(
            Transformation(
                candidate=Instance(cand.values),
                source_tree=cand.tree_index,
                source_path=cand.path_index,
                cost=cost,
                changed_indices=changed,
            )
        )
    return out


def _require_negative(ens: TreeEnsemble, x: Instance) -> None:
    if predict_ensemble(ens, x) != -1:
        raise NotNegative("instance is already predicted positive by the ensemble")


def candidate_set(
    ens: TreeEnsemble,
    x: Instance,
    epsilon: float,
    delta: Callable | str,
    skip_satisfied: bool = False,
    budget: int | None = None,
    workers: int | None = None,
) -> list[Transformation]:
    """Every valid transformation of x: built from a positive path of a
    negative-voting tree and re-predicted positive by the whole ensemble.

    Empty when nothing qualifies — including when x is already predicted
    positive, since no tree passes the both-negative selection then.
    """
    epsilon = _check_epsilon(epsilon)
    delta_fn = cost_by_name(delta) if isinstance(delta, str) else delta
    raw, _ = _generate_candidates(ens, x, epsilon, skip_satisfied, budget, workers)
    return _to_transformations(raw, x.values, delta_fn)


def tweak(
    ens: TreeEnsemble,
    x: Instance,
    delta: Callable | str,
    epsilon: float,
    skip_satisfied: bool = False,
    budget: int | None = None,
    workers: int | None = None,
) -> TweakOutcome:
    """Cheapest ensemble-flipping transformation of a negative instance.

    Returns Found with the minimum-cost candidate (and the full candidate
    pool), or NotCovered when no candidate flips the ensemble — an
    explicit outcome rather than silently handing back x unchanged.
    """
    _require_negative(ens, x)
    epsilon = _check_epsilon(epsilon)
    delta_fn = cost_by_name(delta) if isinstance(delta, str) else delta
    raw, stats = _generate_candidates(ens, x, epsilon, skip_satisfied, budget, workers)
    if not raw:
        reason = (
            f"no candidate flips the ensemble: {stats.paths_examined} positive "
            f"paths over {stats.trees_searched} negative-voting trees "
            f"({stats.infeasible} infeasible, {stats.rejected} rejected)"
        )
        if stats.truncated:
            reason += "; search truncated by budget"
        return NotCovered(reason)
    candidates = _to_transformations(raw, x.values, delta_fn)
    best = min(candidates, key=Transformation.sort_key)
    return Found(best=best, all_candidates=tuple(candidates))


def brute_force_tweak(
    ens: TreeEnsemble,
    x: Instance,
    delta: Callable | str,
    epsilon: float,
    only_negative_trees: bool = False,
    skip_satisfied: bool = False,
) -> TweakOutcome:
    """Testing oracle: plain enumeration over positive paths of all trees.

    Unlike :func:`tweak` it also visits trees already voting positive
    (pass ``only_negative_trees=True`` for a strict A/B against tweak),
    folds every path from scratch, and never parallelizes or budgets.
    Guarded to models with at most ``BRUTE_FORCE_PATH_LIMIT`` positive
    paths in scope.
    """
    epsilon = _check_epsilon(epsilon)
    delta_fn = cost_by_name(delta) if isinstance(delta, str) else delta
    x_values = x.values
    scope = [
        k
        for k, tree in enumerate(ens.trees)
        if not (only_negative_trees and predict_tree(tree, x_values) != -1)
    ]
    total_paths = sum(ens.trees[k].positive_leaf_count for k in scope)
    if total_paths > BRUTE_FORCE_PATH_LIMIT:
        raise SearchSpaceTooLarge(
            f"{total_paths} positive paths exceed the {BRUTE_FORCE_PATH_LIMIT} limit"
        )

    candidates: list[Transformation] = []
    for k in scope:
        for path in extract_paths(ens.trees[k], POSITIVE, tree_index=k):
            try:
                inst = build_positive_instance(
                    x, path, epsilon, ens.feature_space, skip_satisfied
                )
            except InfeasiblePath:
                continue
            if predict_ensemble(ens, inst) != 1:
                continue
            cost = _cost_or_incomparable(
                delta_fn, x_values, inst.values, f"tree {k} path {path.path_index}"
            )
            changed = frozenset(
                int(i) for i in np.nonzero(inst.values != x_values)[0]
            )
            candidates.append(
                Transformation(inst, k, path.path_index, cost, changed)
            )
    if not candidates:
        return NotCovered("exhaustive enumeration found no valid transformation")
    best = min(candidates, key=Transformation.sort_key)
    return Found(best=best, all_candidates=tuple(candidates))


# ---------------------------------------------------------------------------
# Tolerance/cost sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    delta: str
    eligible: int
    covered: int
    coverage: float
    candidates_min: float | None
    candidates_p25: float | None
    candidates_p50: float | None
    candidates_p75: float | None
    candidates_max: float | None
    micro_avg_cost: float | None
    median_instance_avg_cost: float | None


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]


SWEEP_COLUMNS = (
    "epsilon",
    "delta",
    "eligible",
    "covered",
    "coverage",
    "candidates_min",
    "candidates_p25",
    "candidates_p50",
    "candidates_p75",
    "candidates_max",
    "micro_avg_cost",
    "median_instance_avg_cost",
)


def sweep(
    ens: TreeEnsemble,
    instances: Sequence[Instance],
    epsilon_grid: Sequence[float],
    delta_names: Sequence[str],
    skip_satisfied: bool = False,
    budget: int | None = None,
    workers: int | None = None,
) -> SweepReport:
    """Coverage and cost statistics over a tolerance x cost-function grid.

    For each (epsilon, delta): the fraction of eligible (model-negative)
    instances with at least one valid transformation, quantiles of the
    per-instance candidate counts, the micro-average cost over all
    candidates, and the median of per-instance mean costs. Candidate
    generation is shared across cost functions for each epsilon.
    """
    for name in delta_names:
        cost_by_name(name)  # validate upfront
    eligible = [inst for inst in instances if predict_ensemble(ens, inst) == -1]
    rows: list[SweepRow] = []
    for epsilon in epsilon_grid:
        epsilon = _check_epsilon(epsilon)
        raw_per_instance = [
            _generate_candidates(ens, inst, epsilon, skip_satisfied, budget, workers)[0]
            for inst in eligible
        ]
        counts = np.asarray([len(raws) for raws in raw_per_instance], dtype=float)
        for name in delta_names:
            delta_fn = cost_by_name(name)
            all_costs: list[float] = []
            instance_means: list[float] = []
            for inst, raws in zip(eligible, raw_per_instance):
                finite = []
                for cand in raws:
                    cost = _cost_or_incomparable(
                        delta_fn, inst.values, cand.values,
                        f"tree {cand.tree_index} path {cand.path_index}",
                    )
                    if math.isfinite(cost):
                        finite.append(cost)
                all_costs.extend(finite)
                if finite:
                    instance_means.append(float(np.mean(finite)))
            covered = int(np.count_nonzero(counts > 0))
            if len(eligible) > 0:
                q = np.percentile(counts, [0, 25, 50, 75, 100])
                quantiles = tuple(float(v) for v in q)
                coverage = covered / len(eligible)
            else:
                quantiles = (None,) * 5
                coverage = 0.0
            rows.append(
                SweepRow(
                    epsilon=epsilon,
                    delta=name,
                    eligible=len(eligible),
                    covered=covered,
                    coverage=coverage,
                    candidates_min=quantiles[0],
                    candidates_p25=quantiles[1],
                    candidates_p50=quantiles[2],
                    candidates_p75=quantiles[3],
                    candidates_max=quantiles[4],
                    micro_avg_cost=float(np.mean(all_costs)) if all_costs else None,
                    median_instance_avg_cost=(
                        float(np.median(instance_means)) if instance_means else None
                    ),
                )
            )
    return SweepReport(tuple(rows))


def write_sweep_csv(report: SweepReport, path) -> None:
    """Serialize a sweep report; floats keep full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    repr(row.epsilon),
                    row.delta,
                    row.eligible,
                    row.covered,
                    repr(row.coverage),
                ]
                + [
                    "" if v is None else repr(v)
                    for v in (
                        row.candidates_min,
                        row.candidates_p25,
                        row.candidates_p50,
                        row.candidates_p75,
                        row.candidates_max,
                        row.micro_avg_cost,
                        row.median_instance_avg_cost,
                    )
                ]
            )
