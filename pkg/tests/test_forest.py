import numpy as np
import pytest

from treetweak.errors import CorruptModel, SchemaVersionMismatch
from treetweak.feature_space import Instance
from treetweak.forest import (
    GT,
    LE,
    DecisionTree,
    Internal,
    Leaf,
    TreeEnsemble,
    dumps_model,
    extract_paths,
    load_model,
    predict_ensemble,
    predict_tree,
    route,
    save_model,
    vote_sum,
)

from conftest import plain_space, random_ensemble, random_tree, stump


def replay(tree, path):
    """Walk the tree following the recorded conditions; return the leaf."""
    node = tree.root
    for feature, direction, threshold in path.conditions:
        assert isinstance(node, Internal)
        assert node.feature == feature
        assert node.threshold == threshold
        node = node.left if direction == LE else node.right
    assert isinstance(node, Leaf)
    return node


def count_leaves(node):
    if isinstance(node, Leaf):
        return 1
    return count_leaves(node.left) + count_leaves(node.right)


class TestPredictTree:
    def test_single_leaf(self):
        tree = DecisionTree(Leaf(1))
        assert predict_tree(tree, Instance([123.0])) == 1

    def test_stump_boundary_routes_left(self):
        tree = stump(0, 0.5, -1, 1)
        assert predict_tree(tree, Instance([0.5])) == -1
        assert predict_tree(tree, Instance([0.5000001])) == 1

    def test_depth3_corners_reach_designed_leaves(self):
        # A full depth-3 tree splitting features 0,1,2 at 0; each of the 8
        # sign corners must reach its own leaf. Leaf labels alternate so
        # neighbours differ.
        labels = [1, -1, -1, 1, -1, 1, 1, -1]
        leaves = [Leaf(v) for v in labels]

        def level2(i):
            return Internal(2, 0.0, leaves[i], leaves[i + 1])

        tree = DecisionTree(
            Internal(
                0, 0.0,
                Internal(1, 0.0, level2(0), level2(2)),
                Internal(1, 0.0, level2(4), level2(6)),
            )
        )
        for corner in range(8):
            bits = [(corner >> shift) & 1 for shift in (2, 1, 0)]
            x = Instance([1.0 if b else -1.0 for b in bits])
            assert predict_tree(tree, x) == labels[corner]
            assert route(tree, x).path_index == corner


class TestPredictEnsemble:
    def test_single_positive_vote(self):
        ens = TreeEnsemble((DecisionTree(Leaf(1)),), plain_space(1))
        assert predict_ensemble(ens, Instance([0.0])) == 1

    def test_majority_negative(self):
        trees = (DecisionTree(Leaf(-1)), DecisionTree(Leaf(-1)), DecisionTree(Leaf(1)))
        ens = TreeEnsemble(trees, plain_space(1))
        assert predict_ensemble(ens, Instance([0.0])) == -1

    def test_even_tie_resolves_negative(self):
        trees = (DecisionTree(Leaf(1)), DecisionTree(Leaf(-1)))
        ens = TreeEnsemble(trees, plain_space(1))
        assert vote_sum(ens, Instance([0.0])) == 0
        assert predict_ensemble(ens, Instance([0.0])) == -1

    def test_sign_rule_matches_recomputation(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            ens = random_ensemble(rng, int(rng.integers(1, 6)), 4, 3)
            for _ in range(20):
                x = Instance(rng.normal(0, 2, 4))
                total = sum(predict_tree(t, x) for t in ens.trees)
                assert predict_ensemble(ens, x) == (-1 if total <= 0 else 1)


class TestExtractPaths:
    def test_single_leaf_tree(self):
        tree = DecisionTree(Leaf(1))
        paths = extract_paths(tree, "positive")
        assert len(paths) == 1
        assert paths[0].conditions == ()
        assert paths[0].leaf_label == 1

    def test_full_depth2_counts(self):
        tree = DecisionTree(
            Internal(
                0, 0.0,
                Internal(1, 0.0, Leaf(1), Leaf(-1)),
                Internal(1, 0.0, Leaf(-1), Leaf(1)),
            )
        )
        assert len(extract_paths(tree, "positive")) == 2
        assert len(extract_paths(tree, "negative")) == 2
        assert len(extract_paths(tree, "all")) == 4

    def test_path_conditions_recorded(self):
        tree = stump(0, 0.5, -1, 1)
        (neg,) = extract_paths(tree, "negative")
        (pos,) = extract_paths(tree, "positive")
        assert neg.conditions == ((0, LE, 0.5),)
        assert pos.conditions == ((0, GT, 0.5),)

    def test_random_trees_cover_all_leaves(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            tree = random_tree(rng, 5, int(rng.integers(1, 6)))
            paths = extract_paths(tree, "all")
            assert len(paths) == count_leaves(tree.root)
            assert len(extract_paths(tree, "positive")) + len(
                extract_paths(tree, "negative")
            ) == len(paths)
            # ordinals are exactly 0..leaves-1 in order
            assert [p.path_index for p in paths] == list(range(len(paths)))
            for path in paths:
                leaf = replay(tree, path)
                assert leaf.label == path.leaf_label

    def test_leaf_bound(self):
        rng = np.random.default_rng(6)
        for depth in (1, 2, 3, 4):
            tree = random_tree(rng, 4, depth, p_leaf=0.0)
            assert tree.leaf_count <= 2**depth


class TestRoute:
    def test_stump_left(self):
        tree = stump(0, 0.5, -1, 1)
        path = route(tree, Instance([0.4]))
        assert path.conditions == ((0, LE, 0.5),)
        assert path.leaf_label == -1

    def test_stump_right(self):
        tree = stump(0, 0.5, -1, 1)
        path = route(tree, Instance([0.6]))
        assert path.conditions == ((0, GT, 0.5),)
        assert path.leaf_label == 1

    def test_route_agrees_with_predict(self):
        rng = np.random.default_rng(9)
        tree = random_tree(rng, 6, 5)
        for _ in range(100):
            x = Instance(rng.normal(0, 2, 6))
            path = route(tree, x)
            assert path.leaf_label == predict_tree(tree, x)
            assert replay(tree, path).label == path.leaf_label


class TestEnsembleValidation:
    def test_feature_out_of_range(self):
        with pytest.raises(ValueError):
            TreeEnsemble((stump(3, 0.0, -1, 1),), plain_space(2))

    def test_importances_must_normalize(self):
        with pytest.raises(ValueError):
            TreeEnsemble(
                (DecisionTree(Leaf(1)),), plain_space(1), importances=[0.4]
            )

    def test_shared_node_objects_rejected(self):
        shared = Leaf(1)
        with pytest.raises(ValueError):
            DecisionTree(Internal(0, 0.0, shared, shared))


class TestSerialization:
    def _ensemble(self, seed=0, num_trees=100):
        rng = np.random.default_rng(seed)
        ens = random_ensemble(rng, num_trees, 6, 4)
        return TreeEnsemble(
            ens.trees,
            ens.feature_space,
            importances=np.full(6, 1 / 6),
            metadata={"num_trees": num_trees, "seed": seed},
        )

    def test_round_trip_is_byte_identical(self, tmp_path):
        ens = self._ensemble()
        first = tmp_path / "m1.json"
        second = tmp_path / "m2.json"
        save_model(ens, first)
        loaded = load_model(first)
        save_model(loaded, second)
        assert first.read_bytes() == second.read_bytes()

    def test_round_trip_preserves_predictions(self, tmp_path):
        ens = self._ensemble(seed=2, num_trees=20)
        path = tmp_path / "m.json"
        save_model(ens, path)
        loaded = load_model(path)
        rng = np.random.default_rng(42)
        for _ in range(1000):
            x = Instance(rng.normal(0, 2, 6))
            assert predict_ensemble(ens, x) == predict_ensemble(loaded, x)

    def test_truncated_file_is_corrupt(self, tmp_path):
        ens = self._ensemble(seed=3, num_trees=2)
        path = tmp_path / "m.json"
        save_model(ens, path)
        path.write_text(path.read_text()[: len(path.read_text()) // 2])
        with pytest.raises(CorruptModel):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        ens = self._ensemble(seed=4, num_trees=1)
        path = tmp_path / "m.json"
        save_model(ens, path)
        doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(doc)
        with pytest.raises(SchemaVersionMismatch):
            load_model(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.json")

    def test_serialization_is_deterministic(self):
        a = dumps_model(self._ensemble(seed=5, num_trees=10))
        b = dumps_model(self._ensemble(seed=5, num_trees=10))
        assert a == b
