import numpy as np
import pytest

from cohortnet.knowledge import (
    DecisionTree,
    KnowledgeBase,
    RandomForest,
    fit_kb,
    load_kb,
    save_kb,
)


def oracle_best_threshold_1d(x, y):
    """Exhaustive search over all midpoints, minimizing weighted Gini."""
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    best_t, best_g = None, np.inf
    for i in range(len(xs) - 1):
        if xs[i] == xs[i + 1]:
            continue
        t = (xs[i] + xs[i + 1]) / 2.0
        left, right = ys[x[order] <= t], ys[x[order] > t]

        def gini(part):
            _, counts = np.unique(part, return_counts=True)
            return 1.0 - ((counts / len(part)) ** 2).sum()

        g = (len(left) * gini(left) + len(right) * gini(right)) / len(ys)
        if g < best_g:
            best_g, best_t = g, t
    return best_t


class TestDecisionTree:
    def test_1d_threshold_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.random((60, 1))
        y = (x[:, 0] > 0.5).astype(np.int64)
        tree = DecisionTree().fit(x, y)
        assert tree.root.feature == 0
        assert tree.root.threshold == oracle_best_threshold_1d(x[:, 0], y)
        assert tree.root.left.is_leaf and tree.root.right.is_leaf
        assert np.mean(tree.predict(x) == y) == 1.0

    def test_pure_data_single_leaf(self):
        tree = DecisionTree().fit(np.random.default_rng(1).random((12, 3)),
                                  np.ones(12, dtype=np.int64), n_classes=2)
        assert tree.root.is_leaf
        assert tree.n_leaves() == 1

    def test_unconstrained_tree_memorizes_consistent_data(self):
        rng = np.random.default_rng(2)
        x = rng.random((80, 4))
        y = rng.integers(0, 3, 80)
        tree = DecisionTree().fit(x, y)
        assert np.mean(tree.predict(x) == y) == 1.0

    def test_max_depth_respected(self):
        rng = np.random.default_rng(3)
        x = rng.random((100, 3))
        y = rng.integers(0, 2, 100)
        tree = DecisionTree(max_depth=2).fit(x, y)
        assert tree.n_leaves() <= 4

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(4)
        x = rng.random((50, 6))
        y = rng.integers(0, 3, 50)
        r1 = DecisionTree(max_features=2, seed=9).fit(x, y).predict(x)
        r2 = DecisionTree(max_features=2, seed=9).fit(x, y).predict(x)
        np.testing.assert_array_equal(r1, r2)


class TestRules:
    def test_single_split_two_rules(self):
        x = np.linspace(0, 1, 20)[:, None]
        y = (x[:, 0] > 0.5).astype(np.int64)
        tree = DecisionTree().fit(x, y)
        rules = tree.rules()
        assert len(rules) == tree.n_leaves() == 2

    def test_depth_two_complete_tree_four_rules(self):
        # XOR-ish layout forces a depth-2 tree with four leaves
        x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 5)
        y = np.array([0, 1, 1, 0] * 5)
        tree = DecisionTree().fit(x, y)
        assert tree.n_leaves() == 4
        assert len(tree.rules()) == 4

    def test_each_sample_satisfies_exactly_one_rule(self):
        rng = np.random.default_rng(5)
        x = rng.random((60, 3))
        y = rng.integers(0, 3, 60)
        tree = DecisionTree().fit(x, y)
        rules = tree.rules()
        for row in x:
            assert sum(r.matches(row) for r in rules) == 1

    def test_rules_agree_with_traversal(self):
        rng = np.random.default_rng(6)
        x = rng.random((80, 4))
        y = rng.integers(0, 3, 80)
        kb = fit_kb(x, y, kind="tree")
        preds = kb.label(x)
        rules = kb.rules()
        for row, pred in zip(x, preds):
            matched = [r for r in rules if r.matches(row)]
            assert len(matched) == 1 and matched[0].klass == pred

    def test_sample_09_goes_right(self):
        x = np.linspace(0, 1, 30)[:, None]
        y = (x[:, 0] > 0.5).astype(np.int64)
        kb = fit_kb(x, y, kind="tree")
        assert kb.label(np.array([[0.9]]))[0] == 1

    def test_render_uses_feature_names(self):
        x = np.linspace(0, 1, 20)[:, None]
        y = (x[:, 0] > 0.5).astype(np.int64)
        kb = fit_kb(x, y, kind="tree", n_classes=2)
        lines = kb.render_rules(feature_names=["GSR_00"])
        assert any("GSR_00" in line for line in lines)

    def test_forest_rules_rejected(self):
        rng = np.random.default_rng(7)
        kb = fit_kb(rng.random((30, 2)), rng.integers(0, 2, 30),
                    kind="forest", n_trees=3)
        with pytest.raises(ValueError):
            kb.rules()


class TestRandomForest:
    def test_degenerate_forest_equals_single_tree(self):
        rng = np.random.default_rng(8)
        x = rng.random((70, 5))
        y = rng.integers(0, 3, 70)
        forest = RandomForest(n_trees=1, bootstrap=False, max_features=None,
                              seed=0).fit(x, y)
        tree = DecisionTree().fit(x, y)
        np.testing.assert_array_equal(forest.predict(x), tree.predict(x))

    def test_majority_vote_with_smallest_index_ties(self):
        votes_expected = 1  # classes (0, 1, 1) -> 1
        f = RandomForest(n_trees=3)
        f.n_classes = 3
        trees = []
        for klass in (0, 1, 1):
            t = DecisionTree()
            t.n_classes = 3
            from cohortnet.knowledge import TreeNode
            counts = np.zeros(3)
            counts[klass] = 1
            t.root = TreeNode(counts=counts)
            trees.append(t)
        f.trees = trees
        assert f.predict(np.zeros((1, 2)))[0] == votes_expected

    def test_forest_deterministic(self):
        rng = np.random.default_rng(9)
        x = rng.random((60, 6))
        y = rng.integers(0, 3, 60)
        a = RandomForest(n_trees=10, seed=4).fit(x, y).predict(x)
        b = RandomForest(n_trees=10, seed=4).fit(x, y).predict(x)
        np.testing.assert_array_equal(a, b)

    def test_forest_fits_training_data_reasonably(self):
        rng = np.random.default_rng(10)
        x = rng.random((120, 5))
        y = (x[:, 0] + x[:, 1] > 1.0).astype(np.int64)
        f = RandomForest(n_trees=20, seed=1).fit(x, y)
        assert np.mean(f.predict(x) == y) > 0.95


class TestFitKb:
    def test_empty_class_rejected(self):
        with pytest.raises(ValueError, match="class"):
            fit_kb(np.random.default_rng(11).random((10, 2)),
                   np.zeros(10, dtype=np.int64), n_classes=3)

    def test_label_checks_width(self):
        rng = np.random.default_rng(12)
        kb = fit_kb(rng.random((30, 4)), rng.integers(0, 2, 30), kind="tree")
        with pytest.raises(ValueError, match="width"):
            kb.label(np.zeros((3, 5)))

    def test_save_load_roundtrip_tree(self, tmp_path):
        rng = np.random.default_rng(13)
        x = rng.random((50, 3))
        y = rng.integers(0, 3, 50)
        kb = fit_kb(x, y, kind="tree")
        save_kb(kb, tmp_path / "kb.txt")
        kb2 = load_kb(tmp_path / "kb.txt")
        np.testing.assert_array_equal(kb.label(x), kb2.label(x))

    def test_save_load_roundtrip_forest(self, tmp_path):
        rng = np.random.default_rng(14)
        x = rng.random((50, 3))
        y = rng.integers(0, 3, 50)
        kb = fit_kb(x, y, kind="forest", n_trees=5)
        save_kb(kb, tmp_path / "kb.txt")
        kb2 = load_kb(tmp_path / "kb.txt")
        np.testing.assert_array_equal(kb.label(x), kb2.label(x))
