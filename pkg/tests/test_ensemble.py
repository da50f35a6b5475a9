import itertools
import json

import numpy as np
import pytest

from cprex.ensemble import (META_FEATURE_COUNT, build_meta_features, gini,
                            load_forest, meta_feature_names, rf_predict,
                            rf_train, save_forest, vote)
from cprex.labels import DEFAULT_LABELS, NEG

from helpers import forest_walk_oracle, vote_count_oracle


# ---------------------------------------------------------------------------
# voting


def test_vote_two_model_agreement():
    assert vote("CPR:4", "CPR:4", NEG) == "CPR:4"


def test_vote_three_way_disagreement_is_neg():
    assert vote("CPR:3", "CPR:4", "CPR:9") == NEG


def test_vote_neg_majority():
    assert vote(NEG, NEG, "CPR:5") == NEG


def test_vote_unanimous_flag():
    assert vote("CPR:4", "CPR:4", NEG, unanimous=True) == NEG
    assert vote("CPR:4", "CPR:4", "CPR:4", unanimous=True) == "CPR:4"


def test_vote_symmetric_under_permutation():
    for triple in itertools.product(list(DEFAULT_LABELS), repeat=3):
        expected = vote(*triple)
        for perm in itertools.permutations(triple):
            assert vote(*perm) == expected


def test_vote_matches_counting_oracle_on_all_216_triples():
    triples = list(itertools.product(list(DEFAULT_LABELS), repeat=3))
    assert len(triples) == 216
    for triple in triples:
        assert vote(*triple) == vote_count_oracle(triple)
        assert vote(*triple, unanimous=True) == vote_count_oracle(triple, unanimous=True)


def test_two_positive_labels_cannot_both_reach_two_votes():
    for triple in itertools.product(list(DEFAULT_LABELS), repeat=3):
        winners = {lab for lab in triple
                   if lab != NEG and list(triple).count(lab) >= 2}
        assert len(winners) <= 1


# ---------------------------------------------------------------------------
# meta features


def test_meta_features_length_and_order():
    svm = np.arange(6.0)
    cnn = np.arange(6.0) + 10
    rnn = np.arange(5.0) + 100
    meta = build_meta_features(svm, cnn, rnn)
    assert meta.shape == (META_FEATURE_COUNT,)
    assert np.array_equal(meta[:6], svm)
    assert np.array_equal(meta[6:12], cnn)
    assert np.array_equal(meta[12:], rnn)


def test_meta_features_zero_inputs():
    meta = build_meta_features(np.zeros(6), np.zeros(6), np.zeros(5))
    assert np.array_equal(meta, np.zeros(17))


def test_meta_features_reject_wrong_lengths():
    with pytest.raises(ValueError):
        build_meta_features(np.zeros(5), np.zeros(6), np.zeros(5))
    with pytest.raises(ValueError):
        build_meta_features(np.zeros(6), np.zeros(6), np.zeros(6))


def test_meta_feature_names_cover_blocks():
    names = meta_feature_names(DEFAULT_LABELS)
    assert len(names) == 17
    assert names[0] == "svm:NEG"
    assert names[6] == "cnn:NEG"
    assert names[12] == "rnn:CPR:3"


# ---------------------------------------------------------------------------
# random forest


def test_gini_bounds():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        counts = rng.integers(0, 50, size=k)
        if counts.sum() == 0:
            continue
        value = gini(counts)
        assert 0.0 <= value <= 1.0 - 1.0 / k + 1e-12
    assert gini(np.array([10, 0, 0])) == 0.0


def blob_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(17)
    direction /= np.linalg.norm(direction)
    x = rng.standard_normal((n, 17)) * 0.5
    y = (rng.random(n) < 0.5).astype(np.int64)
    x += np.outer(np.where(y == 1, 2.0, -2.0), direction)
    return x, y


def test_forest_separates_gaussian_blobs():
    x, y = blob_data()
    forest = rf_train(x[:150], y[:150], n_classes=2, tree_count=200, seed=1)
    correct = sum(rf_predict(forest, x[i]) == y[i] for i in range(150, 200))
    assert correct / 50 >= 0.95


def test_single_tree_memorizes_distinct_vectors():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 17))
    y = rng.integers(0, 6, size=30)
    forest = rf_train(x, y, n_classes=6, tree_count=1, seed=2, bootstrap=False)
    assert all(rf_predict(forest, x[i]) == y[i] for i in range(30))


def test_forest_deterministic_given_seed():
    x, y = blob_data(n=80, seed=3)
    a = rf_train(x, y, n_classes=2, tree_count=25, seed=9)
    b = rf_train(x, y, n_classes=2, tree_count=25, seed=9)
    for ta, tb in zip(a.trees, b.trees):
        assert ta.feature == tb.feature
        assert ta.threshold == tb.threshold
        assert ta.left == tb.left and ta.right == tb.right
        assert ta.histogram == tb.histogram


def test_identical_trees_vote_like_one_tree():
    x, y = blob_data(n=60, seed=4)
    forest = rf_train(x, y, n_classes=2, tree_count=1, seed=3, bootstrap=False)
    forest.trees = forest.trees * 3
    single = forest.trees[0]
    for i in range(20):
        assert rf_predict(forest, x[i]) == single.predict(x[i])


def test_single_class_training_always_predicts_it():
    x = np.random.default_rng(1).standard_normal((10, 17))
    forest = rf_train(x, np.full(10, 4), n_classes=6, tree_count=5, seed=0)
    assert all(rf_predict(forest, row) == 4 for row in x)


def test_empty_training_set_errors():
    with pytest.raises(ValueError, match="empty"):
        rf_train(np.zeros((0, 17)), np.zeros(0, dtype=int), n_classes=6)


def test_forest_prediction_equals_majority_of_tree_predictions():
    x, y = blob_data(n=100, seed=6)
    forest = rf_train(x[:70], y[:70], n_classes=2, tree_count=31, seed=8)
    for i in range(70, 100):
        votes = [tree.predict(x[i]) for tree in forest.trees]
        majority = max(range(2), key=lambda c: (votes.count(c), -c))
        assert rf_predict(forest, x[i]) == majority


def test_every_split_strictly_decreases_weighted_impurity():
    rng = np.random.default_rng(15)
    x = rng.standard_normal((120, 17))
    y = rng.integers(0, 6, size=120)
    forest = rf_train(x, y, n_classes=6, tree_count=10, seed=3)
    inspected = 0
    for tree in forest.trees:
        for node, feature in enumerate(tree.feature):
            if feature < 0:
                continue
            inspected += 1
            parent = np.array(tree.histogram[node])
            left = np.array(tree.histogram[tree.left[node]])
            right = np.array(tree.histogram[tree.right[node]])
            assert np.array_equal(parent, left + right)
            n = parent.sum()
            weighted = (left.sum() * gini(left) + right.sum() * gini(right)) / n
            assert weighted < gini(parent) - 1e-12
    assert inspected > 0


def test_predict_rejects_wrong_width():
    x, y = blob_data(n=40, seed=7)
    forest = rf_train(x, y, n_classes=2, tree_count=3, seed=0)
    with pytest.raises(ValueError):
        rf_predict(forest, np.zeros(5))


def test_forest_agrees_with_independent_tree_walk_oracle(tmp_path):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((120, 17))
    y = rng.integers(0, 6, size=120)
    forest = rf_train(x, y, n_classes=6, tree_count=40, seed=13)
    path = tmp_path / "rf.json"
    save_forest(forest, path, meta_feature_names(DEFAULT_LABELS))
    with open(path) as fh:
        payload = json.load(fh)
    for _ in range(100):
        probe = rng.standard_normal(17) * 2
        assert rf_predict(forest, probe) == forest_walk_oracle(payload, probe)


def test_forest_round_trip_and_header_validation(tmp_path):
    x, y = blob_data(n=50, seed=9)
    forest = rf_train(x, y, n_classes=2, tree_count=7, seed=1)
    path = tmp_path / "rf.json"
    names = meta_feature_names(DEFAULT_LABELS)
    save_forest(forest, path, names)
    loaded = load_forest(path, names)
    for i in range(20):
        assert rf_predict(loaded, x[i]) == rf_predict(forest, x[i])
    with pytest.raises(ValueError, match="ordering"):
        load_forest(path, list(reversed(names)))
