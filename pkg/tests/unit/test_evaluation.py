"""Tests for error rates, cross-validation, the plain SOM and map statistics."""

from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from src.core.datasets import one_hot
from src.core.evaluation import (
    error_rate,
    fold_splits,
    kfold_cross_validate,
    learning_curve_trials,
    map_stats,
    summarize_folds,
    train_plain_som,
    train_som_readout,
)
from src.core.learning import fit, update_hidden_layer
from src.core.models import (
    FoldResult,
    GridCoord,
    LabeledDataset,
    MapSnapshot,
    NetworkConfig,
)
from src.core.topology import OutputLayer, init_network, layer_forward
from src.shared.errors import DatasetError, SnapshotError
from tests.synthetic import blobs


def _snapshot(hits, rows=5, cols=5):
    return MapSnapshot(
        layer_index=1,
        grid_rows=rows,
        grid_cols=cols,
        hits={(GridCoord(r, c), k): n for (r, c, k), n in hits.items()},
    )


class TestErrorRate:
    """Tests for the misclassification rate."""

    def _biased(self, make_network):
        net = make_network()
        # theta = (-5, 5) makes class 0 win for every input.
        net.output_layer = OutputLayer(np.zeros((9, 2)), np.array([-5.0, 5.0]))
        return net

    def test_perfect_and_all_wrong(self, make_network):
        """All-correct predictions give 0, all-wrong give 1."""
        net = self._biased(make_network)
        features = np.random.default_rng(0).uniform(size=(4, 3))
        class0 = LabeledDataset(features, one_hot([0] * 4, 2), ["a", "b"])
        class1 = LabeledDataset(features, one_hot([1] * 4, 2), ["a", "b"])
        assert error_rate(net, class0) == 0.0
        assert error_rate(net, class1) == 1.0

    def test_repeatable(self, make_network, dataset):
        """Inference is deterministic."""
        net = make_network()
        assert error_rate(net, dataset) == error_rate(net, dataset)

    def test_empty_dataset(self, make_network):
        """An empty dataset has no error rate."""
        empty = LabeledDataset(np.zeros((0, 3)), np.zeros((0, 2)), ["a", "b"])
        with pytest.raises(DatasetError):
            error_rate(make_network(), empty)


class TestFoldSplits:
    """Tests for the stratified partition."""

    def test_partition_and_stratification(self):
        """Folds are disjoint, cover everything and keep class proportions."""
        data = blobs(num_classes=3, per_class=10)
        splits = fold_splits(data, k=5, seed=1)
        tests = [test for _, test in splits]
        assert sorted(np.concatenate(tests).tolist()) == list(range(30))
        for train, test in splits:
            assert set(train).isdisjoint(test)
            counts = np.bincount(data.labels[test], minlength=3)
            assert np.all(np.abs(counts - 2) <= 1)

    def test_iris_sized_folds(self):
        """150 instances in 10 folds gives folds of 15."""
        data = blobs(num_classes=3, per_class=50)
        assert [len(test) for _, test in fold_splits(data, 10, 0)] == [15] * 10

    def test_seeded(self):
        """The same seed gives the same folds."""
        data = blobs(per_class=8)
        a = fold_splits(data, 4, 7)
        b = fold_splits(data, 4, 7)
        for (_, ta), (_, tb) in zip(a, b):
            np.testing.assert_array_equal(ta, tb)

    def test_k_too_small(self):
        """k must be at least 2."""
        with pytest.raises(ValueError):
            fold_splits(blobs(), 1, 0)

    def test_dataset_smaller_than_k(self):
        """Every fold needs at least one instance."""
        with pytest.raises(DatasetError):
            fold_splits(blobs(per_class=2), 5, 0)

    def test_small_class_warns(self, caplog):
        """Classes smaller than k are reported."""
        features = np.random.default_rng(0).uniform(size=(12, 2))
        data = LabeledDataset(features, one_hot([0] * 10 + [1] * 2, 2), ["big", "small"])
        with caplog.at_level("WARNING"):
            splits = fold_splits(data, 4, 0)
        assert len(splits) == 4
        assert "small" in caplog.text


class TestCrossValidation:
    """Tests for the fold driver."""

    def _config(self, data, **kwargs):
        return NetworkConfig(
            layer_grids=[(3, 3)],
            input_dim=data.num_features,
            num_classes=data.num_classes,
            t_end=5,
            **kwargs,
        )

    def test_fold_results(self):
        """One result per fold with derived seeds and a partition of test indices."""
        data = blobs(per_class=6)
        folds = kfold_cross_validate(self._config(data), data, k=3, seed=10)
        assert [f.fold_index for f in folds] == [0, 1, 2]
        assert [f.seed for f in folds] == [10, 11, 12]
        assert sorted(i for f in folds for i in f.test_indices) == list(range(12))
        for fold in folds:
            assert 0.0 <= fold.test_error_rate <= 1.0
            assert len(fold.learning_curve) == 5

    def test_parallel_matches_serial(self):
        """Worker count does not change the results."""
        data = blobs(per_class=6)
        config = self._config(data)
        serial = kfold_cross_validate(config, data, k=3, seed=0, workers=1)
        parallel = kfold_cross_validate(config, data, k=3, seed=0, workers=2)
        assert [(f.train_error_rate, f.test_error_rate) for f in serial] == [
            (f.train_error_rate, f.test_error_rate) for f in parallel
        ]
        assert [r.mean_error for r in serial[0].learning_curve] == [
            r.mean_error for r in parallel[0].learning_curve
        ]

    def test_summary(self):
        """Mean and sample standard deviation across folds."""
        folds = [FoldResult(i, 0.0, rate, seed=i) for i, rate in enumerate([0.1, 0.2, 0.3])]
        summary = summarize_folds(folds, base_seed=0)
        assert summary.mean_test_error == pytest.approx(0.2)
        assert summary.std_test_error == pytest.approx(0.1)
        assert summary.to_dict()["seeds"] == [0, 1, 2]
        assert summary.to_dict()["k"] == 3


class TestLearningCurveTrials:
    """Tests for the learning curve averaged over seeds."""

    def _config(self, data, **kwargs):
        params = dict(layer_grids=[(3, 3)], input_dim=data.num_features, num_classes=2, t_end=5)
        params.update(kwargs)
        return NetworkConfig(**params)

    def test_mean_and_std_over_consecutive_seeds(self, dataset):
        """Trial i trains with seed base + i; points hold the per-epoch mean and sample std."""
        config = self._config(dataset, rng_seed=4)
        points = learning_curve_trials(config, dataset, trials=3)

        errors = []
        for seed in (4, 5, 6):
            seeded = replace(config, rng_seed=seed)
            curve = fit(init_network(seeded, dataset.features), dataset)
            errors.append([record.mean_error for record in curve])
        errors = np.asarray(errors)

        assert [p.epoch for p in points] == list(range(5))
        assert all(p.trials == 3 for p in points)
        np.testing.assert_allclose([p.mean_error for p in points], errors.mean(axis=0))
        np.testing.assert_allclose([p.std_error for p in points], errors.std(axis=0, ddof=1))

    def test_single_trial_has_zero_spread(self, dataset):
        """One trial reproduces fit's curve with zero standard deviation."""
        config = self._config(dataset)
        points = learning_curve_trials(config, dataset, trials=1)
        curve = fit(init_network(config, dataset.features), dataset)
        assert [p.mean_error for p in points] == [r.mean_error for r in curve]
        assert all(p.std_error == 0.0 for p in points)

    def test_workers_do_not_change_result(self, dataset):
        """Parallel trials give the same points as serial ones."""
        config = self._config(dataset)
        serial = learning_curve_trials(config, dataset, trials=2, workers=1)
        parallel = learning_curve_trials(config, dataset, trials=2, workers=2)
        assert serial == parallel

    def test_needs_a_trial(self, dataset):
        """At least one trial is required."""
        with pytest.raises(ValueError):
            learning_curve_trials(self._config(dataset), dataset, trials=0)


class TestPlainSom:
    """Tests for the unsupervised baseline."""

    def _config(self, data, **kwargs):
        params = dict(layer_grids=[(4, 4)], input_dim=data.num_features, num_classes=2, t_end=20)
        params.update(kwargs)
        return NetworkConfig(**params)

    def test_single_instance_fixed_point(self):
        """The BMU reference vector converges to a lone instance."""
        data = LabeledDataset(np.array([[0.3, 0.6, 0.9]]), np.array([[1.0, 0.0]]), ["a", "b"])
        config = self._config(data, t_end=200, eta_hid=0.3)
        layer = train_plain_som((4, 4), data, config)
        distances = np.linalg.norm(layer.reference_vectors - data.features[0], axis=1)
        assert distances.min() < 1e-3

    def test_label_blind(self, dataset):
        """Permuting labels leaves the trained map bitwise identical."""
        config = self._config(dataset)
        shuffled = LabeledDataset(dataset.features, dataset.targets[::-1].copy(), ["c0", "c1"])
        a = train_plain_som((4, 4), dataset, config)
        b = train_plain_som((4, 4), shuffled, config)
        np.testing.assert_array_equal(a.reference_vectors, b.reference_vectors)

    def test_loop_matches_unit_delta_rule(self, dataset):
        """Replacing each Kohonen step by the supervised rule with delta = 1 gives the same map."""
        config = self._config(dataset, t_end=15, eta_hid=0.2)
        expected = train_plain_som((4, 4), dataset, config)
        steps = []

        def unit_delta_step(layer, x, bmu_index, s, eta):
            activation = layer_forward(layer, x, s)
            assert activation.bmu_index == bmu_index
            update_hidden_layer(layer, np.ones(layer.num_nodes), activation, x, s, eta)
            steps.append(bmu_index)
            return layer

        with patch("src.core.evaluation.kohonen_step", side_effect=unit_delta_step):
            actual = train_plain_som((4, 4), dataset, config)

        assert len(steps) == 15 * dataset.num_instances
        np.testing.assert_array_equal(actual.reference_vectors, expected.reference_vectors)

    def test_readout_keeps_map_frozen(self, dataset):
        """The readout network reuses the plain SOM unchanged."""
        config = self._config(dataset)
        som = train_plain_som((4, 4), dataset, config)
        net, curve = train_som_readout((4, 4), dataset, config)
        np.testing.assert_array_equal(net.hidden_layers[0].reference_vectors, som.reference_vectors)
        assert len(curve) == 20
        assert curve[-1].mean_error < curve[0].mean_error

    def test_readout_uses_first_grid_only(self, dataset):
        """A deeper config still yields a single-map readout network."""
        config = self._config(dataset, layer_grids=[(4, 4), (2, 2)])
        net, _ = train_som_readout((4, 4), dataset, replace(config))
        assert net.num_hidden_layers == 1


class TestMapStats:
    """Tests for winner sparsity, purity and margins."""

    def test_pure_nodes(self):
        """Each class on its own node gives purity 1."""
        stats = map_stats(_snapshot({(0, 0, 0): 4, (3, 4, 1): 2}))
        assert stats.num_winner_nodes == 2
        assert stats.class_purity == 1.0
        assert stats.min_interclass_margin == pytest.approx(5.0)

    def test_single_node_balanced(self):
        """One node winning a balanced two-class set has purity 0.5."""
        stats = map_stats(_snapshot({(2, 2, 0): 5, (2, 2, 1): 5}))
        assert stats.class_purity == 0.5
        assert stats.min_interclass_margin == 0.0

    def test_margin_uses_majority_classes(self):
        """Only nodes with different majority classes define the margin."""
        stats = map_stats(
            _snapshot({(0, 0, 0): 3, (0, 1, 0): 2, (0, 1, 1): 1, (4, 0, 1): 3})
        )
        assert stats.min_interclass_margin == pytest.approx(4.0)
        assert stats.class_purity == pytest.approx(8 / 9)

    def test_tie_goes_to_lowest_class(self):
        """A tied node counts for the lower class index."""
        stats = map_stats(_snapshot({(0, 0, 1): 2, (0, 0, 0): 2, (0, 3, 1): 1}))
        assert stats.min_interclass_margin == pytest.approx(3.0)

    def test_permutation_invariant(self):
        """Insertion order of hits does not matter."""
        hits = {(0, 0, 0): 3, (1, 1, 1): 2, (1, 1, 0): 1}
        reordered = dict(reversed(list(hits.items())))
        assert map_stats(_snapshot(hits)) == map_stats(_snapshot(reordered))

    def test_empty_snapshot(self):
        """A snapshot without hits has no statistics."""
        with pytest.raises(SnapshotError):
            map_stats(_snapshot({}))
