"""Error rates, stratified k-fold cross-validation, the plain-SOM baseline
and map-structure statistics."""

import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold, StratifiedKFold

from src.shared.errors import DatasetError, SnapshotError
from src.shared.metrics import increment_folds_completed
from .datasets import apply_normalizer, fit_normalizer, scale_features
from .learning import check_dataset, fit
from .models import (
    CrossValidationSummary,
    FoldResult,
    GridCoord,
    LabeledDataset,
    MapSnapshot,
    MapStats,
    NetworkConfig,
    TrainRecord,
    TrialCurvePoint,
)
from .topology import (
    Network,
    TopographicLayer,
    anneal_width,
    init_network,
    inference_widths,
    network_forward,
)

logger = logging.getLogger(__name__)


def predict_all(net: Network, features: np.ndarray) -> np.ndarray:
    """Predicted class index of every row under inference widths."""
    widths = inference_widths(net.config)
    return np.asarray(
        [int(np.argmax(network_forward(net, row, widths)[1])) for row in features], dtype=int
    )


def error_rate(net: Network, dataset: LabeledDataset) -> float:
    """Fraction of instances whose predicted class differs from the target class."""
    check_dataset(dataset, net.config)
    predictions = predict_all(net, dataset.features)
    return float(np.mean(predictions != dataset.labels))


def _prepare_fold(
    train: LabeledDataset, test: LabeledDataset, normalize: bool, feature_scale: float
) -> Tuple[LabeledDataset, LabeledDataset]:
    if normalize:
        params = fit_normalizer(train)
        train = apply_normalizer(params, train)
        test = apply_normalizer(params, test)
    return scale_features(train, feature_scale), scale_features(test, feature_scale)


def _run_fold(
    fold_index: int,
    train_indices: np.ndarray,
    test_indices: np.ndarray,
    config: NetworkConfig,
    dataset: LabeledDataset,
    base_seed: int,
    normalize: bool,
    feature_scale: float,
    run_name: str,
) -> FoldResult:
    train, test = _prepare_fold(
        dataset.subset(train_indices), dataset.subset(test_indices), normalize, feature_scale
    )
    fold_config = replace(config, rng_seed=base_seed + fold_index)
    net = init_network(fold_config, train.features)
    curve = fit(net, train, run_name=f"{run_name}/fold{fold_index}")
    return FoldResult(
        fold_index=fold_index,
        train_error_rate=error_rate(net, train),
        test_error_rate=error_rate(net, test),
        learning_curve=curve,
        seed=fold_config.rng_seed,
        test_indices=sorted(int(i) for i in test_indices),
    )


def fold_splits(
    dataset: LabeledDataset, k: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified (train, test) index pairs after a seeded shuffle."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if dataset.num_instances < k:
        raise DatasetError(f"Dataset of {dataset.num_instances} instances cannot form {k} folds")

    labels = dataset.labels
    counts = np.bincount(labels, minlength=dataset.num_classes)
    small = [dataset.class_names[c] for c in range(len(counts)) if 0 < counts[c] < k]
    if small and len(small) == int(np.count_nonzero(counts)):
        logger.warning(f"Every class has fewer than {k} instances; using a plain shuffled split")
        splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
        return list(splitter.split(dataset.features))
    if small:
        logger.warning(
            f"Classes {small} have fewer than {k} instances and cannot appear in every test fold"
        )
    stratified = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return list(stratified.split(dataset.features, labels))


def kfold_cross_validate(
    config: NetworkConfig,
    dataset: LabeledDataset,
    k: int = 10,
    seed: int = 0,
    normalize: bool = True,
    feature_scale: float = 1.0,
    workers: int = 1,
    run_name: str = "crossval",
) -> List[FoldResult]:
    """Train and test one network per fold.

    The normalizer is fit on the training folds only. Fold ``i`` trains with
    seed ``seed + i`` so results do not depend on execution order or on
    ``workers``.
    """
    check_dataset(dataset, config)
    splits = fold_splits(dataset, k, seed)
    tasks = [
        (index, train_idx, test_idx, config, dataset, seed, normalize, feature_scale, run_name)
        for index, (train_idx, test_idx) in enumerate(splits)
    ]
    if workers > 1:
        folds = Parallel(n_jobs=workers)(delayed(_run_fold)(*task) for task in tasks)
    else:
        folds = [_run_fold(*task) for task in tasks]

    for fold in folds:
        increment_folds_completed(run_name, fold.fold_index)
        logger.info(
            f"[{run_name}] fold {fold.fold_index + 1}/{k}: train error "
            f"{fold.train_error_rate:.4f}, test error {fold.test_error_rate:.4f}"
        )
    return list(folds)


def _run_trial(
    trial: int, config: NetworkConfig, dataset: LabeledDataset, run_name: str
) -> List[TrainRecord]:
    trial_config = replace(config, rng_seed=config.rng_seed + trial)
    net = init_network(trial_config, dataset.features)
    return fit(net, dataset, run_name=f"{run_name}/trial{trial}")


def learning_curve_trials(
    config: NetworkConfig,
    dataset: LabeledDataset,
    trials: int,
    workers: int = 1,
    run_name: str = "trials",
) -> List[TrialCurvePoint]:
    """Per-epoch mean and sample standard deviation of the training error.

    Trial ``i`` trains a fresh network with seed ``config.rng_seed + i``.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    check_dataset(dataset, config)
    if workers > 1 and trials > 1:
        curves = Parallel(n_jobs=workers)(
            delayed(_run_trial)(trial, config, dataset, run_name) for trial in range(trials)
        )
    else:
        curves = [_run_trial(trial, config, dataset, run_name) for trial in range(trials)]

    errors = np.asarray([[record.mean_error for record in curve] for curve in curves])
    errors = errors.reshape(trials, config.t_end)
    ddof = 1 if trials > 1 else 0
    means = errors.mean(axis=0)
    stds = errors.std(axis=0, ddof=ddof)
    logger.info(f"[{run_name}] learning curve averaged over {trials} trials")
    return [
        TrialCurvePoint(epoch=epoch, mean_error=float(m), std_error=float(s), trials=trials)
        for epoch, (m, s) in enumerate(zip(means, stds))
    ]


def summarize_folds(folds: Sequence[FoldResult], base_seed: int = 0) -> CrossValidationSummary:
    """Mean and sample standard deviation of the fold error rates."""
    if not folds:
        raise ValueError("No folds to summarize")
    train = np.asarray([fold.train_error_rate for fold in folds])
    test = np.asarray([fold.test_error_rate for fold in folds])
    ddof = 1 if len(folds) > 1 else 0
    return CrossValidationSummary(
        folds=list(folds),
        mean_train_error=float(train.mean()),
        std_train_error=float(train.std(ddof=ddof)),
        mean_test_error=float(test.mean()),
        std_test_error=float(test.std(ddof=ddof)),
        base_seed=base_seed,
    )


def kohonen_step(
    layer: TopographicLayer, x: np.ndarray, bmu_index: int, s: float, eta: float
) -> TopographicLayer:
    """Classical attractive update W <- W + eta * sigma * (x - W), in place."""
    sigma = layer.neighborhood(bmu_index, s)
    layer.reference_vectors += eta * (sigma[:, np.newaxis] * (x - layer.reference_vectors))
    return layer


def best_matching_unit(layer: TopographicLayer, x: np.ndarray) -> int:
    return int(np.argmin(0.5 * np.sum((layer.reference_vectors - x) ** 2, axis=1)))


def train_plain_som(
    grid: Tuple[int, int],
    dataset: LabeledDataset,
    config: NetworkConfig,
    eta: Optional[float] = None,
) -> TopographicLayer:
    """Unsupervised Kohonen map on the features only.

    Shares the annealing schedule, initialization rule and seed streams of
    ``config``; ``eta`` defaults to ``config.eta_hid``.
    """
    if dataset.num_instances == 0:
        raise DatasetError("Cannot train a map on an empty dataset")
    rows, cols = grid
    features = dataset.features
    init_rng = np.random.default_rng([config.rng_seed, 0])
    vectors = init_rng.uniform(
        features.min(axis=0), features.max(axis=0), size=(rows * cols, features.shape[1])
    )
    layer = TopographicLayer(rows, cols, vectors)
    eta = config.eta_hid if eta is None else eta
    shuffle_rng = np.random.default_rng([config.rng_seed, 1])
    for epoch in range(config.t_end):
        s = anneal_width(epoch, config)
        for index in shuffle_rng.permutation(dataset.num_instances):
            x = features[index]
            kohonen_step(layer, x, best_matching_unit(layer, x), s, eta)
    logger.info(f"Plain SOM {rows}x{cols} trained for {config.t_end} epochs")
    return layer


def train_som_readout(
    grid: Tuple[int, int],
    dataset: LabeledDataset,
    config: NetworkConfig,
    run_name: str = "som-readout",
) -> Tuple[Network, List[TrainRecord]]:
    """Plain SOM followed by a sigmoid readout trained on the frozen map outputs."""
    som_config = replace(config, layer_grids=[tuple(grid)])
    som = train_plain_som(grid, dataset, som_config)
    net = init_network(som_config, dataset.features)
    net.hidden_layers[0] = som
    curve = fit(net, dataset, update_hidden=False, run_name=run_name)
    return net, curve


def _majority(classes: Dict[int, int]) -> Tuple[int, int]:
    """(class, count) of the most frequent class, lowest class index on ties."""
    best = min(classes.items(), key=lambda item: (-item[1], item[0]))
    return best[0], best[1]


def map_stats(snapshot: MapSnapshot) -> MapStats:
    """Winner-node count, hit-weighted majority purity and the grid margin between classes."""
    nodes = snapshot.node_counts()
    total = snapshot.total_hits
    if not nodes or total == 0:
        raise SnapshotError("Snapshot has no hits")

    majorities: Dict[GridCoord, int] = {}
    majority_hits = 0
    for coord, classes in nodes.items():
        winner, count = _majority(classes)
        majorities[coord] = winner
        majority_hits += count

    margin = math.inf
    coords = list(majorities)
    for i, a in enumerate(coords):
        for b in coords[i + 1 :]:
            if majorities[a] != majorities[b]:
                margin = min(margin, math.hypot(a.row - b.row, a.col - b.col))
    return MapStats(
        num_winner_nodes=len(nodes),
        class_purity=majority_hits / total,
        min_interclass_margin=0.0 if math.isinf(margin) else margin,
    )
