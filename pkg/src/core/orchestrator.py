"""Stage-level workflows shared by every CLI command.

Each public ``run_*`` function loads data, trains or evaluates, and writes
its artifacts under the run's output directory. All files are written
atomically and are byte-identical for identical config and seed.
"""

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from opentelemetry.trace import SpanKind

from src.shared.io import atomic_write_text
from src.shared.tracing import get_tracer
from .config import DatasetSource, RunConfig
from .datasets import (
    animals_dataset,
    apply_normalizer,
    fit_normalizer,
    iris_dataset,
    load_csv,
    load_idx,
    scale_features,
)
from .evaluation import (
    error_rate,
    kfold_cross_validate,
    learning_curve_trials,
    map_stats,
    summarize_folds,
    train_som_readout,
)
from .learning import fit
from .mapping import MapStyle, export_json, render_svg, snapshot_layer, snapshot_som
from .models import (
    CrossValidationSummary,
    LabeledDataset,
    MapSnapshot,
    MapStats,
    NetworkConfig,
    NormalizationParams,
    TrainRecord,
    TrialCurvePoint,
)
from .serialization import load_model, save_model
from .topology import Network, init_network

logger = logging.getLogger(__name__)


def _stage_span(stage_name: str, *, run_name: Optional[str] = None, **attrs: Any):
    """Create a traced span for a workflow stage with shared attributes."""
    tracer = get_tracer(instrumenting_module_name="crsom.stages")
    attributes: Dict[str, Any] = {
        "workflow.stage": stage_name,
        **attrs,
    }
    if run_name:
        attributes["run.name"] = run_name
    return tracer.start_as_current_span(
        name=f"stage.{stage_name.lower().replace(' ', '_')}",
        kind=SpanKind.INTERNAL,
        attributes=attributes,
    )


@dataclass
class TrainOutcome:
    network: Network
    learning_curve: List[TrainRecord]
    train_error: float
    final_snapshots: List[MapSnapshot]
    artifacts: List[Path] = field(default_factory=list)
    trial_curve: List[TrialCurvePoint] = field(default_factory=list)


@dataclass
class ComparisonOutcome:
    """Error rates and map statistics of the rRBF and the frozen-SOM readout."""

    rrbf_error: float
    som_error: float
    rrbf_stats: MapStats
    som_stats: MapStats
    artifacts: List[Path] = field(default_factory=list)


def load_dataset(source: DatasetSource) -> LabeledDataset:
    """Read the raw (unnormalized) dataset a run points at."""
    if source.kind == "csv":
        assert source.path is not None
        return load_csv(source.path, source.label_column, source.has_header, source.delimiter)
    if source.kind == "idx":
        assert source.images is not None and source.labels is not None
        return load_idx(
            source.images, source.labels, source.classes, source.max_per_class, source.total
        )
    if source.kind == "animals":
        return animals_dataset(source.context or "carnivore")
    return iris_dataset()


def preprocess(
    run: RunConfig, dataset: LabeledDataset
) -> Tuple[LabeledDataset, Optional[NormalizationParams]]:
    """Fit and apply the normalizer (when enabled), then the feature scale."""
    normalizer = fit_normalizer(dataset) if run.normalize else None
    if normalizer is not None:
        dataset = apply_normalizer(normalizer, dataset)
    return scale_features(dataset, run.feature_scale), normalizer


def apply_preprocessing(
    dataset: LabeledDataset, normalizer: Optional[NormalizationParams], feature_scale: float
) -> LabeledDataset:
    if normalizer is not None:
        dataset = apply_normalizer(normalizer, dataset)
    return scale_features(dataset, feature_scale)


def network_config(run: RunConfig, dataset: LabeledDataset) -> NetworkConfig:
    return run.network.build(dataset.num_features, dataset.num_classes)


def write_learning_curve(path: Path, records: Sequence[TrainRecord], num_layers: int) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["epoch", "mean_error"] + [f"width_layer_{m}" for m in range(1, num_layers + 1)]
    )
    for record in records:
        writer.writerow(
            [record.epoch, repr(record.mean_error)] + [repr(w) for w in record.width_per_layer]
        )
    return atomic_write_text(path, buffer.getvalue())


def write_trial_curve(path: Path, points: Sequence[TrialCurvePoint]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["epoch", "mean_error", "std_error", "trials"])
    for point in points:
        writer.writerow([point.epoch, repr(point.mean_error), repr(point.std_error), point.trials])
    return atomic_write_text(path, buffer.getvalue())


def write_map(
    directory: Path,
    stem: str,
    snapshot: MapSnapshot,
    class_names: Sequence[str],
    config_echo: Optional[Dict[str, Any]] = None,
    title: Optional[str] = None,
) -> List[Path]:
    """Write ``<stem>.json`` and ``<stem>.svg`` for one snapshot."""
    json_path = atomic_write_text(
        directory / f"{stem}.json", export_json(snapshot, class_names, config_echo)
    )
    svg_path = atomic_write_text(
        directory / f"{stem}.svg", render_svg(snapshot, class_names, MapStyle(title=title))
    )
    return [json_path, svg_path]


def run_train(run: RunConfig) -> TrainOutcome:
    """Fit a network, then write the learning curve, model and map snapshots."""
    out_dir = run.resolved_output_dir
    with _stage_span("load data", run_name=run.name, dataset=run.dataset.describe()):
        raw = load_dataset(run.dataset)
        dataset, normalizer = preprocess(run, raw)
    config = network_config(run, dataset)
    net = init_network(config, dataset.features)
    artifacts: List[Path] = []
    echo = run.to_dict()
    checkpoints = set(run.checkpoints)

    def on_epoch_end(record: TrainRecord, current: Network) -> None:
        if record.epoch not in checkpoints:
            return
        for layer_index in range(1, current.num_hidden_layers + 1):
            snapshot = snapshot_layer(current, dataset, layer_index)
            artifacts.extend(
                write_map(
                    out_dir / "maps",
                    f"layer{layer_index}_epoch{record.epoch:04d}",
                    snapshot,
                    dataset.class_names,
                    echo,
                    title=f"{run.name} layer {layer_index} epoch {record.epoch}",
                )
            )

    with _stage_span("train", run_name=run.name, epochs=config.t_end):
        curve = fit(net, dataset, on_epoch_end=on_epoch_end, run_name=run.name)
        train_error = error_rate(net, dataset)

    with _stage_span("write artifacts", run_name=run.name):
        artifacts.append(
            write_learning_curve(out_dir / "learning_curve.csv", curve, config.num_hidden_layers)
        )
        artifacts.append(
            save_model(net, out_dir / "model.json", normalizer, run.feature_scale)
        )
        snapshots = []
        for layer_index in range(1, net.num_hidden_layers + 1):
            snapshot = snapshot_layer(net, dataset, layer_index)
            snapshots.append(snapshot)
            artifacts.extend(
                write_map(
                    out_dir / "maps",
                    f"layer{layer_index}_final",
                    snapshot,
                    dataset.class_names,
                    echo,
                    title=f"{run.name} layer {layer_index}",
                )
            )

    trial_curve: List[TrialCurvePoint] = []
    if run.trials > 1:
        with _stage_span("trials", run_name=run.name, trials=run.trials):
            trial_curve = learning_curve_trials(
                config, dataset, run.trials, workers=run.workers, run_name=run.name
            )
            artifacts.append(write_trial_curve(out_dir / "learning_curve_trials.csv", trial_curve))
    logger.info(f"[{run.name}] training error {train_error:.4f}; artifacts in {out_dir}")
    return TrainOutcome(net, curve, train_error, snapshots, artifacts, trial_curve)


def run_eval(run: RunConfig, model_path: Path) -> float:
    """Error rate of a saved model on the run's dataset, using the model's preprocessing."""
    saved = load_model(model_path)
    with _stage_span("evaluate", run_name=run.name, model=str(model_path)):
        raw = load_dataset(run.dataset)
        dataset = apply_preprocessing(raw, saved.normalizer, saved.feature_scale)
        rate = error_rate(saved.network, dataset)
    logger.info(f"[{run.name}] error rate of {model_path}: {rate:.4f}")
    return rate


def run_crossval(run: RunConfig) -> CrossValidationSummary:
    """k-fold cross-validation; writes ``folds.csv`` and ``summary.json``."""
    out_dir = run.resolved_output_dir
    with _stage_span("load data", run_name=run.name, dataset=run.dataset.describe()):
        dataset = load_dataset(run.dataset)
    config = network_config(run, dataset)
    with _stage_span("cross validate", run_name=run.name, k=run.k):
        folds = kfold_cross_validate(
            config,
            dataset,
            k=run.k,
            seed=config.rng_seed,
            normalize=run.normalize,
            feature_scale=run.feature_scale,
            workers=run.workers,
            run_name=run.name,
        )
        summary = summarize_folds(folds, base_seed=config.rng_seed)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["fold", "train_error", "test_error"])
    for fold in summary.folds:
        writer.writerow([fold.fold_index, repr(fold.train_error_rate), repr(fold.test_error_rate)])
    atomic_write_text(out_dir / "folds.csv", buffer.getvalue())
    document = {**summary.to_dict(), "config": run.to_dict()}
    atomic_write_text(
        out_dir / "summary.json", json.dumps(document, sort_keys=True, indent=2) + "\n"
    )
    logger.info(f"[{run.name}] cross-validation results in {out_dir}")
    return summary


def run_compare_som(run: RunConfig) -> ComparisonOutcome:
    """Train the rRBF and a plain SOM with a frozen-map readout on the same grid and seed."""
    out_dir = run.resolved_output_dir
    with _stage_span("load data", run_name=run.name, dataset=run.dataset.describe()):
        dataset, _ = preprocess(run, load_dataset(run.dataset))
    config = network_config(run, dataset)
    grid = config.layer_grids[0]
    single = replace(config, layer_grids=[grid])

    with _stage_span("train rrbf", run_name=run.name):
        net = init_network(single, dataset.features)
        fit(net, dataset, run_name=f"{run.name}/rrbf")
        rrbf_error = error_rate(net, dataset)
        rrbf_snapshot = snapshot_layer(net, dataset, 1)

    with _stage_span("train som readout", run_name=run.name):
        som_net, _ = train_som_readout(grid, dataset, single, run_name=f"{run.name}/som")
        som_error = error_rate(som_net, dataset)
        som_snapshot = snapshot_som(som_net.hidden_layers[0], dataset)

    rrbf_stats = map_stats(rrbf_snapshot)
    som_stats = map_stats(som_snapshot)
    echo = run.to_dict()
    artifacts = write_map(out_dir, "crsom_map", rrbf_snapshot, dataset.class_names, echo, "CRSOM")
    artifacts += write_map(out_dir, "som_map", som_snapshot, dataset.class_names, echo, "SOM")
    document = {
        "rrbf": {"error_rate": rrbf_error, **_stats_dict(rrbf_stats)},
        "som_readout": {"error_rate": som_error, **_stats_dict(som_stats)},
        "config": echo,
    }
    artifacts.append(
        atomic_write_text(
            out_dir / "comparison.json", json.dumps(document, sort_keys=True, indent=2) + "\n"
        )
    )
    return ComparisonOutcome(rrbf_error, som_error, rrbf_stats, som_stats, artifacts)


def _stats_dict(stats: MapStats) -> Dict[str, Any]:
    return {
        "num_winner_nodes": stats.num_winner_nodes,
        "class_purity": stats.class_purity,
        "min_interclass_margin": stats.min_interclass_margin,
    }


def run_export_map(
    run: RunConfig, model_path: Path, layer_index: Optional[int] = None
) -> List[Path]:
    """Map JSON/SVG of one layer (or every layer) of a saved model."""
    saved = load_model(model_path)
    net = saved.network
    dataset = apply_preprocessing(
        load_dataset(run.dataset), saved.normalizer, saved.feature_scale
    )
    layers = [layer_index] if layer_index is not None else range(1, net.num_hidden_layers + 1)
    artifacts: List[Path] = []
    with _stage_span("export map", run_name=run.name, model=str(model_path)):
        for index in layers:
            snapshot = snapshot_layer(net, dataset, index)
            artifacts.extend(
                write_map(
                    run.resolved_output_dir / "maps",
                    f"layer{index}_export",
                    snapshot,
                    dataset.class_names,
                    run.to_dict(),
                    title=f"{run.name} layer {index}",
                )
            )
    for path in artifacts:
        logger.info(f"Wrote {path}")
    return artifacts
