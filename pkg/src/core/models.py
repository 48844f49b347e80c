"""Shared data models for the topographic classifier."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.shared.errors import ConfigurationError, DatasetError


@dataclass(frozen=True, order=True)
class GridCoord:
    """Position of a node on a 2-D map (row-major flat indexing)."""

    row: int
    col: int

    @classmethod
    def from_flat(cls, index: int, grid_cols: int) -> "GridCoord":
        row, col = divmod(int(index), grid_cols)
        return cls(row, col)


@dataclass
class NetworkConfig:
    """Architecture and hyperparameters of an M-rRBF network."""

    layer_grids: List[Tuple[int, int]]
    input_dim: int
    num_classes: int
    s0: Optional[float] = None  # None -> (max grid dimension)^2 / 4
    s_end: float = 0.25
    t_end: int = 300
    eta_out: float = 0.1
    eta_hid: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        self.layer_grids = [(int(r), int(c)) for r, c in self.layer_grids]
        if not self.layer_grids:
            raise ConfigurationError("At least one hidden layer is required")
        for rows, cols in self.layer_grids:
            if rows < 1 or cols < 1:
                raise ConfigurationError(f"Grid dimensions must be positive, got {rows}x{cols}")
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be positive, got {self.input_dim}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.s0 is None:
            largest = max(max(rows, cols) for rows, cols in self.layer_grids)
            self.s0 = largest**2 / 4.0
        self.s0 = float(self.s0)
        self.s_end = float(self.s_end)
        if not (0.0 < self.s_end <= self.s0) or not np.isfinite(self.s0):
            raise ConfigurationError(
                "Neighborhood widths must satisfy 0 < s_end <= s0 "
                f"(s0={self.s0}, s_end={self.s_end})"
            )
        if self.t_end < 0:
            raise ConfigurationError(f"t_end must be non-negative, got {self.t_end}")
        if self.eta_out < 0 or self.eta_hid < 0:
            raise ConfigurationError("Learning rates must be non-negative")
        if self.rng_seed < 0:
            raise ConfigurationError(f"rng_seed must be non-negative, got {self.rng_seed}")

    @property
    def num_hidden_layers(self) -> int:
        return len(self.layer_grids)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer_grids": [list(grid) for grid in self.layer_grids],
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "s0": self.s0,
            "s_end": self.s_end,
            "t_end": self.t_end,
            "eta_out": self.eta_out,
            "eta_hid": self.eta_hid,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkConfig":
        try:
            return cls(
                layer_grids=[tuple(grid) for grid in data["layer_grids"]],
                input_dim=int(data["input_dim"]),
                num_classes=int(data["num_classes"]),
                s0=data.get("s0"),
                s_end=float(data.get("s_end", 0.25)),
                t_end=int(data.get("t_end", 300)),
                eta_out=float(data.get("eta_out", 0.1)),
                eta_hid=float(data.get("eta_hid", 0.05)),
                rng_seed=int(data.get("rng_seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigurationError(f"Invalid network config: {err}") from err


@dataclass
class LayerActivation:
    """Forward-pass record of one topographic layer."""

    pre_activations: np.ndarray  # I^M, half squared distances
    outputs: np.ndarray  # O^M in [0, 1]
    bmu: GridCoord
    bmu_index: int  # flat, row-major
    neighborhood: np.ndarray  # sigma(k*, k, s) for every node
    width: float


@dataclass
class TrainRecord:
    """One point of the learning curve."""

    epoch: int
    mean_error: float
    width_per_layer: List[float]


@dataclass
class TrialCurvePoint:
    """Training error of one epoch averaged over several seeded runs."""

    epoch: int
    mean_error: float
    std_error: float
    trials: int


@dataclass
class DeltaSignals:
    """Error signals of a single presentation, top to bottom."""

    output_deltas: np.ndarray
    hidden_deltas: List[np.ndarray]  # index 0 is layer 1
    weight_changes: List[np.ndarray]  # un-scaled Delta W, shape (nodes, input_dim)


@dataclass
class LabeledDataset:
    """Feature matrix with one-hot targets."""

    features: np.ndarray
    targets: np.ndarray
    class_names: List[str]
    feature_names: Optional[List[str]] = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise DatasetError("Features and targets must be 2-D matrices")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DatasetError(
                f"Feature rows ({self.features.shape[0]}) and target rows "
                f"({self.targets.shape[0]}) differ"
            )
        if len(self.class_names) < 2:
            raise DatasetError(f"At least two classes are required, got {self.class_names}")
        if self.targets.shape[1] != len(self.class_names):
            raise DatasetError("Target width does not match the number of class names")
        if self.targets.size and not (
            np.all((self.targets == 0.0) | (self.targets == 1.0))
            and np.all(self.targets.sum(axis=1) == 1.0)
        ):
            raise DatasetError("Every target row must be one-hot")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("Features must be finite")
        if self.feature_names is not None and len(self.feature_names) != self.features.shape[1]:
            raise DatasetError("feature_names length does not match the feature count")

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features[indices],
            targets=self.targets[indices],
            class_names=list(self.class_names),
            feature_names=None if self.feature_names is None else list(self.feature_names),
        )

    def with_features(self, features: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            features=features,
            targets=self.targets.copy(),
            class_names=list(self.class_names),
            feature_names=None if self.feature_names is None else list(self.feature_names),
        )


@dataclass
class NormalizationParams:
    """Per-feature min/max of a training set."""

    minimum: np.ndarray
    maximum: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizationParams":
        return cls(
            minimum=np.asarray(data["min"], dtype=np.float64),
            maximum=np.asarray(data["max"], dtype=np.float64),
        )


@dataclass
class FoldResult:
    """Outcome of one cross-validation fold."""

    fold_index: int
    train_error_rate: float
    test_error_rate: float
    learning_curve: List[TrainRecord] = field(default_factory=list)
    seed: int = 0
    test_indices: List[int] = field(default_factory=list)


@dataclass
class CrossValidationSummary:
    """All folds plus aggregate train/test error."""

    folds: List[FoldResult]
    mean_train_error: float
    std_train_error: float
    mean_test_error: float
    std_test_error: float
    base_seed: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": len(self.folds),
            "mean": {"train_error": self.mean_train_error, "test_error": self.mean_test_error},
            "std": {"train_error": self.std_train_error, "test_error": self.std_test_error},
            "base_seed": self.base_seed,
            "seeds": [fold.seed for fold in self.folds],
        }


@dataclass
class MapStats:
    """Structure statistics of a map snapshot."""

    num_winner_nodes: int
    class_purity: float
    min_interclass_margin: float


@dataclass
class MapSnapshot:
    """Per-node, per-class winner frequencies of one layer over a dataset pass."""

    layer_index: int
    grid_rows: int
    grid_cols: int
    hits: Dict[Tuple[GridCoord, int], int]
    instance_assignments: Optional[List[GridCoord]] = None

    @property
    def total_hits(self) -> int:
        return sum(self.hits.values())

    def node_counts(self) -> Dict[GridCoord, Dict[int, int]]:
        """Group hits by node, nodes and classes in ascending order."""
        grouped: Dict[GridCoord, Dict[int, int]] = {}
        for (coord, class_index), count in sorted(self.hits.items()):
            if count > 0:
                grouped.setdefault(coord, {})[class_index] = count
        return grouped
