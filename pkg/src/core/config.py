"""Environment and run configuration for training runs."""

import json
import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import load_dotenv

from src.shared.errors import ConfigurationError
from .models import NetworkConfig

logger = logging.getLogger(__name__)

DEFAULT_DATA_DIR = "data"
DEFAULT_OUTPUT_DIR = "runs"
DEFAULT_LOG_LEVEL = "INFO"
DATASET_SOURCES = ("csv", "idx", "animals", "iris")

_GRID_PATTERN = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


def load_environment() -> None:
    """Load environment variables from .env if present."""
    load_dotenv()


def get_data_dir() -> Path:
    """Base directory for relative dataset paths."""
    return Path(os.getenv("CRSOM_DATA_DIR", DEFAULT_DATA_DIR))


def get_output_dir() -> Path:
    """Root under which runs without an explicit output directory are written."""
    return Path(os.getenv("CRSOM_OUTPUT_DIR", DEFAULT_OUTPUT_DIR))


def get_log_level() -> str:
    return os.getenv("CRSOM_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()


def parse_grid(text: str) -> List[Tuple[int, int]]:
    """Parse ``RxC[,RxC...]`` into a list of (rows, cols)."""
    grids = []
    for part in text.split(","):
        match = _GRID_PATTERN.match(part)
        if not match:
            raise ConfigurationError(f"Invalid grid '{part.strip()}', expected RxC such as 10x10")
        grids.append((int(match.group(1)), int(match.group(2))))
    return grids


def _resolve(path: Union[str, Path], base: Path) -> Path:
    candidate = Path(path).expanduser()
    return candidate if candidate.is_absolute() else base / candidate


@dataclass
class DatasetSource:
    """Where the data of a run comes from; exactly one kind per run."""

    kind: str
    path: Optional[Path] = None
    label_column: Union[str, int] = -1
    has_header: bool = True
    delimiter: str = ","
    images: Optional[Path] = None
    labels: Optional[Path] = None
    classes: List[int] = field(default_factory=list)
    max_per_class: Optional[Union[int, Dict[int, int]]] = None
    total: Optional[int] = None
    context: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], data_dir: Optional[Path] = None) -> "DatasetSource":
        if not isinstance(data, Mapping):
            raise ConfigurationError("'dataset' must be an object")
        kind = data.get("source")
        if kind not in DATASET_SOURCES:
            raise ConfigurationError(
                f"Unknown dataset source {kind!r}; expected one of {list(DATASET_SOURCES)}"
            )
        present = [key for key in ("path", "images", "context") if key in data]
        expected = {"csv": "path", "idx": "images", "animals": "context", "iris": None}[kind]
        if [key for key in present if key != expected]:
            raise ConfigurationError(
                f"Dataset source '{kind}' does not take {present}; give exactly one source"
            )
        base = data_dir if data_dir is not None else get_data_dir()

        if kind == "csv":
            if "path" not in data:
                raise ConfigurationError("CSV dataset needs 'path'")
            return cls(
                kind=kind,
                path=_resolve(data["path"], base),
                label_column=data.get("label_column", -1),
                has_header=bool(data.get("has_header", True)),
                delimiter=str(data.get("delimiter", ",")),
            )
        if kind == "idx":
            if "images" not in data or "labels" not in data:
                raise ConfigurationError("IDX dataset needs 'images' and 'labels'")
            caps = data.get("max_per_class")
            if isinstance(caps, Mapping):
                caps = {int(digit): int(cap) for digit, cap in caps.items()}
            elif caps is not None:
                caps = int(caps)
            if caps is not None and "total" in data:
                raise ConfigurationError("Give either 'max_per_class' or 'total', not both")
            return cls(
                kind=kind,
                images=_resolve(data["images"], base),
                labels=_resolve(data["labels"], base),
                classes=[int(c) for c in data.get("classes", range(10))],
                max_per_class=caps,
                total=int(data["total"]) if "total" in data else None,
            )
        if kind == "animals":
            return cls(kind=kind, context=str(data.get("context", "carnivore")))
        return cls(kind=kind)

    def describe(self) -> str:
        if self.kind == "csv":
            return f"csv:{self.path}"
        if self.kind == "idx":
            return f"idx:{self.images}"
        if self.kind == "animals":
            return f"animals:{self.context}"
        return self.kind


@dataclass
class NetworkSettings:
    """Network hyperparameters; input and class counts come from the dataset."""

    layer_grids: List[Tuple[int, int]] = field(default_factory=lambda: [(10, 10)])
    s0: Optional[float] = None
    s_end: float = 0.25
    t_end: int = 300
    eta_out: float = 0.1
    eta_hid: float = 0.05
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NetworkSettings":
        defaults = cls()
        try:
            return cls(
                layer_grids=[
                    (int(r), int(c)) for r, c in data.get("layer_grids", defaults.layer_grids)
                ],
                s0=None if data.get("s0") is None else float(data["s0"]),
                s_end=float(data.get("s_end", defaults.s_end)),
                t_end=int(data.get("t_end", defaults.t_end)),
                eta_out=float(data.get("eta_out", defaults.eta_out)),
                eta_hid=float(data.get("eta_hid", defaults.eta_hid)),
                rng_seed=int(data.get("rng_seed", defaults.rng_seed)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid network settings: {e}") from e

    def build(self, input_dim: int, num_classes: int) -> NetworkConfig:
        return NetworkConfig(
            layer_grids=list(self.layer_grids),
            input_dim=input_dim,
            num_classes=num_classes,
            s0=self.s0,
            s_end=self.s_end,
            t_end=self.t_end,
            eta_out=self.eta_out,
            eta_hid=self.eta_hid,
            rng_seed=self.rng_seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer_grids": [list(grid) for grid in self.layer_grids],
            "s0": self.s0,
            "s_end": self.s_end,
            "t_end": self.t_end,
            "eta_out": self.eta_out,
            "eta_hid": self.eta_hid,
            "rng_seed": self.rng_seed,
        }


@dataclass
class RunConfig:
    """One experiment: data source, preprocessing, network and outputs."""

    name: str
    dataset: DatasetSource
    network: NetworkSettings = field(default_factory=NetworkSettings)
    normalize: bool = True
    feature_scale: float = 1.0
    output_dir: Optional[Path] = None
    checkpoints: List[int] = field(default_factory=list)
    k: int = 10
    workers: int = 1
    trials: int = 1

    def __post_init__(self) -> None:
        if self.feature_scale <= 0:
            raise ConfigurationError(f"feature_scale must be positive, got {self.feature_scale}")
        if self.k < 2:
            raise ConfigurationError(f"Cross-validation needs k >= 2, got {self.k}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        bad = [c for c in self.checkpoints if not 0 <= c < self.network.t_end]
        if bad:
            raise ConfigurationError(
                f"Checkpoint epochs {bad} outside [0, {self.network.t_end})"
            )

    @property
    def resolved_output_dir(self) -> Path:
        return self.output_dir if self.output_dir is not None else get_output_dir() / self.name

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], data_dir: Optional[Path] = None) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigurationError("Run config must be a JSON object")
        if "dataset" not in data:
            raise ConfigurationError("Run config needs a 'dataset' section")
        crossval = data.get("crossval") or {}
        try:
            return cls(
                name=str(data.get("name", "run")),
                dataset=DatasetSource.from_dict(data["dataset"], data_dir),
                network=NetworkSettings.from_dict(data.get("network") or {}),
                normalize=bool(data.get("normalize", True)),
                feature_scale=float(data.get("feature_scale", 1.0)),
                output_dir=Path(data["output_dir"]) if data.get("output_dir") else None,
                checkpoints=sorted(int(c) for c in data.get("checkpoints", [])),
                k=int(crossval.get("k", 10)),
                workers=int(crossval.get("workers", 1)),
                trials=int(data.get("trials", 1)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid run config: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        """Echo of the effective configuration for result files."""
        return {
            "name": self.name,
            "dataset": self.dataset.describe(),
            "network": self.network.to_dict(),
            "normalize": self.normalize,
            "feature_scale": self.feature_scale,
            "checkpoints": list(self.checkpoints),
            "crossval": {"k": self.k},
            "trials": self.trials,
        }

    def with_overrides(
        self,
        seed: Optional[int] = None,
        epochs: Optional[int] = None,
        grids: Optional[List[Tuple[int, int]]] = None,
        normalize: Optional[bool] = None,
        k: Optional[int] = None,
        out_dir: Optional[Union[str, Path]] = None,
        trials: Optional[int] = None,
    ) -> "RunConfig":
        """Copy with command-line values taking precedence over the file."""
        network = self.network
        if seed is not None:
            network = replace(network, rng_seed=seed)
        if epochs is not None:
            network = replace(network, t_end=epochs)
        if grids is not None:
            network = replace(network, layer_grids=list(grids))
        checkpoints = [c for c in self.checkpoints if c < network.t_end]
        return replace(
            self,
            network=network,
            normalize=self.normalize if normalize is None else normalize,
            k=self.k if k is None else k,
            output_dir=Path(out_dir) if out_dir is not None else self.output_dir,
            checkpoints=checkpoints,
            trials=self.trials if trials is None else trials,
        )


def load_run_config(path: Union[str, Path], data_dir: Optional[Path] = None) -> RunConfig:
    """Read a run config JSON file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    config = RunConfig.from_dict(data, data_dir)
    logger.debug(f"Loaded run config '{config.name}' from {path}")
    return config
