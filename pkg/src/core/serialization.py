"""Versioned JSON model files.

Floats are written with ``repr`` precision so a reload restores every
parameter bit for bit. Keys are sorted, so identical networks produce
identical files.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.shared.errors import ConfigurationError, ModelFormatError
from src.shared.io import atomic_write_text
from .models import NetworkConfig, NormalizationParams
from .topology import Network, OutputLayer, TopographicLayer

logger = logging.getLogger(__name__)

MODEL_SCHEMA = "crsom-model/1"


@dataclass
class SavedModel:
    """A network together with the preprocessing it was trained under."""

    network: Network
    normalizer: Optional[NormalizationParams] = None
    feature_scale: float = 1.0


def model_to_dict(
    net: Network, normalizer: Optional[NormalizationParams] = None, feature_scale: float = 1.0
) -> Dict[str, Any]:
    return {
        "schema": MODEL_SCHEMA,
        "config": net.config.to_dict(),
        "seed": net.config.rng_seed,
        "hidden_layers": [
            {
                "rows": layer.grid_rows,
                "cols": layer.grid_cols,
                "reference_vectors": layer.reference_vectors.tolist(),
            }
            for layer in net.hidden_layers
        ],
        "output_layer": {
            "weights": net.output_layer.weights.tolist(),
            "biases": net.output_layer.biases.tolist(),
        },
        "preprocessing": {
            "normalizer": normalizer.to_dict() if normalizer is not None else None,
            "feature_scale": feature_scale,
        },
    }


def model_from_dict(data: Dict[str, Any]) -> SavedModel:
    if not isinstance(data, dict) or data.get("schema") != MODEL_SCHEMA:
        raise ModelFormatError(f"Not a {MODEL_SCHEMA} document")
    try:
        config = NetworkConfig.from_dict(data["config"])
        layers = [
            TopographicLayer(
                int(entry["rows"]),
                int(entry["cols"]),
                np.asarray(entry["reference_vectors"], dtype=np.float64),
            )
            for entry in data["hidden_layers"]
        ]
        output_layer = OutputLayer(
            weights=np.asarray(data["output_layer"]["weights"], dtype=np.float64),
            biases=np.asarray(data["output_layer"]["biases"], dtype=np.float64),
        )
        network = Network(hidden_layers=layers, output_layer=output_layer, config=config)
        preprocessing = data.get("preprocessing") or {}
        normalizer = preprocessing.get("normalizer")
        return SavedModel(
            network=network,
            normalizer=NormalizationParams.from_dict(normalizer) if normalizer else None,
            feature_scale=float(preprocessing.get("feature_scale", 1.0)),
        )
    except ConfigurationError as e:
        raise ModelFormatError(f"Model config is invalid: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Malformed model document: {e}") from e


def save_model(
    net: Network,
    path: Union[str, Path],
    normalizer: Optional[NormalizationParams] = None,
    feature_scale: float = 1.0,
) -> Path:
    """Atomically write the model file and return its path."""
    text = json.dumps(model_to_dict(net, normalizer, feature_scale), sort_keys=True) + "\n"
    target = atomic_write_text(path, text)
    logger.info(f"Model written to {target}")
    return target


def load_model(path: Union[str, Path]) -> SavedModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: invalid JSON ({e})") from e
    return model_from_dict(data)
