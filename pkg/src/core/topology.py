"""Topographic layers and the deterministic forward pass of the M-rRBF.

Every hidden layer is a rectangular grid of nodes, each node carrying a
reference vector. A node responds with a Gaussian of its distance to the
layer input, gated by a Gaussian neighborhood around the layer's best
matching unit (BMU). The last hidden layer feeds a sigmoid output layer.

Flat node indices are row-major. The forward functions never mutate their
arguments.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.shared.errors import ShapeMismatchError
from .models import GridCoord, LayerActivation, NetworkConfig

logger = logging.getLogger(__name__)


def _check_width(s: float) -> None:
    if not math.isfinite(s) or s <= 0.0:
        raise ValueError(f"Neighborhood width must be a positive finite number, got {s}")


def neighborhood_weight(bmu: GridCoord, k: GridCoord, s: float) -> float:
    """Gaussian neighborhood exp(-d^2 / s) between two grid positions."""
    _check_width(s)
    d2 = (bmu.row - k.row) ** 2 + (bmu.col - k.col) ** 2
    return math.exp(-d2 / s)


def anneal_width(t: int, config: NetworkConfig) -> float:
    """Neighborhood width at epoch ``t``: s0 * (s_end / s0) ** (t / t_end)."""
    if t < 0:
        raise ValueError(f"Epoch must be non-negative, got {t}")
    if t > config.t_end:
        raise ValueError(f"Epoch {t} is past t_end={config.t_end}")
    if t == 0:
        return config.s0
    if t == config.t_end:
        return config.s_end
    return config.s0 * (config.s_end / config.s0) ** (t / config.t_end)


def training_widths(epoch: int, config: NetworkConfig) -> List[float]:
    """Width used by every hidden layer during ``epoch``."""
    return [anneal_width(epoch, config)] * config.num_hidden_layers


def inference_widths(config: NetworkConfig) -> List[float]:
    """Fully annealed widths used after training."""
    return [config.s_end] * config.num_hidden_layers


@dataclass(eq=False)
class TopographicLayer:
    """A 2-D grid of nodes holding reference vectors of shape (nodes, input_dim)."""

    grid_rows: int
    grid_cols: int
    reference_vectors: np.ndarray
    _positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.reference_vectors = np.asarray(self.reference_vectors, dtype=np.float64)
        if self.reference_vectors.ndim != 2:
            raise ShapeMismatchError("Reference vectors must be a (nodes, input_dim) matrix")
        if self.reference_vectors.shape[0] != self.grid_rows * self.grid_cols:
            raise ShapeMismatchError(
                f"Grid {self.grid_rows}x{self.grid_cols} needs {self.grid_rows * self.grid_cols} "
                f"reference vectors, got {self.reference_vectors.shape[0]}"
            )
        rows, cols = np.divmod(np.arange(self.num_nodes), self.grid_cols)
        self._positions = np.stack([rows, cols], axis=1).astype(np.float64)

    @property
    def num_nodes(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def input_dim(self) -> int:
        return self.reference_vectors.shape[1]

    def coord(self, index: int) -> GridCoord:
        return GridCoord.from_flat(index, self.grid_cols)

    def neighborhood(self, bmu_index: int, s: float) -> np.ndarray:
        """sigma(bmu, k, s) for every node k, row-major."""
        _check_width(s)
        d2 = np.sum((self._positions - self._positions[bmu_index]) ** 2, axis=1)
        return np.exp(-d2 / s)

    def copy(self) -> "TopographicLayer":
        return TopographicLayer(self.grid_rows, self.grid_cols, self.reference_vectors.copy())


@dataclass(eq=False)
class OutputLayer:
    """Sigmoid perceptron head: weights v of shape (hidden nodes, classes), biases theta."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise ShapeMismatchError(
                f"Output weights {self.weights.shape} and biases {self.biases.shape} disagree"
            )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "OutputLayer":
        return OutputLayer(self.weights.copy(), self.biases.copy())


@dataclass(eq=False)
class Network:
    """Stack of topographic layers (layer 1 first) followed by the output layer."""

    hidden_layers: List[TopographicLayer]
    output_layer: OutputLayer
    config: NetworkConfig

    def __post_init__(self) -> None:
        if len(self.hidden_layers) != self.config.num_hidden_layers:
            raise ShapeMismatchError("Hidden layer count does not match the config")
        expected_dim = self.config.input_dim
        for index, (layer, grid) in enumerate(zip(self.hidden_layers, self.config.layer_grids), 1):
            if (layer.grid_rows, layer.grid_cols) != tuple(grid):
                raise ShapeMismatchError(f"Layer {index} grid does not match the config")
            if layer.input_dim != expected_dim:
                raise ShapeMismatchError(
                    f"Layer {index} expects input_dim {expected_dim}, has {layer.input_dim}"
                )
            expected_dim = layer.num_nodes
        if self.output_layer.weights.shape != (expected_dim, self.config.num_classes):
            raise ShapeMismatchError(
                f"Output weights must be ({expected_dim}, {self.config.num_classes}), "
                f"got {self.output_layer.weights.shape}"
            )

    @property
    def num_hidden_layers(self) -> int:
        return len(self.hidden_layers)

    def copy(self) -> "Network":
        return Network(
            hidden_layers=[layer.copy() for layer in self.hidden_layers],
            output_layer=self.output_layer.copy(),
            config=self.config,
        )

    def parameters_finite(self) -> bool:
        arrays = [layer.reference_vectors for layer in self.hidden_layers]
        arrays += [self.output_layer.weights, self.output_layer.biases]
        return all(np.all(np.isfinite(array)) for array in arrays)


def layer_forward(layer: TopographicLayer, x: np.ndarray, s: float) -> LayerActivation:
    """Gaussian activations of one layer gated by the neighborhood of its BMU."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.input_dim,):
        raise ShapeMismatchError(f"Layer expects input of length {layer.input_dim}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("Layer input contains non-finite values")

    pre = 0.5 * np.sum((layer.reference_vectors - x) ** 2, axis=1)
    bmu_index = int(np.argmin(pre))
    sigma = layer.neighborhood(bmu_index, s)
    outputs = np.exp(-pre) * sigma
    return LayerActivation(
        pre_activations=pre,
        outputs=outputs,
        bmu=layer.coord(bmu_index),
        bmu_index=bmu_index,
        neighborhood=sigma,
        width=float(s),
    )


def sigmoid(values: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -values))


def output_forward(
    output_layer: OutputLayer, hidden_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (I_l, y_l) with I_l = sum_k v_kl O_k - theta_l and y_l = sigmoid(I_l)."""
    hidden_out = np.asarray(hidden_out, dtype=np.float64)
    if hidden_out.shape != (output_layer.weights.shape[0],):
        raise ShapeMismatchError(
            f"Output layer expects {output_layer.weights.shape[0]} hidden outputs, "
            f"got {hidden_out.shape}"
        )
    pre = hidden_out @ output_layer.weights - output_layer.biases
    return pre, sigmoid(pre)


def network_forward(
    net: Network, x: np.ndarray, s_per_layer: Sequence[float]
) -> Tuple[List[LayerActivation], np.ndarray]:
    """Chain all hidden layers, then the output layer; keeps every activation."""
    if len(s_per_layer) != net.num_hidden_layers:
        raise ShapeMismatchError(
            f"Need one width per hidden layer ({net.num_hidden_layers}), got {len(s_per_layer)}"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.config.input_dim,):
        raise ShapeMismatchError(
            f"Network expects input of length {net.config.input_dim}, got {x.shape}"
        )
    activations: List[LayerActivation] = []
    signal = x
    for layer, s in zip(net.hidden_layers, s_per_layer):
        activation = layer_forward(layer, signal, s)
        activations.append(activation)
        signal = activation.outputs
    _, y = output_forward(net.output_layer, signal)
    return activations, y


def predict(net: Network, x: np.ndarray) -> int:
    """Class index with the largest output under inference widths (lowest index on ties)."""
    _, y = network_forward(net, x, inference_widths(net.config))
    return int(np.argmax(y))


def init_network(
    config: NetworkConfig,
    features: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Network:
    """Seeded initialization.

    Layer 1 reference vectors are uniform within the per-feature [min, max]
    of ``features``; deeper layers are uniform in [0, 1];
    output weights uniform in [-0.5, 0.5], biases zero.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ShapeMismatchError("Initialization needs a non-empty 2-D feature matrix")
    if features.shape[1] != config.input_dim:
        raise ShapeMismatchError(
            f"Features have {features.shape[1]} columns, config expects {config.input_dim}"
        )
    if rng is None:
        rng = np.random.default_rng([config.rng_seed, 0])

    low = features.min(axis=0)
    high = features.max(axis=0)
    layers: List[TopographicLayer] = []
    input_dim = config.input_dim
    for index, (rows, cols) in enumerate(config.layer_grids):
        shape = (rows * cols, input_dim)
        if index == 0:
            vectors = rng.uniform(low, high, size=shape)
        else:
            vectors = rng.uniform(0.0, 1.0, size=shape)
        layers.append(TopographicLayer(rows, cols, vectors))
        input_dim = rows * cols

    output_layer = OutputLayer(
        weights=rng.uniform(-0.5, 0.5, size=(input_dim, config.num_classes)),
        biases=np.zeros(config.num_classes),
    )
    logger.debug(
        f"Initialized network with grids {config.layer_grids} and seed {config.rng_seed}"
    )
    return Network(hidden_layers=layers, output_layer=output_layer, config=config)
