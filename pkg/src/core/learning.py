"""Update rules and the epoch-based training loop.

Error flows top-down: the output deltas set a signed context signal for the
top map, and every map hands its (un-scaled) reference-vector change to the
map below. A positive signal pulls a node toward its input like a Kohonen
step, a negative one pushes it away.

All updates of one presentation use the quantities of a single forward
pass; nothing is re-evaluated between layers.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.shared.errors import DatasetError, ShapeMismatchError, TrainingError
from src.shared.metrics import increment_epochs
from .models import DeltaSignals, LabeledDataset, LayerActivation, NetworkConfig, TrainRecord
from .topology import (
    Network,
    OutputLayer,
    TopographicLayer,
    network_forward,
    training_widths,
)

logger = logging.getLogger(__name__)

# Sign applied at every downward propagation step. Confirmed against the
# frozen-topology finite-difference oracle for up to three hidden layers.
PROPAGATION_SIGN = -1.0

EpochCallback = Callable[[TrainRecord, Network], None]


def _same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shapes {a.shape} and {b.shape} differ")


def loss(y: np.ndarray, target: np.ndarray) -> float:
    """Quadratic error 1/2 * sum_l (y_l - T_l)^2."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _same_length(y, target, "loss")
    return float(0.5 * np.sum((y - target) ** 2))


def output_deltas(y: np.ndarray, target: np.ndarray) -> np.ndarray:
    """delta_l = (y_l - T_l) * y_l * (1 - y_l)."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _same_length(y, target, "output_deltas")
    return (y - target) * y * (1.0 - y)


def update_output_layer(
    output_layer: OutputLayer,
    hidden_out: np.ndarray,
    deltas: np.ndarray,
    eta_out: float,
) -> OutputLayer:
    """Gradient step on v and theta (theta enters I_l with a minus sign)."""
    if hidden_out.shape != (output_layer.weights.shape[0],) or deltas.shape != (
        output_layer.num_classes,
    ):
        raise ShapeMismatchError(
            f"Output update got hidden {hidden_out.shape} and deltas {deltas.shape} "
            f"for weights {output_layer.weights.shape}"
        )
    output_layer.weights -= eta_out * np.outer(hidden_out, deltas)
    output_layer.biases += eta_out * deltas
    return output_layer


def top_hidden_delta(
    output_layer: OutputLayer, deltas: np.ndarray, pre_activations: np.ndarray
) -> np.ndarray:
    """delta^N_k = -(sum_l delta_l v_kl) * exp(-I^N_k)."""
    if pre_activations.shape != (output_layer.weights.shape[0],) or deltas.shape != (
        output_layer.num_classes,
    ):
        raise ShapeMismatchError("Top hidden delta: shapes do not match the output layer")
    return -(output_layer.weights @ deltas) * np.exp(-pre_activations)


def hidden_weight_change(
    layer: TopographicLayer,
    delta: np.ndarray,
    activation: LayerActivation,
    layer_input: np.ndarray,
    s: float,
) -> np.ndarray:
    """Un-scaled Delta W_k = delta_k * sigma(k*, k, s) * (input - W_k), shape (nodes, input_dim)."""
    if delta.shape != (layer.num_nodes,) or layer_input.shape != (layer.input_dim,):
        raise ShapeMismatchError(
            f"Hidden update got delta {delta.shape} and input {layer_input.shape} "
            f"for a layer of {layer.num_nodes} nodes x {layer.input_dim} inputs"
        )
    sigma = layer.neighborhood(activation.bmu_index, s)
    return (delta * sigma)[:, np.newaxis] * (layer_input - layer.reference_vectors)


def update_hidden_layer(
    layer: TopographicLayer,
    delta: np.ndarray,
    activation: LayerActivation,
    layer_input: np.ndarray,
    s: float,
    eta_hid: float,
) -> np.ndarray:
    """Apply W <- W + eta_hid * Delta W and return the un-scaled Delta W."""
    change = hidden_weight_change(layer, delta, activation, layer_input, s)
    layer.reference_vectors += eta_hid * change
    return change


def propagate_delta(
    changes_above: np.ndarray,
    pre_activations: np.ndarray,
    sign: float = PROPAGATION_SIGN,
) -> np.ndarray:
    """delta^M_b = sign * (sum_a Delta W^{M+1}_ab) * exp(-I^M_b).

    ``changes_above`` has one row per node of layer M+1 and one column per
    node of layer M.
    """
    if changes_above.ndim != 2 or changes_above.shape[1] != pre_activations.shape[0]:
        raise ShapeMismatchError(
            f"Delta W of shape {changes_above.shape} cannot feed a layer of "
            f"{pre_activations.shape[0]} nodes"
        )
    return sign * changes_above.sum(axis=0) * np.exp(-pre_activations)


def propagation_sign(step: int, alternating: bool = False) -> float:
    """Sign for the ``step``-th propagation below the top map (step 1 is N -> N-1)."""
    if alternating:
        return PROPAGATION_SIGN * (-1.0) ** (step - 1)
    return PROPAGATION_SIGN


def _layer_inputs(x: np.ndarray, activations: List[LayerActivation]) -> List[np.ndarray]:
    return [x] + [activation.outputs for activation in activations[:-1]]


def backpropagate(
    net: Network,
    x: np.ndarray,
    activations: List[LayerActivation],
    y: np.ndarray,
    target: np.ndarray,
    alternating_sign: bool = False,
) -> DeltaSignals:
    """All error signals of one presentation, computed without touching the network."""
    deltas = output_deltas(y, target)
    inputs = _layer_inputs(np.asarray(x, dtype=np.float64), activations)
    count = net.num_hidden_layers
    hidden_deltas: List[np.ndarray] = [np.empty(0)] * count
    changes: List[np.ndarray] = [np.empty((0, 0))] * count

    delta = top_hidden_delta(net.output_layer, deltas, activations[-1].pre_activations)
    for m in reversed(range(count)):
        hidden_deltas[m] = delta
        changes[m] = hidden_weight_change(
            net.hidden_layers[m], delta, activations[m], inputs[m], activations[m].width
        )
        if m > 0:
            sign = propagation_sign(count - m, alternating_sign)
            delta = propagate_delta(changes[m], activations[m - 1].pre_activations, sign)
    return DeltaSignals(output_deltas=deltas, hidden_deltas=hidden_deltas, weight_changes=changes)


def train_sample(
    net: Network,
    x: np.ndarray,
    target: np.ndarray,
    epoch: int,
    update_hidden: bool = True,
) -> Tuple[float, DeltaSignals]:
    """One presentation: forward pass, then output layer, then maps N down to 1.

    With ``update_hidden=False`` only the output layer learns and the hidden
    entries of the returned signals are zero.
    """
    config = net.config
    if not 0 <= epoch < config.t_end:
        raise ValueError(f"Epoch {epoch} outside [0, {config.t_end})")
    widths = training_widths(epoch, config)
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    activations, y = network_forward(net, x, widths)
    error = loss(y, target)
    deltas = output_deltas(y, target)
    top = activations[-1]

    # Captured before the output layer moves.
    delta = top_hidden_delta(net.output_layer, deltas, top.pre_activations)
    update_output_layer(net.output_layer, top.outputs, deltas, config.eta_out)

    count = net.num_hidden_layers
    if not update_hidden:
        return error, DeltaSignals(
            deltas,
            [np.zeros(layer.num_nodes) for layer in net.hidden_layers],
            [np.zeros_like(layer.reference_vectors) for layer in net.hidden_layers],
        )

    inputs = _layer_inputs(x, activations)
    hidden_deltas: List[np.ndarray] = [np.empty(0)] * count
    changes: List[np.ndarray] = [np.empty((0, 0))] * count
    for m in reversed(range(count)):
        hidden_deltas[m] = delta
        changes[m] = update_hidden_layer(
            net.hidden_layers[m], delta, activations[m], inputs[m], widths[m], config.eta_hid
        )
        if m > 0:
            delta = propagate_delta(
                changes[m], activations[m - 1].pre_activations, PROPAGATION_SIGN
            )
    return error, DeltaSignals(deltas, hidden_deltas, changes)


def check_dataset(dataset: LabeledDataset, config: NetworkConfig) -> None:
    """Raise if ``dataset`` is empty or does not fit the network dimensions."""
    if dataset.num_instances == 0:
        raise DatasetError("Cannot train on an empty dataset")
    if dataset.num_features != config.input_dim:
        raise ShapeMismatchError(
            f"Dataset has {dataset.num_features} features, network expects {config.input_dim}"
        )
    if dataset.num_classes != config.num_classes:
        raise ShapeMismatchError(
            f"Dataset has {dataset.num_classes} classes, network expects {config.num_classes}"
        )


def fit(
    net: Network,
    dataset: LabeledDataset,
    config: Optional[NetworkConfig] = None,
    on_epoch_end: Optional[EpochCallback] = None,
    update_hidden: bool = True,
    run_name: str = "fit",
) -> List[TrainRecord]:
    """Train for t_end epochs with a seeded shuffle per epoch; returns the learning curve."""
    config = config or net.config
    if config is not net.config:
        if (config.layer_grids, config.input_dim, config.num_classes) != (
            net.config.layer_grids,
            net.config.input_dim,
            net.config.num_classes,
        ):
            raise ShapeMismatchError("Training config describes a different architecture")
        net.config = config
    check_dataset(dataset, config)

    rng = np.random.default_rng([config.rng_seed, 1])
    report_every = max(1, config.t_end // 10)
    records: List[TrainRecord] = []

    for epoch in range(config.t_end):
        order = rng.permutation(dataset.num_instances)
        errors = np.empty(dataset.num_instances)
        for position, index in enumerate(order):
            errors[position], _ = train_sample(
                net,
                dataset.features[index],
                dataset.targets[index],
                epoch,
                update_hidden=update_hidden,
            )

        if not net.parameters_finite():
            raise TrainingError(f"Non-finite parameters after epoch {epoch}")

        record = TrainRecord(
            epoch=epoch,
            mean_error=float(errors.mean()),
            width_per_layer=training_widths(epoch, config),
        )
        records.append(record)
        increment_epochs(run_name)

        logger.debug(f"[{run_name}] epoch {epoch}: mean error {record.mean_error:.6f}")
        if (epoch + 1) % report_every == 0 or epoch + 1 == config.t_end:
            logger.info(
                f"[{run_name}] epoch {epoch + 1}/{config.t_end}: "
                f"mean error {record.mean_error:.6f}, width {record.width_per_layer[0]:.4f}"
            )
        if on_epoch_end is not None:
            on_epoch_end(record, net)

    return records
