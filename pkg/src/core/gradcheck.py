"""Finite-difference oracle for the hand-derived update rules.

The topology is frozen: every layer keeps the BMU and neighborhood weights
of the unperturbed forward pass, so the loss becomes a smooth function of
the parameters. Central differences of that loss are compared with the
gradients implied by the update rules (v, theta and every reference vector).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.shared.errors import GradientCheckError
from .learning import backpropagate, loss
from .topology import Network, network_forward, output_forward, training_widths

logger = logging.getLogger(__name__)

RELATIVE_ERROR_FLOOR = 1e-4


@dataclass
class GradientCheckResult:
    """Worst disagreement between analytic and numeric gradients."""

    max_relative_error: float
    worst_parameter: str
    num_checked: int
    num_excluded: int


def relative_error(analytic: float, numeric: float, floor: float = RELATIVE_ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def _frozen_loss(
    net: Network,
    x: np.ndarray,
    target: np.ndarray,
    frozen_sigma: Sequence[np.ndarray],
) -> Tuple[float, List[int]]:
    """Loss under fixed neighborhoods, plus the BMUs the perturbed network would pick."""
    signal = x
    natural_bmus: List[int] = []
    for layer, sigma in zip(net.hidden_layers, frozen_sigma):
        pre = 0.5 * np.sum((layer.reference_vectors - signal) ** 2, axis=1)
        natural_bmus.append(int(np.argmin(pre)))
        signal = np.exp(-pre) * sigma
    _, y = output_forward(net.output_layer, signal)
    return loss(y, target), natural_bmus


def analytic_gradients(
    net: Network,
    x: np.ndarray,
    target: np.ndarray,
    widths: Sequence[float],
    alternating_sign: bool = False,
) -> Dict[str, np.ndarray]:
    """dE/dparameter for every parameter array, keyed like ``W1``, ``W2``, ``v``, ``theta``."""
    activations, y = network_forward(net, x, widths)
    signals = backpropagate(net, x, activations, y, target, alternating_sign=alternating_sign)
    grads = {
        "v": np.outer(activations[-1].outputs, signals.output_deltas),
        "theta": -signals.output_deltas,
    }
    for index, change in enumerate(signals.weight_changes, start=1):
        # Delta W is the descent direction.
        grads[f"W{index}"] = -change
    return grads


def _parameter_arrays(net: Network, include_hidden: bool) -> Dict[str, np.ndarray]:
    arrays = {"v": net.output_layer.weights, "theta": net.output_layer.biases}
    if include_hidden:
        for index, layer in enumerate(net.hidden_layers, start=1):
            arrays[f"W{index}"] = layer.reference_vectors
    return arrays


def gradient_check_frozen(
    net: Network,
    x: np.ndarray,
    target: np.ndarray,
    epsilon: float = 1e-5,
    widths: Optional[Sequence[float]] = None,
    include_hidden: bool = True,
    alternating_sign: bool = False,
    max_excluded_fraction: float = 0.1,
) -> GradientCheckResult:
    """Compare analytic gradients with central differences under a frozen topology.

    Parameters whose perturbation changes any layer's BMU are skipped and
    counted. ``include_hidden=False`` checks the output layer only. The
    network passed in is left untouched.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    widths = list(widths) if widths is not None else training_widths(0, net.config)

    perturbed = net.copy()
    activations, _ = network_forward(perturbed, x, widths)
    frozen_sigma = [activation.neighborhood for activation in activations]
    frozen_bmus = [activation.bmu_index for activation in activations]
    grads = analytic_gradients(perturbed, x, target, widths, alternating_sign=alternating_sign)

    worst = 0.0
    worst_name = ""
    checked = 0
    excluded = 0
    for name, array in _parameter_arrays(perturbed, include_hidden).items():
        flat = array.reshape(-1)
        analytic = grads[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            loss_plus, bmus_plus = _frozen_loss(perturbed, x, target, frozen_sigma)
            flat[i] = original - epsilon
            loss_minus, bmus_minus = _frozen_loss(perturbed, x, target, frozen_sigma)
            flat[i] = original

            if bmus_plus != frozen_bmus or bmus_minus != frozen_bmus:
                excluded += 1
                logger.debug(f"Excluded {name}[{i}]: perturbation flips a BMU")
                continue

            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            error = relative_error(float(analytic[i]), numeric)
            checked += 1
            if error > worst:
                worst = error
                worst_name = f"{name}[{i}]"

    total = checked + excluded
    if total and excluded / total > max_excluded_fraction:
        raise GradientCheckError(
            f"{excluded} of {total} parameters flip a BMU when perturbed; instance is degenerate"
        )
    return GradientCheckResult(
        max_relative_error=worst,
        worst_parameter=worst_name,
        num_checked=checked,
        num_excluded=excluded,
    )
