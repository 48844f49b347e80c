"""OpenTelemetry counters for training runs.

- ``epochs_trained_total``: completed training epochs
- ``cv_folds_completed_total``: finished cross-validation folds
- ``errors_total``: command failures by type

Counters exist only when ``ENABLE_OTEL=true``; otherwise every increment is
a no-op.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional

from opentelemetry import metrics
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader
from opentelemetry.exporter.otlp.proto.grpc.metric_exporter import OTLPMetricExporter

from .tracing import otlp_enabled, otlp_endpoint

logger = logging.getLogger(__name__)

EXPORT_INTERVAL_MILLIS = 5000
COUNTERS = {
    "epochs": ("epochs_trained_total", "Total number of completed training epochs"),
    "folds": ("cv_folds_completed_total", "Total number of completed cross-validation folds"),
    "errors": ("errors_total", "Total number of errors by type"),
}

_METRICS_CONFIGURED = False
_counters: Dict[str, metrics.Counter] = {}


def configure_metrics() -> None:
    """Install a meter provider exporting to OTLP and create the counters; idempotent."""
    global _METRICS_CONFIGURED

    if _METRICS_CONFIGURED:
        return
    _METRICS_CONFIGURED = True

    if not otlp_enabled():
        logger.debug("Metrics disabled (ENABLE_OTEL not set to true)")
        return

    try:
        endpoint = otlp_endpoint()
        logger.info(f"Configuring metrics export to OTLP endpoint: {endpoint}")
        reader = PeriodicExportingMetricReader(
            OTLPMetricExporter(endpoint=endpoint, insecure=True),
            export_interval_millis=EXPORT_INTERVAL_MILLIS,
        )
        metrics.set_meter_provider(MeterProvider(metric_readers=[reader]))
        meter = metrics.get_meter("crsom")
        for key, (name, description) in COUNTERS.items():
            _counters[key] = meter.create_counter(name=name, description=description, unit="1")
    except Exception as e:
        logger.warning(f"Failed to configure metrics: {e}")


def _add(key: str, attributes: Dict[str, str]) -> None:
    counter = _counters.get(key)
    if counter is not None:
        counter.add(1, attributes)


def increment_epochs(run_name: str) -> None:
    _add("epochs", {"run_name": run_name})


def increment_folds_completed(run_name: str, fold_index: int) -> None:
    _add("folds", {"run_name": run_name, "fold": str(fold_index)})


def increment_errors(error_type: str, run_name: Optional[str] = None) -> None:
    """
    Increment errors counter.

    Args:
        error_type: Category such as 'config_error', 'dataset_error' or 'training_error'
        run_name: Optional run identifier for attribution
    """
    attributes = {"error_type": error_type}
    if run_name:
        attributes["run_name"] = run_name
    _add("errors", attributes)
