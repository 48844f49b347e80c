"""Tracing setup and the OTLP settings shared with metrics.

Spans are opened around workflow stages (data loading, training,
cross-validation, map export). With ``ENABLE_OTEL=true`` they are exported
over OTLP/gRPC; otherwise the SDK provider is still installed so trace ids
show up in log records.
"""

from __future__ import annotations

import os

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor

DEFAULT_OTLP_ENDPOINT = "http://localhost:4317"

_TRACING_CONFIGURED = False


def otlp_enabled() -> bool:
    return os.getenv("ENABLE_OTEL", "").lower() == "true"


def otlp_endpoint() -> str:
    """OTLP/gRPC endpoint from the environment, always with a URL scheme."""
    endpoint = os.getenv("OTLP_ENDPOINT") or os.getenv(
        "OTEL_EXPORTER_OTLP_ENDPOINT", DEFAULT_OTLP_ENDPOINT
    )
    endpoint = endpoint.rstrip("/")
    if not endpoint.startswith(("http://", "https://")):
        endpoint = f"http://{endpoint}"
    return endpoint


def configure_tracing(service_name: str) -> None:
    """Install an SDK tracer provider, exporting over OTLP when enabled."""
    global _TRACING_CONFIGURED
    if _TRACING_CONFIGURED:
        return

    if not os.getenv("OTEL_SERVICE_NAME"):
        os.environ["OTEL_SERVICE_NAME"] = service_name
    provider = TracerProvider(
        resource=Resource.create({"service.name": os.environ["OTEL_SERVICE_NAME"]})
    )

    if otlp_enabled():
        from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter

        provider.add_span_processor(
            BatchSpanProcessor(OTLPSpanExporter(endpoint=otlp_endpoint(), insecure=True))
        )

    trace.set_tracer_provider(provider)
    _TRACING_CONFIGURED = True


def get_tracer(instrumenting_module_name: str) -> trace.Tracer:
    """Return a tracer from the globally configured provider."""
    return trace.get_tracer(instrumenting_module_name)
