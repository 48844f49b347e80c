"""Shared utilities: errors, logging, tracing, metrics and file output."""
