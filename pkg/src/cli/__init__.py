"""Command-line interface for training and inspecting topographic classifiers."""
