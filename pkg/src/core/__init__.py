"""Network, training, datasets, evaluation and map export."""
