"""Context-relevant topographic map classifier."""
