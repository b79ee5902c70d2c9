"""Skeleton-based pedestrian gesture analysis: features, forest, t-SNE."""

__version__ = "0.1.0"
