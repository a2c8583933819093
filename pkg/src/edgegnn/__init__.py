"""Vertex- and Edge-GNNs for wireless link scheduling, power control and precoding."""

__version__ = "0.1.0"
