"""Particle-level Monte Carlo simulator of a diffusion-based molecular communication link."""

__version__ = "0.1.0"
