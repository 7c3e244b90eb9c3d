"""Sine-Gordon phase trajectories, a total-correlation VAE and latent-space analysis."""
from .errors import ConfigError, DataError, NumericAbort, ShapeError, SgError, SolverError

__all__ = ["ConfigError", "DataError", "NumericAbort", "ShapeError", "SgError", "SolverError"]
