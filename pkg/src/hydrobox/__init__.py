"""hydrobox: desk-scale periodic-box particle simulation engine."""

__version__ = "0.1.0"

from .box import BoxGeometry, minimum_image, wrap_position
from .config import SimConfig, TierConfig, load_config
from .particles import ParticleSet, Species

__all__ = [
    "BoxGeometry", "minimum_image", "wrap_position",
    "SimConfig", "TierConfig", "load_config",
    "ParticleSet", "Species",
    "__version__",
]
