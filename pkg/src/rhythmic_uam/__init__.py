"""Rhythmic, signal-free control of an aerial grid intersection."""

__version__ = "0.1.0"

from .config import ConfigError, IntersectionConfig, load_config, reference_config, parse_config  # noqa: E402
from .core import build_intersection, enumerate_paths  # noqa: E402
from .optimizer import Demand, NotConverged, optimize  # noqa: E402

__all__ = ["ConfigError", "Demand", "IntersectionConfig", "NotConverged", "build_intersection",
           "enumerate_paths", "load_config", "optimize", "reference_config", "parse_config"]
