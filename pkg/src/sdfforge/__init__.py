"""Neural signed distance field reconstruction toolkit.

Fits an MLP signed distance field plus a surface light field to an
oriented point cloud and calibrated images, extracts triangle meshes by
marching cubes, and evaluates them against reference geometry.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    NonConvergenceError,
    NumericFaultError,
    SdfForgeError,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NonConvergenceError",
    "NumericFaultError",
    "SdfForgeError",
]
