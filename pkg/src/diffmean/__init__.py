"""Numerical constructions for averaging over diffeomorphisms of [0, 1]."""
from __future__ import annotations

from .diffeo import SmoothDiffeo, compose, compose_inverse, identity, invert, make_bump
from .grid import GridDiffeo
from .simplex import McmcConfig, SimplexPoint, jn, sample_un
from .wiener import EstimateResult, Path, a_inv, a_map, sample_path

__version__ = "0.1.0"

__all__ = [
    "EstimateResult", "GridDiffeo", "McmcConfig", "Path", "SimplexPoint", "SmoothDiffeo",
    "a_inv", "a_map", "compose", "compose_inverse", "identity", "invert", "jn", "make_bump",
    "sample_path", "sample_un",
]
