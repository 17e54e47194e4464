"""Simulation and perturbative analysis of interferometers with vibrating mirrors."""

from .netlang import NetlangError, ParseError, SemanticError, parse_network, serialize, validate
from .propagate import Grid, Modal, TimeBase, simulate

__all__ = [
    "Grid",
    "Modal",
    "NetlangError",
    "ParseError",
    "SemanticError",
    "TimeBase",
    "parse_network",
    "serialize",
    "simulate",
    "validate",
]
__version__ = "0.1.0"
