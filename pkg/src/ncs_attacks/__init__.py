"""Pole-dynamics sensor attacks on networked control loops: simulation and analysis."""
from . import analysis, attacks, config, ncs, numkit, presets
from .errors import NcsError

__all__ = ["analysis", "attacks", "config", "ncs", "numkit", "presets", "NcsError"]
