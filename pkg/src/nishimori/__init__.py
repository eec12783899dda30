"""Disordered lattice spin models on the Nishimori line."""

__version__ = "0.1.0"
