"""Discrete-time simulation of a quantum robot on a cyclic 1-D lattice."""

__version__ = "0.1.0"
