"""Closed-loop generation, simulation and mitigation of network failure scenarios."""
__version__ = "0.1.0"
