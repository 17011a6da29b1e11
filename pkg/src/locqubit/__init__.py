"""Simulation of all-optical gates on location qubits in crystal-phase nanowire quantum dots."""

__version__ = "0.1.0"
