"""Coupled fluxonium chains: spectra, ZZ, driven CNOT gates and their optimization."""

__version__ = "0.1.0"
