"""Modelling, design and simulation of a three-phase AC-link inverter."""
__version__ = "0.1.0"
