"""Traveling fronts of delayed non-local monostable equations: spectra, simulation, stability experiments."""

from . import birth_laws, config, evolve, kernels, plotting, spectral, stability_lab, waves
from .grid import Field, Grid

__version__ = "0.1.0"

__all__ = ["birth_laws", "config", "evolve", "kernels", "plotting", "spectral", "stability_lab", "waves", "Field", "Grid", "__version__"]
