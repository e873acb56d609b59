"""Riesz gas particle systems in one dimension: energies, minimisers and convergence rates."""

from .configuration import Configuration, PiecewiseConstantDensity, density_from_configuration, gaps
from .continuum import CaseId, EquilibriumCase
from .potentials import ConfiningPotential, InteractionPotential, RenormalizedPotential, riesz

__all__ = [
    "CaseId",
    "ConfiningPotential",
    "Configuration",
    "EquilibriumCase",
    "InteractionPotential",
    "PiecewiseConstantDensity",
    "RenormalizedPotential",
    "density_from_configuration",
    "gaps",
    "riesz",
]

__version__ = "0.1.0"
