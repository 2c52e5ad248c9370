"""Equilibria of the 1D logistic diffusion model with bang-bang resources.

Modules: ``model`` (resources, parameters, grids), ``equilibrium`` (Newton,
time marching, shooting), ``phaseplane`` (first integrals and the
resource-improving surgery), ``blocks`` (advantage function and the
small-resource optimizer), ``series`` (large-diffusion expansion), ``cli``.
"""
from .model import BangBangResource, ConstantResource, Domain, Params, PiecewiseConstantResource
from .equilibrium import march, polish, solve, total_population

__all__ = ["BangBangResource", "ConstantResource", "Domain", "Params", "PiecewiseConstantResource",
           "march", "polish", "solve", "total_population"]
