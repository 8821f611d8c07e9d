"""Interacting particles with a Gaussian well: droplet formation, metastable exits and quasi-stationary laws."""
__version__ = "0.1.0"

from .potential import InvalidDeltaError, InvalidPotentialError, PotentialSpec
from .geometry import FreeSystem, ReducedSystem, hessian_at_zero, valley_depth
from .sde import SimParams, SurvivalFit, run_killed_ensemble, simulate_killed
from .spectral import DirichletSpectrum, dirichlet_spectrum, harmonic_levels
from .qsd import FlemingViotQSD, fleming_viot, measure_distances
from .multiscale import MixtureModel, time_window, verify_identity, verify_tv_bound

__all__ = [
    "InvalidDeltaError", "InvalidPotentialError", "PotentialSpec",
    "FreeSystem", "ReducedSystem", "hessian_at_zero", "valley_depth",
    "SimParams", "SurvivalFit", "run_killed_ensemble", "simulate_killed",
    "DirichletSpectrum", "dirichlet_spectrum", "harmonic_levels",
    "FlemingViotQSD", "fleming_viot", "measure_distances",
    "MixtureModel", "time_window", "verify_identity", "verify_tv_bound",
]
