"""Dimension expansion for nonstationary spatial fields.

Learn sparse latent coordinates ``Z`` so that a stationary exponential
variogram fits the sites at ``[X, Z]``, map ``Z`` back to the plane with
thin-plate splines, and krige / cross-validate in the expanded space.
"""

from .geo import ExpandedLocations, Locations, expand, pairwise_distances
from .variogram import (
    VariogramParams,
    bin_dispersions,
    empirical_dispersion,
    evaluate_variogram,
    fit_variogram,
    variogram_d_dh,
)
from .expansion import (
    ExpansionConfig,
    ExpansionSolution,
    fit_quality,
    group_project,
    learn_expansion,
    misfit_gradient_Z,
    objective,
    sweep_lambda1,
)
from .tps import bending_energy, evaluate_tps, fit_tps, map_latent
from .prediction import cross_validate, krige, predict_new_sites
from .warp import detect_folding, warp_mds

__version__ = "0.1.0"
