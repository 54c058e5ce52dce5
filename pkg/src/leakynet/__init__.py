"""Constructive minimal-width leaky-ReLU networks.

Targets on boxes are compiled into explicit networks through a binary coding
scheme (quantize, memorize, decode). Square networks with LU-factored weights
are invertible and serve as normalizing flows; mollified activations give
smooth bijections.
"""

from .coding import CodingParams, CompileReport, InfeasibleBudget, compile
from .lu import NotDecomposable, lu_decompose, nearest_lu, to_lu_network
from .metrics import Box, energy_distance, ks_statistic, lp_norm_gap, modulus_estimate, sup_norm_gap
from .netcore import Layer, Network, deserialize, identity_network, layer, network, serialize
from .plc import PlcFunction, PlcsmFunction, fit_points, monotone_decompose, synthesize_plc, synthesize_plcsm

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CodingParams",
    "CompileReport",
    "InfeasibleBudget",
    "Layer",
    "Network",
    "NotDecomposable",
    "PlcFunction",
    "PlcsmFunction",
    "compile",
    "deserialize",
    "energy_distance",
    "fit_points",
    "identity_network",
    "ks_statistic",
    "layer",
    "lp_norm_gap",
    "lu_decompose",
    "modulus_estimate",
    "monotone_decompose",
    "nearest_lu",
    "network",
    "serialize",
    "sup_norm_gap",
    "synthesize_plc",
    "synthesize_plcsm",
    "to_lu_network",
]
