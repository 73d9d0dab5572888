"""Data-driven Koopman and Perron-Frobenius operators for uncertainty propagation.

Operators are fitted by extended dynamic mode decomposition (EDMD) with the
convention ``Psi(y) ~= K^T Psi(x)``; moments of a density then evolve as
``m <- K^T m`` and density coefficients as ``w <- P w``.
"""
from .config import ExperimentConfig, load_config
from .dictionary import (Dictionary, GramMatrix, gram_matrix, monomial_dictionary,
                         rbf1d_dictionary)
from .dynamics import (DynamicalSystem, SnapshotPairs, build_snapshot_pairs, builtin,
                       flow_map, rk4_step)
from .errors import KoopmanUQError
from .operator import OperatorModel, edmd_fit, pf_from_koopman
from .uncertainty import (DensityField, MomentVector, estimate_support, initial_moments,
                          moments_to_coefficients, propagate_moments, reconstruct_density)

__all__ = [
    "Dictionary", "DensityField", "DynamicalSystem", "ExperimentConfig", "GramMatrix",
    "KoopmanUQError", "MomentVector", "OperatorModel", "SnapshotPairs", "build_snapshot_pairs",
    "builtin", "edmd_fit", "estimate_support", "flow_map", "gram_matrix", "initial_moments",
    "load_config", "moments_to_coefficients", "monomial_dictionary", "pf_from_koopman",
    "propagate_moments", "rbf1d_dictionary", "reconstruct_density", "rk4_step",
]
__version__ = "0.1.0"
