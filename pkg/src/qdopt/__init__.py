"""Optimal quantum detection for Gaussian boson channels in a truncated Fock space."""

from .bayes import (
    HypothesisEnsemble,
    coherent_ml_certificate,
    helstrom_binary,
    optimality_check,
    optimize_min_error,
)
from .fock import (
    TruncationError,
    TruncationWarning,
    coherent_state,
    displacement,
    ladder_operators,
    normal_ordered_gaussian,
    psd_check,
)
from .gaussian import ChannelParams, derive_channel_matrices, displaced_thermal_state
from .measurement import DiscretePOVM, heterodyne_grid_povm, identity_resolution_report
from .shannon import (
    gaussian_heterodyne_info,
    local_optimality_certificate,
    mutual_information,
    occupation_inequality_check,
    variation_operators,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "DiscretePOVM",
    "HypothesisEnsemble",
    "TruncationError",
    "TruncationWarning",
    "coherent_ml_certificate",
    "coherent_state",
    "derive_channel_matrices",
    "displaced_thermal_state",
    "displacement",
    "gaussian_heterodyne_info",
    "helstrom_binary",
    "heterodyne_grid_povm",
    "identity_resolution_report",
    "ladder_operators",
    "local_optimality_certificate",
    "mutual_information",
    "normal_ordered_gaussian",
    "occupation_inequality_check",
    "optimality_check",
    "optimize_min_error",
    "psd_check",
    "variation_operators",
]
