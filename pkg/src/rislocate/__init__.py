"""Two-stage UE localization through a reconfigurable intelligent surface.

A statistical RIS beam is designed for each candidate subarea, the AP
estimates the direction of arrival with MUSIC on the MMSE-filtered uplink,
the search area shrinks toward the likeliest subareas, and a Zadoff-Chu
correlation finally supplies the range.
"""
from .beamform import PositionPrior, beam_pattern, optimize_ris, sample_prior
from .channel import RisConfiguration, Scenario, build_ap_ris_link, build_ue_channel
from .errors import (AlgorithmError, ConfigError, EstimationError, InvalidInputError,
                     RisLocateError, SolverError)
from .geometry import CartesianPosition, PolarPosition
from .localize import LocalizationConfig, SearchArea, run_localization

__version__ = "0.1.0"

__all__ = ["PositionPrior", "beam_pattern", "optimize_ris", "sample_prior", "RisConfiguration",
           "Scenario", "build_ap_ris_link", "build_ue_channel", "AlgorithmError",
           "ConfigError", "EstimationError", "InvalidInputError", "RisLocateError",
           "SolverError", "CartesianPosition", "PolarPosition", "LocalizationConfig",
           "SearchArea", "run_localization", "__version__"]
