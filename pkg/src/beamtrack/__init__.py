"""Two-beam AoD tracking for mmWave links with CRLB-optimal beam-pair selection."""

from beamtrack.array_geometry import (
    ApertureClass,
    ArrayConfig,
    BeamVector,
    Codebook,
    aod_error,
    build_codebook,
    steering_derivative,
    steering_vector,
)
from beamtrack.beam_select import (
    BeamPairChoice,
    LookupTable,
    build_lookup_table,
    lut_to_pair,
    select_pair_exhaustive,
    select_pair_symmetric,
)
from beamtrack.channel import (
    AodPrior,
    Measurement,
    MobilityModel,
    PathState,
    channel_matrix,
    discretize_aod_prior,
    evolve_aod,
    observe,
    sample_gain,
)
from beamtrack.crlb import CrlbInputs, average_crlb, crlb_aod
from beamtrack.estimation import AodEstimate, ml_estimate, projection, search_window
from beamtrack.estimators import BeamPairSelector, MLAodEstimator

__version__ = "0.1.0"

__all__ = [
    "ApertureClass",
    "ArrayConfig",
    "BeamVector",
    "Codebook",
    "aod_error",
    "build_codebook",
    "steering_derivative",
    "steering_vector",
    "AodPrior",
    "Measurement",
    "MobilityModel",
    "PathState",
    "channel_matrix",
    "discretize_aod_prior",
    "evolve_aod",
    "observe",
    "sample_gain",
    "AodEstimate",
    "ml_estimate",
    "projection",
    "search_window",
    "CrlbInputs",
    "average_crlb",
    "crlb_aod",
    "BeamPairChoice",
    "LookupTable",
    "build_lookup_table",
    "lut_to_pair",
    "select_pair_exhaustive",
    "select_pair_symmetric",
    "BeamPairSelector",
    "MLAodEstimator",
]
