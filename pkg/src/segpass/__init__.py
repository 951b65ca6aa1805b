"""Segmented pinching-antenna uplink simulation.

Channel synthesis for segmented waveguides, the SS/SA/SM receive
protocols, AO-MMSE computation-MSE minimization, AO-WMMSE weighted sum
rate maximization and a seeded Monte Carlo harness.
"""

from .exceptions import (
    ComplexRootWarning,
    ConfigError,
    DegenerateGeometry,
    DimensionMismatch,
    InfeasibleRates,
    OutOfSegment,
    SegpassError,
    SingularCovariance,
)
from .estimators import AOMMSEBeamformer, AOWMMSEBeamformer, PinchingChannelTransformer
from .geometry import (
    ChannelSet,
    PaPlacement,
    Scenario,
    UePosition,
    avg_gain_conventional,
    avg_gain_segmented,
    closed_form_pa_position,
    composite_channel,
    dbm_to_watts,
    free_space_channel,
    gain_ratio,
    in_waveguide_channel,
    optimal_segment,
    place_pas,
)
from .mse_solver import (
    InfeasibilityPolicy,
    SolverConfig,
    SolverReport,
    ao_mmse,
    initial_beams,
    mmse_receivers,
    rate_power_system,
    transmit_update,
)
from .protocols import (
    BeamState,
    EffectiveChannel,
    Metrics,
    Protocol,
    ProtocolKind,
    effective_channel,
    evaluate,
    mse_eval,
    sensing_mse,
    sinr_eval,
    wsr_eval,
)
from .wsr_solver import ao_wmmse, update_weights, wsr_mmse_receivers, wsr_transmit_update

__version__ = "0.1.0"
