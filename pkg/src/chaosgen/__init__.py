"""Generative modelling with chaotic recurrent rate networks.

Asymmetric random couplings keep untrained networks in a chaotic regime;
contrastive Hebbian updates of symmetric couplings and fields then shape the
free dynamics so that states harvested at a fixed time resemble the data.
"""
from .dynamics import (
    ChainState,
    DeepParams,
    RestrictedParams,
    SampleSet,
    SimConfig,
    UnrestrictedParams,
    chaos_probe,
    clamped_hidden_closed_form,
    clamped_visible_closed_form,
    euler_step_deep,
    euler_step_restricted,
    euler_step_unrestricted,
    init_deep,
    init_params,
    init_restricted,
    init_unrestricted,
    simulate_clamped_deep,
    simulate_free,
)
from .errors import ChecksumError, ConfigError, FormatError, InvalidArgument, UnsupportedArchitecture
from .metrics import MetricReport, evaluate
from .training import PhaseStatistics, TrainConfig, TrainHooks, apply_update, train, train_epoch

__version__ = "0.1.0"
