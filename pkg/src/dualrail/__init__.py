"""Dual-rail quantum-state transfer through end-modulated spin chains."""

from .chain_model import (
    ChainSpec,
    ExcitationBasis,
    Model,
    build_couplings,
    k_excitation_block,
    secular_roots,
    analytic_eigenvector,
)
from .evolution import SpectralData, amplitude, decompose, propagate, spectral_data
from .protocol import (
    DualRailChannel,
    InputState,
    MeasurementSchedule,
    conclusive_simulate,
    joint_success_two,
)

__version__ = "0.1.0"
