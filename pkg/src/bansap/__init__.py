"""Bandit online saddle-point methods for time-varying long-term constraints."""

from .geometry import BoxSet, SamplingScheme, project, sample_ball, sample_direction, sample_directions, shrink
from .estimators import (
    GradientEstimate,
    LossOracle,
    m_point_grad,
    one_point_grad,
    one_point_grads,
    smoothed_value,
    two_point_grad,
    two_point_grads,
)
from .solver import (
    MOSP,
    BanSaP,
    CloudOnly,
    ConstraintOracle,
    FogOnly,
    HyperParams,
    PrimalDualState,
    Problem,
    SlotRecord,
    Trajectory,
    bansap_step,
    mosp_step,
    run,
    schedule,
)

__version__ = "0.1.0"
