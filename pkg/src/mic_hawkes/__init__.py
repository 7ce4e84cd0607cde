"""Mixture of Interacting Cascades: a marked multivariate Hawkes process toolkit."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Event,
    EventLog,
    IntensityState,
    KernelSpec,
    MixingSpec,
    ModelError,
    ModelParams,
    UserGraph,
)
from .estimator import CC, IC, LinMIC, MICHawkes  # noqa: F401
