"""Stationary optomechanical entanglement with non-Markovian classical noise.

The package builds the Gaussian covariance matrix of a mirror, its cavity
mode and the time-binned outgoing light, and tests it for entanglement
across the mechanics versus light cut.
"""

__version__ = "0.1.0"

from .model import SystemParams, aligo_params, free_mass_params  # noqa: E402
from .spectra import (  # noqa: E402
    LigoParam,
    Quiet,
    Structural,
    SuspensionOnly,
    Tabulated,
    White,
)
from .covariance import (  # noqa: E402
    IntegratorSettings,
    TimeGrid,
    build_covariance,
    partial_transpose,
    trace_cavity,
)
from .entanglement import analyze, Verdict  # noqa: E402

__all__ = [
    "SystemParams",
    "aligo_params",
    "free_mass_params",
    "LigoParam",
    "Quiet",
    "Structural",
    "SuspensionOnly",
    "Tabulated",
    "White",
    "IntegratorSettings",
    "TimeGrid",
    "build_covariance",
    "partial_transpose",
    "trace_cavity",
    "analyze",
    "Verdict",
]
