"""Time-synchronization attack detection for GPS-timed PMUs.

Submodules: :mod:`grid` (state-space model), :mod:`lqr` (control),
:mod:`attack` (time-stamp shifts), :mod:`phy` (C/No spoofing statistic),
:mod:`trust` (leave-one-out Kalman suspicion), :mod:`experiment` (closed loop
and Monte Carlo), :mod:`config`, :mod:`csvio`, :mod:`plot`, :mod:`cli`.
"""

import logging

from .errors import (ConfigError, CsvParseError, FitError, InsufficientDataError, NumericalError,
                     StabilizabilityError, WamsTsaError)

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CsvParseError", "FitError", "InsufficientDataError", "NumericalError",
    "StabilizabilityError", "WamsTsaError", "__version__",
]
