"""Continuous-state branching processes with immigration.

Submodules: ``rngkit`` (deterministic splittable streams), ``measures``
(Levy measures), ``mechanism`` (branching and immigration mechanisms),
``cumulant`` (Laplace-transform engines), ``discrete`` (Galton-Watson
chains and scaling limits), ``paths`` (path simulation and time changes),
``verify`` (Monte Carlo checks) and ``cli``.
"""

from .errors import DomainError, NumericError, UnsupportedOperation
from .estimate import MCEstimate
from .mechanism import BranchingMechanism, Criticality, ImmigrationMechanism, stable_phi
from .rngkit import RandomStream, StreamBatch, make_stream, split

__all__ = [
    "DomainError",
    "NumericError",
    "UnsupportedOperation",
    "MCEstimate",
    "BranchingMechanism",
    "ImmigrationMechanism",
    "Criticality",
    "stable_phi",
    "RandomStream",
    "StreamBatch",
    "make_stream",
    "split",
]
