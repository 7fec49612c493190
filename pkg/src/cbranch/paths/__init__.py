"""Continuous-state path simulation."""

from .core import (
    PATH_HEADER,
    PathBatch,
    RateSpec,
    SamplePath,
    StateFn,
    TimeFn,
    TwoStateFns,
    Unit,
    feller_step,
    write_path_csv,
)
from .exact import simulate_feller_exact
from .lamperti import lamperti_forward, lamperti_forward_values, lamperti_inverse, lamperti_inverse_values
from .levy import simulate_levy
from .reconstruct import excursion_reconstruct_feller, feller_entrance, immigration_reconstruct_feller
from .sde import simulate_cbi, simulate_stable_cbi

__all__ = [
    "PATH_HEADER",
    "PathBatch",
    "RateSpec",
    "SamplePath",
    "StateFn",
    "TimeFn",
    "TwoStateFns",
    "Unit",
    "feller_step",
    "write_path_csv",
    "simulate_feller_exact",
    "lamperti_forward",
    "lamperti_forward_values",
    "lamperti_inverse",
    "lamperti_inverse_values",
    "simulate_levy",
    "excursion_reconstruct_feller",
    "feller_entrance",
    "immigration_reconstruct_feller",
    "simulate_cbi",
    "simulate_stable_cbi",
]
