from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error ``std / sqrt(n)``."""

    mean: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, values) -> "MCEstimate":
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            raise DomainError("need at least one sample")
        if x.size == 1:
            return cls(float(x[0]), 0.0, 1)
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size))

    def z(self, target: float) -> float:
        return (self.mean - target) / max(self.stderr, 1e-15)
