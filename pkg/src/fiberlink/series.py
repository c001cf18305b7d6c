"""Uniformly sampled signal containers shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
#: ITU channel 44 (1542.14 nm), the carrier used throughout.
CARRIER_HZ = 194.4e12


@dataclass(frozen=True)
class _Series:
    samples: np.ndarray
    rate: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


@dataclass(frozen=True)
class PhaseSeries(_Series):
    """Phase in radians, either of the optical carrier or of an RF beat."""


@dataclass(frozen=True)
class DelaySeries(_Series):
    """Propagation-delay excursion in seconds."""


@dataclass(frozen=True)
class FrequencySeries(_Series):
    """Fractional frequency samples y_k; ``rate`` is 1/gate."""
