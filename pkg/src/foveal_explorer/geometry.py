"""Gaze state, world/retinal coordinate transforms, and distance binning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class GazeState:
    """Current fixation in world pixel coordinates at time index ``step``."""

    fixation: tuple[float, float]
    step: int = 0

    def __post_init__(self):
        if self.step < 0:
            raise ContractError("time index must be non-negative")


def to_local(world_point, gaze: GazeState):
    """World point -> retinal coordinates: (u, v) = (x - x_t, y - y_t)."""
    x, y = world_point
    fx, fy = gaze.fixation
    return (x - fx, y - fy)


def fovea_distance(world_point, gaze: GazeState):
    """Euclidean distance from a world point (or an (N, 2) array of points)
    to the current fixation."""
    p = np.asarray(world_point, dtype=float)
    fx, fy = gaze.fixation
    if p.ndim == 1:
        return float(np.hypot(p[0] - fx, p[1] - fy))
    return np.hypot(p[..., 0] - fx, p[..., 1] - fy)


@dataclass(frozen=True)
class DistanceBinning:
    """Ascending bin upper edges over [0, max_radius].

    A distance falls in the first bin whose edge is >= the distance;
    anything past the last edge is clamped into the last bin.
    """

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 1:
            raise ContractError("binning needs at least one edge")
        if np.any(np.diff(e) <= 0) or e[0] <= 0:
            raise ContractError("bin edges must be strictly increasing and positive")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)

    @property
    def num_bins(self) -> int:
        return self.edges.size

    @property
    def max_radius(self) -> float:
        return float(self.edges[-1])

    @classmethod
    def uniform(cls, num_bins: int = 7, max_radius: float = 1.0) -> "DistanceBinning":
        if num_bins < 1 or max_radius <= 0:
            raise ContractError("need num_bins >= 1 and max_radius > 0")
        return cls(max_radius * np.arange(1, num_bins + 1) / num_bins)

    @classmethod
    def for_image(cls, width: int, height: int, num_bins: int = 7) -> "DistanceBinning":
        """Uniform bins out to half the image diagonal."""
        return cls.uniform(num_bins, 0.5 * float(np.hypot(width, height)))


def bin_of(distance, binning: DistanceBinning):
    """Bin index for a distance (scalar or array); clamps past the last edge."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ContractError("distances must be non-negative")
    idx = np.searchsorted(binning.edges, d, side="left")
    idx = np.minimum(idx, binning.num_bins - 1)
    return int(idx) if d.ndim == 0 else idx
