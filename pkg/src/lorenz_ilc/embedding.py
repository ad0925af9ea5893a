"""Time-lagged phase portraits and their binned densities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "LagNotMultipleOfDt",
    "SignalTooShort",
    "DegenerateExtent",
    "DelayVectorSet",
    "GridSpec",
    "BinnedPdf",
    "lag_index",
    "embed",
    "bin_points",
    "shared_grid",
    "out_of_grid_fraction",
]

# relative slack when converting a lag in time units to a sample count
_LAG_RTOL = 1e-9


class LagNotMultipleOfDt(ValueError):
    pass


class SignalTooShort(ValueError):
    pass


class DegenerateExtent(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DelayVectorSet:
    """Points of an E-dimensional delay embedding.

    Column 0 is the unlagged signal, column k is the signal advanced by
    ``lag_indices[k-1]`` samples.
    """

    lags: tuple[float, ...]
    lag_indices: tuple[int, ...]
    points: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class GridSpec:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    bins: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.bins)):
            raise ValueError("lower, upper and bins must have the same length")
        for lo, hi, nb in zip(self.lower, self.upper, self.bins):
            if not lo < hi:
                raise ValueError(f"grid axis has lower >= upper ({lo}, {hi})")
            if nb < 1:
                raise ValueError("bins per axis must be >= 1")

    @classmethod
    def square(cls, lower: float, upper: float, bins: int, dim: int = 2) -> "GridSpec":
        return cls((float(lower),) * dim, (float(upper),) * dim, (int(bins),) * dim)

    @property
    def widths(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / np.asarray(self.bins)

    def edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.bins[axis] + 1)

    def centers(self, axis: int) -> np.ndarray:
        e = self.edges(axis)
        return 0.5 * (e[:-1] + e[1:])

    def cell_centers(self) -> np.ndarray:
        """Physical coordinates of every cell center, in C (row-major) order."""
        mesh = np.meshgrid(*(self.centers(a) for a in range(len(self.bins))), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass(frozen=True, eq=False)
class BinnedPdf:
    grid: GridSpec
    counts: np.ndarray

    def __post_init__(self):
        if tuple(self.counts.shape) != tuple(self.grid.bins):
            raise ValueError("counts shape does not match grid bins")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total_mass(self) -> float:
        return float(self.counts.sum())


def lag_index(lag: float, dt: float) -> int:
    """Number of samples spanned by ``lag``; it must be a whole multiple of ``dt``."""
    ratio = lag / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _LAG_RTOL * max(1.0, abs(ratio)):
        raise LagNotMultipleOfDt(f"lag {lag} is not a positive integer multiple of dt={dt}")
    return n


def embed(signal, lags: Sequence[float], dt: float) -> DelayVectorSet:
    """Stack lagged copies of ``signal``.

    For one lag this yields the pairs ``(x_i, x_{i+n1})`` for
    ``i = 1 .. N - n1``; every further lag adds one column.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    lags = tuple(float(t) for t in lags)
    if not lags:
        raise ValueError("at least one lag is required")
    idx = tuple(lag_index(t, dt) for t in lags)
    n_max = max(idx)
    n_pts = x.size - n_max
    if n_pts < 1:
        raise SignalTooShort(f"signal of length {x.size} is too short for lag index {n_max}")
    cols = [x[:n_pts]] + [x[n:n + n_pts] for n in idx]
    return DelayVectorSet(lags=lags, lag_indices=idx, points=np.column_stack(cols))


def bin_points(points, grid: GridSpec) -> BinnedPdf:
    """Histogram delay vectors on ``grid``.

    Cells are half-open ``[low, high)`` except the last one on each axis,
    which also takes its upper edge.  Points outside the grid are clamped into
    the nearest edge cell, so no mass is lost.
    """
    pts = points.points if isinstance(points, DelayVectorSet) else np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != len(grid.bins):
        raise ValueError("point dimension does not match grid")
    cells = []
    for axis, nb in enumerate(grid.bins):
        idx = np.searchsorted(grid.edges(axis), pts[:, axis], side="right") - 1
        cells.append(np.clip(idx, 0, nb - 1))
    flat = np.ravel_multi_index(tuple(cells), tuple(grid.bins))
    counts = np.bincount(flat, minlength=int(np.prod(grid.bins))).astype(float)
    return BinnedPdf(grid=grid, counts=counts.reshape(tuple(grid.bins)))


def out_of_grid_fraction(points, grid: GridSpec) -> float:
    """Fraction of points that ``bin_points`` would have to clamp."""
    pts = points.points if isinstance(points, DelayVectorSet) else np.asarray(points, dtype=float)
    outside = np.any((pts < np.asarray(grid.lower)) | (pts > np.asarray(grid.upper)), axis=1)
    return float(outside.mean())


def shared_grid(reference, bins: int = 20, padding: float = 0.25) -> GridSpec:
    """Grid spanning the reference extent, widened by ``padding`` of the span per side.

    Build it once per campaign and reuse it for every histogram so the
    distances between histograms are commensurate.
    """
    pts = reference.points if isinstance(reference, DelayVectorSet) else np.asarray(reference, dtype=float)
    if pts.size == 0:
        raise ValueError("reference has no points")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        raise DegenerateExtent("reference points have zero extent on some axis")
    lower = lo - padding * span
    upper = hi + padding * span
    return GridSpec(tuple(float(v) for v in lower), tuple(float(v) for v in upper),
                    (int(bins),) * pts.shape[1])
