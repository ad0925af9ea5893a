"""Spectral and embedding diagnostics used to pick the portrait lag.

``welch_psd`` and ``hilbert_phase`` wrap :mod:`scipy.signal`.  The shadow
manifold interpolation here reconstructs one observable from the delay
embedding of another, with simplex-projection weights over the ``E + 1``
nearest neighbours; its Pearson score is what the lag scan maximizes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps
from scipy.ndimage import median_filter, uniform_filter1d
from scipy.spatial import cKDTree

from .embedding import lag_index

__all__ = [
    "SegmentTooLong",
    "ZeroVariance",
    "TooShort",
    "PowerSpectrum",
    "SmiResult",
    "TauScan",
    "welch_psd",
    "spectral_peaks",
    "peak_to_background",
    "hilbert_phase",
    "pearson",
    "smi_reconstruct",
    "greedy_tau_scan",
]


class SegmentTooLong(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    frequencies: np.ndarray
    power: np.ndarray
    segment_length: int
    overlap: int
    window: str

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def total_power(self) -> float:
        return float(self.power.sum() * self.df)


def welch_psd(x, dt: float, segment_length: int, overlap: int = 0,
              window: str = "hann", detrend=False) -> PowerSpectrum:
    """One-sided power spectral density by Welch averaging.

    Densities integrate to the mean square of the signal.  ``detrend`` is
    passed to :func:`scipy.signal.welch` (``"constant"`` removes each
    segment's mean, moving the DC power out).
    """
    x = np.asarray(x, dtype=float)
    if segment_length > x.size:
        raise SegmentTooLong(f"segment length {segment_length} exceeds signal length {x.size}")
    f, p = sps.welch(x, fs=1.0 / dt, window=window, nperseg=segment_length,
                     noverlap=overlap, detrend=detrend, scaling="density")
    return PowerSpectrum(frequencies=f, power=p, segment_length=segment_length,
                         overlap=overlap, window=window)


def _band(ps: PowerSpectrum, fmin, fmax):
    return (ps.frequencies >= fmin) & (ps.frequencies <= fmax)


def spectral_peaks(ps: PowerSpectrum, fmin: float, fmax: float,
                   smooth_bins: int = 5) -> list[tuple[float, float]]:
    """Local maxima in ``[fmin, fmax]`` as ``(frequency, prominence)``, most prominent first.

    The spectrum is smoothed with a ``smooth_bins`` moving average first so
    single-bin estimator noise does not register as a peak.
    """
    smooth = uniform_filter1d(ps.power, smooth_bins)
    band = _band(ps, fmin, fmax)
    idx, props = sps.find_peaks(smooth[band], prominence=0)
    order = np.argsort(props["prominences"])[::-1]
    f = ps.frequencies[band]
    return [(float(f[idx[i]]), float(props["prominences"][i])) for i in order]


def peak_to_background(ps: PowerSpectrum, fmin: float, fmax: float, smooth_bins: int = 5,
                       background_bins: int = 101) -> tuple[float, float]:
    """Largest ratio of smoothed power to the running-median background in the band.

    Returns ``(ratio, frequency)``.
    """
    smooth = uniform_filter1d(ps.power, smooth_bins)
    background = median_filter(ps.power, background_bins, mode="nearest")
    band = _band(ps, fmin, fmax)
    ratio = smooth[band] / background[band]
    i = int(np.argmax(ratio))
    return float(ratio[i]), float(ps.frequencies[band][i])


def hilbert_phase(x) -> np.ndarray:
    """Wrapped instantaneous phase (radians) of the analytic signal of ``x - mean(x)``."""
    x = np.asarray(x, dtype=float)
    if x.size < 4:
        raise TooShort("need at least 4 samples")
    return np.angle(sps.hilbert(x - x.mean()))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("pearson needs two equal-length 1-D sequences of at least 2 values")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(da @ da)
    sb = np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ZeroVariance("pearson correlation is undefined for a constant sequence")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class SmiResult:
    lags: tuple[float, ...]
    dim: int
    times: np.ndarray           # sample index of each reconstructed value
    reconstructed: np.ndarray
    pearson: float


def _delay_matrix(x, idx):
    """Rows ``(x_t, x_{t-n1}, ..., x_{t-n_k})`` for ``t = max(n) .. N-1``."""
    n_max = max(idx)
    n = x.size
    return np.column_stack([x[n_max:]] + [x[n_max - k:n - k] for k in idx])


def smi_reconstruct(source, target, lags: Sequence[float], dt: float,
                    n_neighbors: int | None = None, exclusion: int | None = None) -> SmiResult:
    """Reconstruct ``target`` from the delay embedding of ``source``.

    Every delay vector ``(s(t), s(t - tau_1), ...)`` is matched with its
    ``n_neighbors`` (default ``E + 1``) nearest neighbours among the other
    vectors, skipping those within ``exclusion`` samples in time (default the
    largest lag).  The estimate of ``target(t)`` is the neighbours' targets
    averaged with weights ``exp(-d_i / d_min)``.
    """
    s = np.asarray(source, dtype=float)
    y = np.asarray(target, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("source and target must be equal-length 1-D series")
    idx = tuple(lag_index(t, dt) for t in lags)
    dim = len(idx) + 1
    k = n_neighbors if n_neighbors is not None else dim + 1
    excl = exclusion if exclusion is not None else max(idx)
    V = _delay_matrix(s, idx)
    n_pts = V.shape[0]
    if n_pts < k + 2 * excl + 2:
        raise TooShort("series too short for the requested lags and neighbour count")
    y_t = y[max(idx):]

    n_query = min(k + 2 * excl + 1, n_pts)
    dist, nbr = cKDTree(V).query(V, n_query)
    keep = np.abs(nbr - np.arange(n_pts)[:, None]) > excl
    pick = np.argsort(~keep, axis=1, kind="stable")[:, :k]
    dist = np.take_along_axis(dist, pick, axis=1)
    nbr = np.take_along_axis(nbr, pick, axis=1)

    d_min = dist[:, :1]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.exp(-dist / d_min)
    # a zero nearest distance: exact matches share the weight (all of it if every distance is zero)
    zero = d_min[:, 0] == 0
    if np.any(zero):
        w[zero] = (dist[zero] == 0).astype(float)
    rec = (w * y_t[nbr]).sum(axis=1) / w.sum(axis=1)
    return SmiResult(lags=tuple(float(t) for t in lags), dim=dim, times=np.arange(max(idx), s.size),
                     reconstructed=rec, pearson=pearson(rec, y_t))


@dataclass(frozen=True, eq=False)
class TauScan:
    """Greedy lag scan: one Pearson curve per embedding dimension."""

    tau_grid: np.ndarray
    curves: dict           # E -> pearson per tau in tau_grid
    best_lags: dict        # E -> tuple of lags chosen up to that dimension
    best_pearson: dict     # E -> pearson at the chosen lags


def greedy_tau_scan(source, target, dt: float, e_max: int, tau_grid: Sequence[float],
                    n_neighbors: int | None = None) -> TauScan:
    """Choose lags one dimension at a time.

    For ``E = 2`` the first lag is scanned over ``tau_grid``; each higher
    dimension keeps the lags already chosen and scans one more.
    """
    if e_max < 2:
        raise ValueError("e_max must be at least 2")
    grid = np.asarray(tau_grid, dtype=float)
    for t in grid:
        lag_index(t, dt)
    chosen: list[float] = []
    curves, best_lags, best_pearson = {}, {}, {}
    for e in range(2, e_max + 1):
        curve = np.array([smi_reconstruct(source, target, chosen + [t], dt, n_neighbors).pearson
                          for t in grid])
        i = int(np.argmax(curve))
        chosen.append(float(grid[i]))
        curves[e] = curve
        best_lags[e] = tuple(chosen)
        best_pearson[e] = float(curve[i])
    return TauScan(tau_grid=grid, curves=curves, best_lags=best_lags, best_pearson=best_pearson)
