"""Exact Earth Mover's Distance between histograms on a shared grid.

Mass is raw bin counts and ground distance is the Euclidean distance between
cell centers in physical units.  The transport problem is solved exactly with
the network simplex solver from POT; only cells that carry mass enter the
problem, which leaves the optimum unchanged.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# POT probes every array backend on import (tensorflow alone costs seconds);
# only numpy is used here.
for _key in ("POT_BACKEND_DISABLE_PYTORCH", "POT_BACKEND_DISABLE_JAX",
             "POT_BACKEND_DISABLE_TENSORFLOW", "POT_BACKEND_DISABLE_CUPY"):
    os.environ.setdefault(_key, "1")

import ot  # noqa: E402

from .embedding import BinnedPdf, GridSpec  # noqa: E402

__all__ = ["GridMismatch", "MassMismatch", "TransportPlan", "cost_matrix", "emd", "emd_with_plan"]

_MAX_ITER = 10_000_000


class GridMismatch(ValueError):
    pass


class MassMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse transport plan.

    ``moves`` maps ``(source_cell, destination_cell)`` multi-indices to the
    mass moved between them.
    """

    moves: dict
    cost: float

    def source_marginal(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        for (src, _), m in self.moves.items():
            out[src] += m
        return out

    def destination_marginal(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        for (_, dst), m in self.moves.items():
            out[dst] += m
        return out


@lru_cache(maxsize=32)
def cost_matrix(grid: GridSpec) -> np.ndarray:
    """Pairwise Euclidean distance between all cell centers (read-only)."""
    c = grid.cell_centers()
    d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1))
    d.setflags(write=False)
    return d


def _check(f: BinnedPdf, g: BinnedPdf, mass_tol: float):
    if f.grid != g.grid:
        raise GridMismatch("histograms are defined on different grids")
    mf, mg = f.total_mass, g.total_mass
    if abs(mf - mg) > mass_tol:
        raise MassMismatch(f"total masses differ: {mf} vs {mg}")


def _solve(f: BinnedPdf, g: BinnedPdf, mass_tol: float):
    _check(f, g, mass_tol)
    a = f.counts.ravel().astype(float)
    b = g.counts.ravel().astype(float)
    src = np.flatnonzero(a)
    dst = np.flatnonzero(b)
    if src.size == 0:
        return 0.0, src, dst, np.zeros((0, 0))
    M = np.ascontiguousarray(cost_matrix(f.grid)[np.ix_(src, dst)])
    plan, log = ot.emd(a[src], b[dst], M, numItermax=_MAX_ITER, log=True)
    if log["result_code"] != 1:
        raise RuntimeError(f"network simplex did not converge: {log['warning']}")
    cost = float(np.sum(plan * M))
    return cost, src, dst, plan


def emd(f: BinnedPdf, g: BinnedPdf, mass_tol: float = 0.0) -> float:
    """Minimum total (mass x distance) needed to turn ``f`` into ``g``.

    Raises
    ------
    GridMismatch
        If the two histograms do not share a grid.
    MassMismatch
        If their total masses differ by more than ``mass_tol``.
    """
    return _solve(f, g, mass_tol)[0]


def emd_with_plan(f: BinnedPdf, g: BinnedPdf, mass_tol: float = 0.0) -> tuple[float, TransportPlan]:
    cost, src, dst, plan = _solve(f, g, mass_tol)
    shape = f.grid.bins
    moves = {}
    for i, j in zip(*np.nonzero(plan)):
        key = (np.unravel_index(src[i], shape), np.unravel_index(dst[j], shape))
        key = (tuple(int(v) for v in key[0]), tuple(int(v) for v in key[1]))
        moves[key] = float(plan[i, j])
    return cost, TransportPlan(moves=moves, cost=cost)
