"""The slow outer loop: measure, compare with the reference, learn, actuate.

Each actuation runs the plant for ``(n_discard + n_keep) * dt`` time units
starting from the final state of the previous run, embeds the retained x(t)
samples, bins them on the grid derived from the reference portrait and scores
the result by its Earth Mover's Distance to the reference histogram.  The
optimizer works on ``log10(EMD)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .embedding import BinnedPdf, GridSpec, bin_points, embed, lag_index, shared_grid
from .plant import (DEFAULT_DT, DEFAULT_INITIAL, DEFAULT_N, DEFAULT_PARAMS, IntegrationFailure,
                    LorenzPlant, Plant, PlantRunSpec, State, SystemParams, Trajectory)
from .surrogate import (GpConfig, GpModel, Observation, ParamSpace, fit, model_minimum,
                        suggest_next)
from .transport import emd

__all__ = [
    "PARAM_NAMES",
    "DEFAULT_BOUNDS",
    "CampaignConfig",
    "Reference",
    "IterationRecord",
    "CampaignResult",
    "ConfidenceFloor",
    "SimilarityMap",
    "substream",
    "build_reference",
    "evaluate_condition",
    "run_campaign",
    "confidence_floor",
    "parameter_sweep",
    "grid_scan",
    "similarity_thresholds",
    "similarity_map",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("sigma", "rho", "beta")
DEFAULT_BOUNDS = {"sigma": (2.0, 20.0), "rho": (15.0, 50.0), "beta": (0.5, 5.0)}


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the sub-experiment addressed by ``keys``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))


def _subseed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(keys)).generate_state(1)[0])


# stream identifiers for substream()
_PRIORS, _GP_FIT, _ACQ, _RETRY, _FLOOR, _MINIMUM = range(6)


@dataclass(frozen=True)
class CampaignConfig:
    reference: SystemParams = DEFAULT_PARAMS
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: {"rho": DEFAULT_BOUNDS["rho"]})
    hidden: Mapping[str, float] = field(default_factory=dict)
    n_prior: int = 5
    n_iterations: int = 10
    xi: float = 0.1
    tau: float = 0.17
    bins: int = 20
    padding: float = 0.25
    dt: float = DEFAULT_DT
    n_keep: int = DEFAULT_N
    n_discard: int = DEFAULT_N
    initial: State = DEFAULT_INITIAL
    seed: int = 0
    emd_floor: float = 1.0
    stop_std: Optional[float] = None
    gp: GpConfig = GpConfig()

    def __post_init__(self):
        for name in list(self.bounds) + list(self.hidden):
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r}")
        overlap = set(self.bounds) & set(self.hidden)
        if overlap:
            raise ValueError(f"parameters both controlled and hidden: {sorted(overlap)}")
        if not self.bounds:
            raise ValueError("at least one controlled parameter is required")
        if self.n_prior < 2:
            raise ValueError("n_prior must be at least 2")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be non-negative")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        lag_index(self.tau, self.dt)
        if self.n_keep <= lag_index(self.tau, self.dt):
            raise ValueError("n_keep must exceed the lag index")
        if not self.emd_floor > 0:
            raise ValueError("emd_floor must be positive")
        for name, (lo, hi) in self.bounds.items():
            if not 0 < lo < hi:
                raise ValueError(f"bounds for {name!r} must satisfy 0 < lower < upper")
        for name, value in self.hidden.items():
            if not value > 0:
                raise ValueError(f"hidden value for {name!r} must be positive")

    @property
    def space(self) -> ParamSpace:
        return ParamSpace.from_dict(dict(self.bounds))

    @property
    def actuation_interval(self) -> float:
        """Simulated plant time between two actuations."""
        return (self.n_discard + self.n_keep) * self.dt

    def plant_params(self, values: Mapping[str, float]) -> SystemParams:
        """Reference values, overridden by hidden drifts and then by the candidate."""
        merged = {n: getattr(self.reference, n) for n in PARAM_NAMES}
        merged.update({k: float(v) for k, v in self.hidden.items()})
        merged.update({k: float(v) for k, v in values.items()})
        return SystemParams(**merged)

    def run_spec(self, params: SystemParams, initial: State) -> PlantRunSpec:
        return PlantRunSpec(params=params, initial=initial, dt=self.dt,
                            n_keep=self.n_keep, n_discard=self.n_discard)


@dataclass(frozen=True, eq=False)
class Reference:
    pdf: BinnedPdf
    grid: GridSpec
    final_state: State
    trajectory: Trajectory


@dataclass(frozen=True)
class IterationRecord:
    index: int
    params: tuple[float, ...]
    emd: float
    log10_emd: float
    source: str              # "prior", "acquisition" or "retry"
    final_state: State
    failed: bool = False


@dataclass(frozen=True, eq=False)
class CampaignResult:
    config: CampaignConfig
    history: tuple[IterationRecord, ...]
    model: GpModel
    best_guess: np.ndarray
    best_observed: Observation
    reference: Reference

    def best_objective_trace(self) -> np.ndarray:
        """Running minimum of the objective over successful iterations."""
        vals = np.array([r.log10_emd for r in self.history if not r.failed])
        return np.minimum.accumulate(vals)


@dataclass(frozen=True, eq=False)
class ConfidenceFloor:
    samples: np.ndarray
    mean: float
    std: float

    @property
    def floor(self) -> float:
        return self.mean + self.std

    @property
    def log10_floor(self) -> float:
        return math.log10(self.floor)


def _histogram(traj: Trajectory, config: CampaignConfig, grid: GridSpec) -> BinnedPdf:
    return bin_points(embed(traj.x, [config.tau], config.dt), grid)


def build_reference(config: CampaignConfig, plant: Plant = LorenzPlant(),
                    min_span: float = 1e-6) -> Reference:
    """Run the plant at the reference parameters and derive the campaign grid.

    A reference that has collapsed onto a fixed point has no extent; such
    axes are widened to ``min_span`` around the point so the grid stays valid.
    """
    traj = plant.run(config.run_spec(config.reference, config.initial))
    points = embed(traj.x, [config.tau], config.dt)
    span = np.ptp(points.points, axis=0)
    if np.any(span < min_span):
        center = 0.5 * (points.points.max(axis=0) + points.points.min(axis=0))
        half = 0.5 * np.maximum(span, min_span)
        grid = GridSpec(tuple((center - half).tolist()), tuple((center + half).tolist()),
                        (config.bins,) * 2)
    else:
        grid = shared_grid(points, config.bins, config.padding)
    pdf = bin_points(points, grid)
    return Reference(pdf=pdf, grid=grid, final_state=traj.final_state, trajectory=traj)


def _as_mapping(values, config: CampaignConfig) -> dict:
    if isinstance(values, Mapping):
        return dict(values)
    names = config.space.names
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.shape != (len(names),):
        raise ValueError(f"expected {len(names)} values for {names}")
    return dict(zip(names, arr.tolist()))


def evaluate_condition(values, config: CampaignConfig, carry_state: State, reference: Reference,
                       plant: Plant = LorenzPlant()) -> tuple[Observation, State, float]:
    """Run one actuation and score it against the reference.

    Returns the observation (objective is ``log10(max(EMD, emd_floor))``),
    the final plant state for carry-over, and the raw EMD.
    """
    mapping = _as_mapping(values, config)
    traj = plant.run(config.run_spec(config.plant_params(mapping), carry_state))
    dist = emd(_histogram(traj, config, reference.grid), reference.pdf)
    controlled = tuple(float(mapping[n]) for n in config.space.names if n in mapping)
    obs = Observation(params=controlled, objective=math.log10(max(dist, config.emd_floor)))
    return obs, traj.final_state, dist


def run_campaign(config: CampaignConfig, plant: Plant = LorenzPlant(),
                 reference: Optional[Reference] = None) -> CampaignResult:
    """Seeded priors followed by ``n_iterations`` rounds of fit, suggest, evaluate."""
    space = config.space
    reference = reference or build_reference(config, plant)
    state = reference.final_state
    history: list[IterationRecord] = []
    observations: list[Observation] = []

    def attempt(x, source) -> bool:
        nonlocal state
        index = len(history)
        try:
            obs, new_state, dist = evaluate_condition(x, config, state, reference, plant)
        except IntegrationFailure as exc:
            log.warning("evaluation %d at %s failed: %s", index, x, exc)
            history.append(IterationRecord(index, tuple(map(float, x)), math.nan, math.nan,
                                           source, state, failed=True))
            return False
        state = new_state
        observations.append(obs)
        history.append(IterationRecord(index, obs.params, dist, obs.objective, source, state))
        return True

    rng = substream(config.seed, _PRIORS)
    lower, span = np.asarray(space.lower), space.span
    for _ in range(config.n_prior):
        attempt(lower + span * rng.random(space.dim), "prior")

    def gp_config(k):
        return replace(config.gp, seed=_subseed(config.seed, _GP_FIT, k))

    for it in range(config.n_iterations):
        model = fit(observations, space, gp_config(it))
        if config.stop_std is not None:
            _, std = model.predict_normalized(model.X)
            if float(std.min()) < config.stop_std:
                log.info("stopping after %d iterations: posterior std below %g", it, config.stop_std)
                break
        x = suggest_next(model, space, config.xi, _subseed(config.seed, _ACQ, it))
        if not attempt(x, "acquisition"):
            x = suggest_next(model, space, config.xi, _subseed(config.seed, _RETRY, it))
            attempt(x, "retry")

    model = fit(observations, space, gp_config(config.n_iterations))
    best_guess = model_minimum(model, space, seed=_subseed(config.seed, _MINIMUM))
    best = min(observations, key=lambda o: o.objective)
    return CampaignResult(config=config, history=tuple(history), model=model,
                          best_guess=best_guess, best_observed=best, reference=reference)


def confidence_floor(config: CampaignConfig, n_runs: int = 1000, perturbation: float = 0.01,
                     carry_over: bool = False, reference: Optional[Reference] = None,
                     plant: Plant = LorenzPlant()) -> ConfidenceFloor:
    """Monte Carlo spread of the EMD when all three parameters jitter around the reference.

    Each run draws every parameter from ``N(nominal, perturbation * nominal)``.
    With ``carry_over=False`` each run starts from ``config.initial``.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    reference = reference or build_reference(config, plant)
    rng = substream(config.seed, _FLOOR)
    nominal = config.reference.as_array()
    state = reference.final_state
    samples = np.empty(n_runs)
    for i in range(n_runs):
        drawn = rng.normal(nominal, perturbation * nominal)
        params = SystemParams(*np.abs(drawn))
        start = state if carry_over else config.initial
        traj = plant.run(config.run_spec(params, start))
        samples[i] = emd(_histogram(traj, config, reference.grid), reference.pdf)
        state = traj.final_state
    return ConfidenceFloor(samples=samples, mean=float(samples.mean()),
                           std=float(samples.std(ddof=1)))


def parameter_sweep(config: CampaignConfig, name: str, values: Sequence[float],
                    reference: Optional[Reference] = None, carry_over: bool = True,
                    plant: Plant = LorenzPlant()) -> np.ndarray:
    """EMD to the reference for each value of one parameter, evaluated in order.

    Returns an array of shape ``(len(values), 2)`` with columns value, EMD.
    """
    if name not in PARAM_NAMES:
        raise ValueError(f"unknown parameter {name!r}")
    if name in config.bounds:
        lo, hi = config.bounds[name]
        if min(values) < lo or max(values) > hi:
            raise ValueError(f"sweep values for {name!r} leave the bounds [{lo}, {hi}]")
    reference = reference or build_reference(config, plant)
    state = reference.final_state
    out = np.empty((len(values), 2))
    for i, v in enumerate(values):
        traj = plant.run(config.run_spec(config.plant_params({name: v}),
                                         state if carry_over else config.initial))
        out[i] = v, emd(_histogram(traj, config, reference.grid), reference.pdf)
        state = traj.final_state
    return out


def grid_scan(config: CampaignConfig, n_per_axis: int = 30, reference: Optional[Reference] = None,
              plant: Plant = LorenzPlant()) -> tuple[list[np.ndarray], np.ndarray]:
    """Dense EMD map over the controlled box (at most two parameters).

    Nodes are visited in serpentine order with carry-over.  Returns the axis
    node values and an EMD array indexed ``[i0, i1]``.
    """
    space = config.space
    if space.dim > 2:
        raise ValueError("grid_scan supports at most two controlled parameters")
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(space.lower, space.upper)]
    reference = reference or build_reference(config, plant)
    state = reference.final_state
    shape = (n_per_axis,) * space.dim
    out = np.empty(shape)
    for flat in range(out.size):
        idx = list(np.unravel_index(flat, shape))
        if space.dim == 2 and idx[0] % 2 == 1:
            idx[1] = n_per_axis - 1 - idx[1]
        x = [axes[a][idx[a]] for a in range(space.dim)]
        _, state, dist = evaluate_condition(x, config, state, reference, plant)
        out[tuple(idx)] = dist
    return axes, out


def similarity_thresholds(floor: ConfidenceFloor, ks: Sequence[int] = (1, 3)) -> dict:
    """``log10(floor) + 0.1 k`` for each k: floor-relative similarity levels."""
    return {k: floor.log10_floor + 0.1 * k for k in ks}


@dataclass(frozen=True, eq=False)
class SimilarityMap:
    """Connected region of a grid scan whose log10 EMD is below a threshold."""

    axes: list
    log10_emd: np.ndarray
    threshold: float
    region: np.ndarray

    def _node(self, point) -> tuple:
        return tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(self.axes, np.atleast_1d(point)))

    def contains(self, point) -> bool:
        return bool(self.region[self._node(point)])


def similarity_map(axes, emd_values: np.ndarray, threshold: float, anchor) -> SimilarityMap:
    """Keep the below-threshold component (4-connected) that contains ``anchor``.

    The anchor's own node is always part of the region, so a region exists
    even when chaos pushes that single measurement above the threshold.
    """
    logv = np.log10(np.maximum(emd_values, 1.0))
    below = logv < threshold
    node = tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(axes, np.atleast_1d(anchor)))
    below[node] = True
    labels, _ = ndimage.label(below)
    region = labels == labels[node]
    return SimilarityMap(axes=list(axes), log10_emd=logv, threshold=threshold, region=region)
