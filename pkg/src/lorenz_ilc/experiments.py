"""Manifest-driven experiments that regenerate the data behind each figure.

A manifest is a YAML mapping.  ``experiment`` names the kind, every other
top-level key is a section whose entries override the defaults below (see
``docs/manifest.md`` for the full schema).  Running an experiment writes

* ``<name>_results.csv``: the main result table,
* one plot-data CSV per figure panel (``fig5a.csv``, ...),
* ``<name>_metadata.json``: config snapshot and hash, seed, versions, wall
  time and the actuation/plant timescales.

The metadata record carries the complete resolved manifest, so it can be
passed back to :func:`run_manifest` to reproduce the tables.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import platform
import shutil
import tempfile
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .controller import (DEFAULT_BOUNDS, PARAM_NAMES, CampaignConfig, CampaignResult,
                         build_reference, confidence_floor, grid_scan, parameter_sweep,
                         run_campaign, similarity_map, similarity_thresholds)
from .embedding import LagNotMultipleOfDt, bin_points, embed, lag_index
from .plant import PlantRunSpec, State, SystemParams, integrate
from .signals import (greedy_tau_scan, hilbert_phase, peak_to_background, smi_reconstruct,
                      spectral_peaks, welch_psd)
from .surrogate import GpConfig, Observation, ParamSpace, fit

__all__ = ["KINDS", "COVERAGE", "ManifestError", "load_manifest", "resolve", "validate",
           "validate_file", "run_manifest", "coverage_table"]


class ManifestError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


COVERAGE = {
    "trajectory": ("fig2", "parameter step response, fast and slow timescales"),
    "tlpp": ("fig4a, fig4b", "reference portrait, unbinned and binned"),
    "sweep": ("fig5a", "EMD landscape along one parameter"),
    "floor": ("fig6", "Monte Carlo confidence floor"),
    "campaign-1d": ("fig7a-d, fig8a-c", "single-parameter control"),
    "campaign-2d": ("fig9", "two-parameter control and similarity regions"),
    "campaign-robust": ("fig10", "two-parameter control with a hidden drifted parameter"),
    "psd": ("fig11a", "Welch power spectra of x, y, z, |x|, |y|"),
    "phase": ("fig11b", "Hilbert phase of x"),
    "smi-scan": ("fig12a, fig12b", "greedy lag scan by shadow manifold interpolation"),
}
KINDS = tuple(COVERAGE)

_BASE = {
    "name": None,
    "seed": 0,
    "plant": {"dt": 0.01, "n_keep": 100_000, "n_discard": 100_000, "initial": [0.1, 0.2, 0.3]},
    "reference": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "embedding": {"tau": 0.17, "bins": 20, "padding": 0.25},
    "gp": {"length_scale": 0.3, "signal_variance": 1.0, "noise_variance": 0.01, "optimize": True,
           "length_scale_bounds": [0.01, 100.0], "signal_variance_bounds": [0.01, 100.0],
           "noise_variance_bounds": [1e-4, 10.0], "n_restarts": 4},
}

_SECTIONS = {
    "trajectory": {"step": {"parameter": "rho", "value": 22.3, "t_before": 20.0, "t_after": 80.0}},
    "tlpp": {"tlpp": {"n_show": 5000}},
    "sweep": {"sweep": {"parameter": "rho", "start": 15.0, "stop": 50.0, "num": 1000,
                        "carry_over": True},
              "floor": {"n_runs": 0, "perturbation": 0.01, "carry_over": False}},
    "floor": {"floor": {"n_runs": 1000, "perturbation": 0.01, "carry_over": False,
                        "hist_bins": 40}},
    "campaign-1d": {"control": {"bounds": {"rho": list(DEFAULT_BOUNDS["rho"])}, "hidden": {},
                                "n_prior": 5, "n_iterations": 10, "xi": 0.1, "stop_std": None},
                    "output": {"n_curve": 500, "n_snapshots": 4, "true_curve_points": 0}},
    "campaign-2d": {"control": {"bounds": {"sigma": list(DEFAULT_BOUNDS["sigma"]),
                                           "beta": list(DEFAULT_BOUNDS["beta"])},
                                "hidden": {}, "n_prior": 12, "n_iterations": 30, "xi": 0.1,
                                "stop_std": None},
                    "floor": {"n_runs": 200, "perturbation": 0.01, "carry_over": False},
                    "output": {"n_map": 50, "oracle_grid": 0}},
    "campaign-robust": {"control": {"bounds": {"sigma": list(DEFAULT_BOUNDS["sigma"]),
                                               "beta": list(DEFAULT_BOUNDS["beta"])},
                                    "hidden": {"rho": 40.0}, "n_prior": 12, "n_iterations": 30,
                                    "xi": 0.1, "stop_std": None},
                        "floor": {"n_runs": 200, "perturbation": 0.01, "carry_over": False},
                        "output": {"n_map": 50, "oracle_grid": 0}},
    "psd": {"psd": {"dt": 0.001, "n_points": 10_000_000, "n_discard": 100_000,
                    "segment_length": 100_000, "overlap": 0, "fmax": 5.0, "smooth_bins": 5}},
    "phase": {"phase": {"n_points": 100_000, "n_show": 5000}},
    "smi-scan": {"smi": {"n_points": 20_000, "n_discard": 10_000, "e_max": 4, "tau_min": 0.01,
                         "tau_max": 0.5, "source": "x", "target": "z", "n_neighbors": None}},
}


# --- manifest handling --------------------------------------------------------

def load_manifest(path) -> dict:
    """Read a manifest, or the ``manifest`` entry of a metadata record."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ManifestError([f"{path}: top level must be a mapping"])
    if isinstance(data.get("manifest"), dict):
        data = data["manifest"]
    return data


def _merge(defaults: dict, given: dict, prefix: str, errors: list) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            errors.append(f"{prefix}{key}: unknown key")
            continue
        if isinstance(defaults[key], dict) and key not in ("bounds", "hidden"):
            if not isinstance(value, dict):
                errors.append(f"{prefix}{key}: expected a mapping")
                continue
            out[key] = _merge(defaults[key], value, f"{prefix}{key}.", errors)
        else:
            out[key] = value
    return out


def resolve(manifest: dict) -> tuple[dict, list[str]]:
    """Fill defaults for the manifest's experiment kind; returns ``(resolved, errors)``."""
    errors: list[str] = []
    if not isinstance(manifest, dict):
        return {}, ["manifest must be a mapping"]
    kind = manifest.get("experiment")
    if kind not in COVERAGE:
        return {}, [f"experiment: must be one of {', '.join(KINDS)} (got {kind!r})"]
    defaults = copy.deepcopy(_BASE)
    defaults.update(copy.deepcopy(_SECTIONS[kind]))
    given = {k: v for k, v in manifest.items() if k != "experiment"}
    resolved = _merge(defaults, given, "", errors)
    resolved["experiment"] = kind
    if resolved["name"] is None:
        resolved["name"] = kind
    return resolved, errors


def _positive(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0


def _int_at_least(value, lo) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= lo


def _check_lag(errors, field, lag, dt):
    if not _positive(lag):
        errors.append(f"{field}: must be a positive number")
        return
    try:
        lag_index(lag, dt)
    except LagNotMultipleOfDt:
        errors.append(f"{field}: {lag} is not a positive integer multiple of plant.dt={dt}")


def _semantic_errors(m: dict) -> list[str]:
    errors = []
    kind = m["experiment"]
    if not isinstance(m["name"], str) or not m["name"] or any(c in m["name"] for c in "/\\"):
        errors.append("name: must be a non-empty string without path separators")
    if not (isinstance(m["seed"], int) and not isinstance(m["seed"], bool) and 0 <= m["seed"] < 2 ** 64):
        errors.append("seed: must be an integer in [0, 2^64)")
    p = m["plant"]
    dt = p["dt"]
    if not _positive(dt):
        errors.append("plant.dt: must be positive")
        dt = 0.01
    if not _int_at_least(p["n_keep"], 2):
        errors.append("plant.n_keep: must be an integer >= 2")
    if not _int_at_least(p["n_discard"], 0):
        errors.append("plant.n_discard: must be a non-negative integer")
    init = p["initial"]
    if not (isinstance(init, list) and len(init) == 3
            and all(isinstance(v, (int, float)) and math.isfinite(v) for v in init)):
        errors.append("plant.initial: must be a list of three finite numbers")
    for n in PARAM_NAMES:
        if not _positive(m["reference"][n]):
            errors.append(f"reference.{n}: must be positive")
    e = m["embedding"]
    _check_lag(errors, "embedding.tau", e["tau"], dt)
    if not _int_at_least(e["bins"], 1):
        errors.append("embedding.bins: must be a positive integer")
    if not (isinstance(e["padding"], (int, float)) and e["padding"] >= 0):
        errors.append("embedding.padding: must be non-negative")
    if _int_at_least(p["n_keep"], 2) and _positive(e["tau"]) and not errors:
        if p["n_keep"] <= lag_index(e["tau"], dt):
            errors.append("plant.n_keep: must exceed the embedding lag in samples")

    if kind.startswith("campaign"):
        c = m["control"]
        bounds, hidden = c["bounds"], c["hidden"]
        if not isinstance(bounds, dict) or not isinstance(hidden, dict):
            errors.append("control.bounds and control.hidden must be mappings")
            return errors
        for name, b in bounds.items():
            if name not in PARAM_NAMES:
                errors.append(f"control.bounds.{name}: unknown parameter")
            elif not (isinstance(b, list) and len(b) == 2 and all(_positive(v) for v in b) and b[0] < b[1]):
                errors.append(f"control.bounds.{name}: must be [lower, upper] with 0 < lower < upper")
        for name, v in hidden.items():
            if name not in PARAM_NAMES:
                errors.append(f"control.hidden.{name}: unknown parameter")
            elif not _positive(v):
                errors.append(f"control.hidden.{name}: must be positive")
        for name in sorted(set(bounds) & set(hidden)):
            errors.append(f"control.hidden.{name}: parameter is also controlled (control.bounds.{name})")
        want = {"campaign-1d": 1, "campaign-2d": 2, "campaign-robust": 2}[kind]
        if len(bounds) != want:
            errors.append(f"control.bounds: {kind} needs exactly {want} controlled parameter(s)")
        if kind == "campaign-robust" and not hidden:
            errors.append("control.hidden: campaign-robust needs at least one hidden parameter")
        if not _int_at_least(c["n_prior"], 2):
            errors.append("control.n_prior: must be an integer >= 2")
        if not _int_at_least(c["n_iterations"], 0):
            errors.append("control.n_iterations: must be a non-negative integer")
        if not (isinstance(c["xi"], (int, float)) and c["xi"] >= 0):
            errors.append("control.xi: must be non-negative")
        if c["stop_std"] is not None and not _positive(c["stop_std"]):
            errors.append("control.stop_std: must be null or positive")
    if kind == "sweep":
        s = m["sweep"]
        if s["parameter"] not in PARAM_NAMES:
            errors.append("sweep.parameter: unknown parameter")
        if not (_positive(s["start"]) and _positive(s["stop"]) and s["start"] < s["stop"]):
            errors.append("sweep.start/stop: need 0 < start < stop")
        if not _int_at_least(s["num"], 1):
            errors.append("sweep.num: must be a positive integer")
    if "floor" in m:
        f = m["floor"]
        n_min = 2 if kind == "floor" else 0
        if not _int_at_least(f["n_runs"], n_min) or f["n_runs"] == 1:
            errors.append(f"floor.n_runs: must be an integer >= 2{' or 0' if n_min == 0 else ''}")
        if not (isinstance(f["perturbation"], (int, float)) and f["perturbation"] >= 0):
            errors.append("floor.perturbation: must be non-negative")
    if kind == "trajectory":
        s = m["step"]
        if s["parameter"] not in PARAM_NAMES:
            errors.append("step.parameter: unknown parameter")
        for key in ("value", "t_before", "t_after"):
            if not _positive(s[key]):
                errors.append(f"step.{key}: must be positive")
    if kind == "psd":
        s = m["psd"]
        if not _positive(s["dt"]):
            errors.append("psd.dt: must be positive")
        if not (_int_at_least(s["n_points"], 2) and _int_at_least(s["segment_length"], 2)):
            errors.append("psd.n_points and psd.segment_length must be integers >= 2")
        elif s["segment_length"] > s["n_points"]:
            errors.append("psd.segment_length: longer than psd.n_points")
        if not (_int_at_least(s["overlap"], 0) and s["overlap"] < s["segment_length"]):
            errors.append("psd.overlap: must be in [0, segment_length)")
    if kind == "smi-scan":
        s = m["smi"]
        if not _int_at_least(s["e_max"], 2):
            errors.append("smi.e_max: must be an integer >= 2")
        _check_lag(errors, "smi.tau_min", s["tau_min"], dt)
        _check_lag(errors, "smi.tau_max", s["tau_max"], dt)
        if s["source"] not in ("x", "y", "z") or s["target"] not in ("x", "y", "z"):
            errors.append("smi.source/target: must be x, y or z")
        if not _int_at_least(s["n_points"], 100):
            errors.append("smi.n_points: must be an integer >= 100")
    return errors


def validate(manifest: dict) -> list[str]:
    """All problems with ``manifest``; an empty list means it is runnable."""
    resolved, errors = resolve(manifest)
    if not resolved:
        return errors
    try:
        errors += _semantic_errors(resolved)
    except (TypeError, KeyError) as exc:
        errors.append(f"malformed value: {exc}")
    return errors


def validate_file(path) -> list[str]:
    try:
        manifest = load_manifest(path)
    except ManifestError as exc:
        return exc.errors
    except (OSError, yaml.YAMLError) as exc:
        return [f"{path}: {exc}"]
    return validate(manifest)


# --- helpers ----------------------------------------------------------------

def _campaign_config(m: dict) -> CampaignConfig:
    p, e, g = m["plant"], m["embedding"], m["gp"]
    c = m.get("control", {})
    gp = GpConfig(length_scale=g["length_scale"], signal_variance=g["signal_variance"],
                  noise_variance=g["noise_variance"], optimize=g["optimize"],
                  length_scale_bounds=tuple(g["length_scale_bounds"]),
                  signal_variance_bounds=tuple(g["signal_variance_bounds"]),
                  noise_variance_bounds=tuple(g["noise_variance_bounds"]),
                  n_restarts=g["n_restarts"])
    kwargs = {}
    if c:
        kwargs = dict(bounds={k: tuple(v) for k, v in c["bounds"].items()},
                      hidden=dict(c["hidden"]), n_prior=c["n_prior"],
                      n_iterations=c["n_iterations"], xi=c["xi"], stop_std=c["stop_std"])
    return CampaignConfig(reference=SystemParams(**m["reference"]), tau=e["tau"], bins=e["bins"],
                          padding=e["padding"], dt=p["dt"], n_keep=p["n_keep"],
                          n_discard=p["n_discard"], initial=State(*p["initial"]),
                          seed=m["seed"], gp=gp, **kwargs)


def _fmt(v) -> str:
    if isinstance(v, (str, bool)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_bytes(columns: dict) -> bytes:
    names = list(columns)
    cols = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n] for n in names]
    n = len(cols[0]) if cols else 0
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(n):
        w.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue().encode("utf-8")


def _versions() -> dict:
    import numba
    import ot
    import scipy
    return {"lorenz_ilc": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pot": ot.__version__,
            "pyyaml": yaml.__version__}


def config_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def characteristic_period(z, dt: float) -> float:
    """Period of the most prominent spectral peak of ``z``."""
    seg = len(z) if len(z) < 20_000 else len(z) // 10
    ps = welch_psd(z, dt, seg)
    peaks = spectral_peaks(ps, 2 * ps.df, 0.5 / dt, smooth_bins=3)
    f_peak = peaks[0][0] if peaks else ps.frequencies[1 + int(np.argmax(ps.power[1:]))]
    return 1.0 / f_peak


def _timescales(cfg: CampaignConfig, reference_z, n_actuations: int) -> dict:
    period = characteristic_period(reference_z, cfg.dt)
    return {"actuation_interval": cfg.actuation_interval, "plant_period": period,
            "separation_ratio": cfg.actuation_interval / period,
            "actuations": n_actuations,
            "simulated_time": n_actuations * cfg.actuation_interval}


# --- experiment kinds ---------------------------------------------------------

def _run_trajectory(m):
    cfg = _campaign_config(m)
    s = m["step"]
    dt = cfg.dt
    n_before = int(round(s["t_before"] / dt))
    n_after = int(round(s["t_after"] / dt))
    before = integrate(PlantRunSpec(params=cfg.reference, initial=cfg.initial, dt=dt,
                                    n_keep=n_before + 1, n_discard=cfg.n_discard))
    stepped = cfg.reference.with_values(**{s["parameter"]: s["value"]})
    after = integrate(PlantRunSpec(params=stepped, initial=before.final_state, dt=dt,
                                   n_keep=n_after + 1, n_discard=0))
    samples = np.vstack([before.samples[:-1], after.samples])
    t = dt * np.arange(-n_before, n_after + 1)
    pvals = np.where(t < 0, getattr(cfg.reference, s["parameter"]), s["value"])
    fig2 = {"t": t, "x": samples[:, 0], "y": samples[:, 1], "z": samples[:, 2], s["parameter"]: pvals}

    x_after = after.x
    flips = np.flatnonzero(np.diff(np.sign(x_after)) != 0)
    commit = float((flips[-1] + 1) * dt) if flips.size else 0.0
    summary = {"commit_time": commit}
    p = stepped
    if p.rho > 1:
        # decay of the distance to the fixed point the trajectory commits to
        side = np.sign(x_after[-1]) or 1.0
        c = math.sqrt(p.beta * (p.rho - 1))
        fixed = np.array([side * c, side * c, p.rho - 1])
        dist = np.linalg.norm(after.samples - fixed, axis=1)
        start = int(round(commit / dt))
        # fit the linear decay regime: after the last lobe switch, above the integrator's error floor
        t_rel = np.arange(len(dist)) * dt
        window = (np.arange(len(dist)) >= start) & (dist < 1.0) & (dist > 1e-3)
        if window.sum() >= 10:
            slope = np.polyfit(t_rel[window], np.log(dist[window]), 1)[0]
            summary["efold_time"] = -1.0 / slope if slope < 0 else math.inf
            summary["settle_time"] = commit + summary["efold_time"]
    summary["fast_period"] = characteristic_period(before.z, dt)
    results = {"quantity": list(summary), "value": list(summary.values())}
    return {"fig2.csv": fig2}, results, summary


def _run_tlpp(m):
    cfg = _campaign_config(m)
    ref = build_reference(cfg)
    pts = embed(ref.trajectory.x, [cfg.tau], cfg.dt).points
    n_show = min(m["tlpp"]["n_show"], len(pts))
    grid = ref.grid
    ix, iy = np.meshgrid(np.arange(grid.bins[0]), np.arange(grid.bins[1]), indexing="ij")
    cx, cy = np.meshgrid(grid.centers(0), grid.centers(1), indexing="ij")
    fig4b = {"ix": ix.ravel(), "iy": iy.ravel(), "x_center": cx.ravel(), "y_center": cy.ravel(),
             "count": ref.pdf.counts.ravel()}
    fig4a = {"x_t": pts[:n_show, 0], "x_t_plus_tau": pts[:n_show, 1]}
    summary = {"total_mass": ref.pdf.total_mass, "occupied_cells": int((ref.pdf.counts > 0).sum()),
               "grid_lower": list(grid.lower), "grid_upper": list(grid.upper)}
    return {"fig4a.csv": fig4a, "fig4b.csv": fig4b}, fig4b, summary


def _floor_summary(floor):
    return {"floor_mean": floor.mean, "floor_std": floor.std, "floor": floor.floor,
            "log10_floor": floor.log10_floor, "s_over_mu": floor.std / floor.mean}


def _run_sweep(m):
    cfg = _campaign_config(m)
    s = m["sweep"]
    ref = build_reference(cfg)
    values = np.linspace(s["start"], s["stop"], s["num"])
    data = parameter_sweep(cfg, s["parameter"], values, reference=ref, carry_over=s["carry_over"])
    table = {s["parameter"]: data[:, 0], "emd": data[:, 1],
             "log10_emd": np.log10(np.maximum(data[:, 1], cfg.emd_floor))}
    i = int(np.argmin(data[:, 1]))
    summary = {"argmin": float(data[i, 0]), "min_emd": float(data[i, 1])}
    f = m["floor"]
    if f["n_runs"]:
        floor = confidence_floor(cfg, f["n_runs"], f["perturbation"], f["carry_over"], reference=ref)
        summary.update(_floor_summary(floor))
    summary["timescales"] = _timescales(cfg, ref.trajectory.z, len(values) + 1)
    return {"fig5a.csv": table}, table, summary


def _run_floor(m):
    cfg = _campaign_config(m)
    f = m["floor"]
    ref = build_reference(cfg)
    floor = confidence_floor(cfg, f["n_runs"], f["perturbation"], f["carry_over"], reference=ref)
    results = {"run": np.arange(len(floor.samples)), "emd": floor.samples}
    counts, edges = np.histogram(floor.samples, bins=f["hist_bins"])
    fig6 = {"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts}
    summary = _floor_summary(floor)
    summary["timescales"] = _timescales(cfg, ref.trajectory.z, f["n_runs"] + 1)
    return {"fig6.csv": fig6}, results, summary


def _history_table(result: CampaignResult) -> dict:
    names = result.config.space.names
    h = result.history
    table = {"index": [r.index for r in h], "source": [r.source for r in h]}
    for k, n in enumerate(names):
        table[n] = [r.params[k] for r in h]
    table["emd"] = [r.emd for r in h]
    table["log10_emd"] = [r.log10_emd for r in h]
    table["failed"] = [int(r.failed) for r in h]
    table["best_so_far"] = np.minimum.accumulate(
        np.where(np.isnan(table["log10_emd"]), np.inf, table["log10_emd"]))
    return table


def _campaign_summary(result: CampaignResult) -> dict:
    names = result.config.space.names
    model = result.model
    return {"best_guess": dict(zip(names, map(float, result.best_guess))),
            "best_observed": dict(zip(names, result.best_observed.params)),
            "best_observed_log10_emd": result.best_observed.objective,
            "length_scales": model.length_scales.tolist(),
            "signal_variance": model.signal_variance, "noise_variance": model.noise_variance,
            "timescales": _timescales(result.config, result.reference.trajectory.z,
                                      len(result.history) + 1)}


def _run_campaign_1d(m):
    cfg = _campaign_config(m)
    out = m["output"]
    result = run_campaign(cfg)
    name = cfg.space.names[0]
    space = cfg.space
    grid = np.linspace(space.lower[0], space.upper[0], out["n_curve"])
    u = space.normalize(grid[:, None])

    # GP snapshots after the priors and after each of the first iterations
    obs = [Observation((r.params[0],), r.log10_emd) for r in result.history if not r.failed]
    fig7 = {"snapshot": [], name: [], "mu": [], "std": []}
    points = {"snapshot": [], name: [], "log10_emd": []}
    for snap in range(out["n_snapshots"]):
        n_obs = cfg.n_prior + snap
        if n_obs > len(obs):
            break
        model = fit(obs[:n_obs], space, cfg.gp)
        mu, std = model.predict_normalized(u)
        fig7["snapshot"] += [snap] * len(grid)
        fig7[name] += grid.tolist()
        fig7["mu"] += mu.tolist()
        fig7["std"] += std.tolist()
        points["snapshot"] += [snap] * n_obs
        points[name] += [o.params[0] for o in obs[:n_obs]]
        points["log10_emd"] += [o.objective for o in obs[:n_obs]]
    tables = {"fig7.csv": fig7, "fig7_points.csv": points}
    if out["true_curve_points"]:
        sweep_vals = np.linspace(space.lower[0], space.upper[0], out["true_curve_points"])
        data = parameter_sweep(cfg, name, sweep_vals, reference=result.reference)
        true_obs = [Observation((v,), math.log10(max(d, cfg.emd_floor))) for v, d in data]
        true_model = fit(true_obs, space, cfg.gp)
        tables["fig7_true.csv"] = {name: grid, "mu": true_model.predict_normalized(u)[0]}

    mu, std = result.model.predict_normalized(u)
    panel = {"sigma": "fig8a", "rho": "fig8b", "beta": "fig8c"}[name]
    tables[f"{panel}.csv"] = {name: grid, "mu": mu, "std": std}
    return tables, _history_table(result), _campaign_summary(result)


def _run_campaign_2d(m, figure):
    cfg = _campaign_config(m)
    out = m["output"]
    result = run_campaign(cfg)
    space = cfg.space
    n = out["n_map"]
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(space.lower, space.upper)]
    A, B = np.meshgrid(*axes, indexing="ij")
    mu, std = result.model.predict_normalized(space.normalize(np.column_stack([A.ravel(), B.ravel()])))
    n0, n1 = space.names
    tables = {f"{figure}.csv": {n0: A.ravel(), n1: B.ravel(), "mu": mu, "std": std}}
    summary = _campaign_summary(result)
    f = m["floor"]
    if f["n_runs"]:
        floor = confidence_floor(cfg, f["n_runs"], f["perturbation"], f["carry_over"],
                                 reference=result.reference)
        summary.update(_floor_summary(floor))
        summary["thresholds"] = {str(k): v for k, v in similarity_thresholds(floor).items()}
    if out["oracle_grid"]:
        oaxes, emds = grid_scan(cfg, out["oracle_grid"], reference=result.reference)
        OA, OB = np.meshgrid(*oaxes, indexing="ij")
        tables[f"{figure}_oracle.csv"] = {n0: OA.ravel(), n1: OB.ravel(), "emd": emds.ravel()}
        summary["oracle_min_emd"] = float(emds.min())
        if "thresholds" in summary:
            anchor = [getattr(cfg.reference, nm) for nm in space.names]
            region = similarity_map(oaxes, emds, summary["thresholds"]["3"], anchor)
            summary["best_guess_in_region"] = region.contains(result.best_guess)
    return tables, _history_table(result), summary


def _run_psd(m):
    s = m["psd"]
    cfg = _campaign_config(m)
    traj = integrate(PlantRunSpec(params=cfg.reference, initial=cfg.initial, dt=s["dt"],
                                  n_keep=s["n_points"], n_discard=s["n_discard"]))
    signals = {"x": traj.x, "y": traj.y, "z": traj.z, "abs_x": np.abs(traj.x), "abs_y": np.abs(traj.y)}
    del traj
    fig = {}
    peaks = {"signal": [], "rank": [], "frequency": [], "prominence": []}
    summary = {}
    for key, sig in signals.items():
        ps = welch_psd(sig, s["dt"], s["segment_length"], s["overlap"])
        keep = ps.frequencies <= s["fmax"]
        if not fig:
            fig["frequency"] = ps.frequencies[keep]
        fig[f"psd_{key}"] = ps.power[keep]
        found = spectral_peaks(ps, 0.2, s["fmax"], s["smooth_bins"])[:5]
        for r, (fr, pr) in enumerate(found):
            peaks["signal"].append(key)
            peaks["rank"].append(r)
            peaks["frequency"].append(fr)
            peaks["prominence"].append(pr)
        ratio, at = peak_to_background(ps, 0.2, s["fmax"], s["smooth_bins"])
        summary[key] = {"peak_to_background": ratio, "at": at,
                        "peaks": [fr for fr, _ in found[:2]]}
    return {"fig11a.csv": fig}, peaks, summary


def _run_phase(m):
    s = m["phase"]
    cfg = _campaign_config(m)
    traj = integrate(PlantRunSpec(params=cfg.reference, initial=cfg.initial, dt=cfg.dt,
                                  n_keep=s["n_points"], n_discard=cfg.n_discard))
    phase = hilbert_phase(traj.x)
    n = min(s["n_show"], len(phase))
    fig = {"t": traj.times[:n], "x": traj.x[:n], "phase": phase[:n]}
    lobe = np.sign(traj.x)
    agree = float(np.mean(np.sign(np.cos(phase)) == lobe))
    summary = {"lobe_agreement": agree,
               "lobe_switches": int(np.count_nonzero(np.diff(lobe[lobe != 0]) != 0))}
    results = {"quantity": list(summary), "value": list(summary.values())}
    return {"fig11b.csv": fig}, results, summary


def _run_smi(m):
    s = m["smi"]
    cfg = _campaign_config(m)
    traj = integrate(PlantRunSpec(params=cfg.reference, initial=cfg.initial, dt=cfg.dt,
                                  n_keep=s["n_points"], n_discard=s["n_discard"]))
    col = {"x": 0, "y": 1, "z": 2}
    src, tgt = traj.samples[:, col[s["source"]]], traj.samples[:, col[s["target"]]]
    lo, hi = lag_index(s["tau_min"], cfg.dt), lag_index(s["tau_max"], cfg.dt)
    taus = np.arange(lo, hi + 1) * cfg.dt
    scan = greedy_tau_scan(src, tgt, cfg.dt, s["e_max"], taus, s["n_neighbors"])
    fig12a = {"tau": taus}
    for e, curve in scan.curves.items():
        fig12a[f"pearson_E{e}"] = curve
    rec = smi_reconstruct(src, tgt, scan.best_lags[2][:1], cfg.dt, s["n_neighbors"])
    fig12b = {"t": traj.times[rec.times], "target": tgt[rec.times], "reconstructed": rec.reconstructed}
    results = {"E": list(scan.best_lags), "lags": [" ".join(map(repr, scan.best_lags[e])) for e in scan.best_lags],
               "pearson": [scan.best_pearson[e] for e in scan.best_lags]}
    summary = {"best_lags": {str(e): list(v) for e, v in scan.best_lags.items()},
               "best_pearson": {str(e): v for e, v in scan.best_pearson.items()}}
    return {"fig12a.csv": fig12a, "fig12b.csv": fig12b}, results, summary


_RUNNERS: dict[str, Callable] = {
    "trajectory": _run_trajectory,
    "tlpp": _run_tlpp,
    "sweep": _run_sweep,
    "floor": _run_floor,
    "campaign-1d": _run_campaign_1d,
    "campaign-2d": lambda m: _run_campaign_2d(m, "fig9"),
    "campaign-robust": lambda m: _run_campaign_2d(m, "fig10"),
    "psd": _run_psd,
    "phase": _run_phase,
    "smi-scan": _run_smi,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_manifest(manifest: dict, out_dir, seed: int | None = None) -> dict:
    """Validate and run ``manifest``, writing its outputs into ``out_dir``.

    Files are staged in a temporary directory and moved into place only
    after the experiment finishes, so a failure leaves nothing behind.
    Returns the metadata record.

    Raises
    ------
    ManifestError
        If the manifest does not validate.
    """
    manifest = copy.deepcopy(manifest)
    if seed is not None:
        manifest["seed"] = seed
    errors = validate(manifest)
    if errors:
        raise ManifestError(errors)
    resolved, _ = resolve(manifest)
    name = resolved["name"]
    out_dir = Path(out_dir)

    started = time.perf_counter()
    tables, results, summary = _RUNNERS[resolved["experiment"]](resolved)
    wall = time.perf_counter() - started

    files = {f"{name}_results.csv": _csv_bytes(results)}
    files.update({fname: _csv_bytes(cols) for fname, cols in tables.items()})
    metadata = {
        "experiment": resolved["experiment"],
        "figures": COVERAGE[resolved["experiment"]][0],
        "seed": resolved["seed"],
        "config_hash": config_hash(resolved),
        "manifest": resolved,
        "versions": _versions(),
        "wall_time_s": wall,
        "summary": summary,
        "outputs": sorted(files) + [f"{name}_metadata.json"],
    }
    files[f"{name}_metadata.json"] = (json.dumps(_jsonable(metadata), indent=2, sort_keys=True) + "\n").encode()

    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        for fname, blob in files.items():
            (staging / fname).write_bytes(blob)
        for fname in files:
            os.replace(staging / fname, out_dir / fname)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return _jsonable(metadata)


def coverage_table() -> str:
    width = max(map(len, KINDS))
    lines = [f"{'experiment'.ljust(width)}  figures            analysis"]
    for kind, (figs, what) in COVERAGE.items():
        lines.append(f"{kind.ljust(width)}  {figs.ljust(17)}  {what}")
    return "\n".join(lines)
