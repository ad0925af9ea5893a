"""Plant interface and the Lorenz system.

The Lorenz equations are integrated with an embedded Dormand-Prince 5(4)
pair using the same step-size controller and fourth-order dense output as
``scipy.integrate.solve_ivp(method="RK45")``.  The stepping loop is compiled
with numba because every controller iteration integrates 2000 time units,
which is far too slow through a Python-level right-hand side.

Output is sampled on a uniform grid ``t0 + k*dt`` through the dense-output
interpolant; the first ``n_discard`` samples are thrown away so the retained
``n_keep`` samples are past the transient that follows a parameter change.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

import numba
import numpy as np

__all__ = [
    "DEFAULT_PARAMS",
    "DEFAULT_INITIAL",
    "DEFAULT_DT",
    "DEFAULT_N",
    "RTOL",
    "ATOL",
    "IntegrationFailure",
    "SystemParams",
    "State",
    "Trajectory",
    "PlantRunSpec",
    "Plant",
    "LorenzPlant",
    "lorenz_rhs",
    "integrate",
]

DEFAULT_DT = 0.01
DEFAULT_N = 100_000
RTOL = 1e-6
ATOL = 1e-9


class IntegrationFailure(RuntimeError):
    """The adaptive solver could not advance, or the state blew up."""


@dataclass(frozen=True)
class SystemParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        for name in ("sigma", "rho", "beta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma, self.rho, self.beta], dtype=float)

    def with_values(self, **values: float) -> "SystemParams":
        return replace(self, **{k: float(v) for k, v in values.items()})


@dataclass(frozen=True)
class State:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError("state components must be finite")

    @classmethod
    def from_array(cls, arr) -> "State":
        x, y, z = (float(v) for v in arr)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


DEFAULT_PARAMS = SystemParams()
DEFAULT_INITIAL = State(0.1, 0.2, 0.3)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled plant output.

    ``samples`` has shape ``(n, 3)`` with columns x, y, z.
    """

    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError("samples must have shape (n, 3)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trajectory contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.samples[:, 2]

    @property
    def final_state(self) -> State:
        return State.from_array(self.samples[-1])


@dataclass(frozen=True)
class PlantRunSpec:
    params: SystemParams = DEFAULT_PARAMS
    initial: State = DEFAULT_INITIAL
    dt: float = DEFAULT_DT
    n_keep: int = DEFAULT_N
    n_discard: int = DEFAULT_N
    rtol: float = field(default=RTOL)
    atol: float = field(default=ATOL)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_keep < 1:
            raise ValueError("n_keep must be at least 1")
        if self.n_discard < 0:
            raise ValueError("n_discard must be non-negative")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")

    @property
    def duration(self) -> float:
        """Simulated time covered by one run (discarded plus kept samples)."""
        return (self.n_discard + self.n_keep) * self.dt


class Plant(Protocol):
    """Anything that turns a run spec into a uniformly sampled trajectory."""

    def run(self, spec: PlantRunSpec) -> Trajectory: ...


def lorenz_rhs(state: State, params: SystemParams) -> np.ndarray:
    x, y, z = state.x, state.y, state.z
    return np.array([
        params.sigma * (y - x),
        x * (params.rho - z) - y,
        x * y - params.beta * z,
    ])


# --- compiled Dormand-Prince 5(4) -------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

_OK = 0
_STEP_TOO_SMALL = 1
_NON_FINITE = 2


@numba.njit(cache=True, error_model="numpy")
def _lorenz_f(y, sigma, rho, beta, out):
    out[0] = sigma * (y[1] - y[0])
    out[1] = y[0] * (rho - y[2]) - y[1]
    out[2] = y[0] * y[1] - beta * y[2]


@numba.njit(cache=True, error_model="numpy")
def _rms_norm(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    return np.sqrt(s / v.shape[0])


@numba.njit(cache=True, error_model="numpy")
def _dopri5_uniform(y0, sigma, rho, beta, dt, n_total, n_discard, rtol, atol,
                    A, B, C, E, P):
    n = 3
    out = np.empty((n_total - n_discard, n))
    if n_discard == 0:
        out[0, :] = y0
    next_k = 1
    t_end = (n_total - 1) * dt

    y = y0.copy()
    f = np.empty(n)
    _lorenz_f(y, sigma, rho, beta, f)
    K = np.zeros((7, n))
    y_new = np.empty(n)
    f_new = np.empty(n)
    tmp = np.empty(n)
    err = np.empty(n)
    Q = np.empty((n, 4))

    if n_total == 1:
        return out, _OK, y

    # initial step, following Hairer/Norsett/Wanner as scipy does
    for i in range(n):
        tmp[i] = atol + abs(y[i]) * rtol
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        d0 += (y[i] / tmp[i]) ** 2
        d1 += (f[i] / tmp[i]) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_end)
    for i in range(n):
        y_new[i] = y[i] + h0 * f[i]
    _lorenz_f(y_new, sigma, rho, beta, f_new)
    d2 = 0.0
    for i in range(n):
        d2 += ((f_new[i] - f[i]) / tmp[i]) ** 2
    d2 = np.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    h_abs = min(100 * h0, h1, t_end)
    if not np.isfinite(h_abs):
        return out[:0], _NON_FINITE, y

    t = 0.0
    eps = np.finfo(np.float64).eps
    while t < t_end:
        min_step = 10.0 * abs(np.nextafter(t, np.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        step_accepted = False
        step_rejected = False
        err_norm = 0.0
        h = 0.0
        t_new = 0.0
        while not step_accepted:
            if h_abs < min_step:
                return out[:max(next_k - n_discard, 0)], _STEP_TOO_SMALL, y
            h = h_abs
            t_new = t + h
            if t_new - t_end > 0:
                t_new = t_end
            h = t_new - t
            h_abs = abs(h)

            for i in range(n):
                K[0, i] = f[i]
            for s in range(1, 6):
                for i in range(n):
                    acc = 0.0
                    for j in range(s):
                        acc += A[s, j] * K[j, i]
                    tmp[i] = y[i] + h * acc
                _lorenz_f(tmp, sigma, rho, beta, f_new)
                for i in range(n):
                    K[s, i] = f_new[i]
            for i in range(n):
                acc = 0.0
                for j in range(6):
                    acc += B[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            _lorenz_f(y_new, sigma, rho, beta, f_new)
            for i in range(n):
                K[6, i] = f_new[i]

            finite = True
            for i in range(n):
                if not np.isfinite(y_new[i]):
                    finite = False
            if not finite:
                return out[:max(next_k - n_discard, 0)], _NON_FINITE, y

            for i in range(n):
                acc = 0.0
                for j in range(7):
                    acc += E[j] * K[j, i]
                scale = atol + max(abs(y[i]), abs(y_new[i])) * rtol
                err[i] = h * acc / scale
            err_norm = _rms_norm(err)
            if not np.isfinite(err_norm):
                return out[:max(next_k - n_discard, 0)], _NON_FINITE, y

            if err_norm < 1.0:
                if err_norm == 0.0:
                    factor = _MAX_FACTOR
                else:
                    factor = min(_MAX_FACTOR, _SAFETY * err_norm ** (-1.0 / 5.0))
                if step_rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                step_accepted = True
            else:
                h_abs *= max(_MIN_FACTOR, _SAFETY * err_norm ** (-1.0 / 5.0))
                step_rejected = True

        # dense output on every grid point inside (t, t_new]
        for i in range(n):
            for m in range(4):
                acc = 0.0
                for j in range(7):
                    acc += K[j, i] * P[j, m]
                Q[i, m] = acc
        while next_k < n_total:
            tk = next_k * dt
            if tk > t_new and next_k < n_total - 1:
                break
            if next_k == n_total - 1 and t_new < t_end:
                break
            x = (tk - t) / h
            if x > 1.0:
                x = 1.0
            if next_k >= n_discard:
                row = next_k - n_discard
                for i in range(n):
                    p = x
                    acc = 0.0
                    for m in range(4):
                        acc += Q[i, m] * p
                        p *= x
                    out[row, i] = y[i] + h * acc
            next_k += 1

        t = t_new
        for i in range(n):
            y[i] = y_new[i]
            f[i] = f_new[i]

    return out, _OK, y


def integrate(spec: PlantRunSpec) -> Trajectory:
    """Integrate the Lorenz system for ``n_discard + n_keep`` output samples.

    The first sample is the initial state at ``t = 0``.  The returned
    trajectory holds the last ``n_keep`` samples and starts at
    ``t0 = n_discard * dt``; ``trajectory.final_state`` is the carry-over
    initial condition for the next run.

    Raises
    ------
    IntegrationFailure
        If the step size collapses below the floating point resolution or the
        state becomes non-finite.
    """
    p = spec.params
    n_total = spec.n_discard + spec.n_keep
    samples, status, _ = _dopri5_uniform(
        spec.initial.as_array(), p.sigma, p.rho, p.beta, spec.dt, n_total,
        spec.n_discard, spec.rtol, spec.atol, _A, _B, _C, _E, _P,
    )
    if status == _STEP_TOO_SMALL:
        raise IntegrationFailure(f"required step size fell below machine resolution for {p}")
    if status == _NON_FINITE:
        raise IntegrationFailure(f"state became non-finite for {p}")
    return Trajectory(dt=spec.dt, samples=samples, t0=spec.n_discard * spec.dt)


class LorenzPlant:
    """The Lorenz system behind the generic plant interface."""

    def run(self, spec: PlantRunSpec) -> Trajectory:
        return integrate(spec)
