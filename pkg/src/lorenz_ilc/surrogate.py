"""Gaussian-process surrogate with expected-improvement acquisition.

Inputs are scaled linearly onto the unit cube and targets are centred and
scaled to unit variance before the GP is fitted; predictions come back in raw
objective units.  The kernel is Matern with smoothness 5/2 and one length
scale per axis.  Hyperparameters (length scales, signal variance, noise
variance) are either held fixed or set by maximising the log marginal
likelihood with multi-start L-BFGS-B.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize, special
from scipy.stats import norm, qmc

__all__ = [
    "TooFewObservations",
    "IllConditioned",
    "OutOfBounds",
    "ParamSpace",
    "Observation",
    "GpConfig",
    "GpModel",
    "matern52",
    "fit",
    "predict",
    "expected_improvement",
    "suggest_next",
    "model_minimum",
]

_SQRT5 = np.sqrt(5.0)
# slack allowed when checking that a query lies inside the box
_BOUND_TOL = 1e-9


class TooFewObservations(ValueError):
    pass


class IllConditioned(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class ParamSpace:
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ValueError("names, lower and upper must have the same length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("parameter names must be unique")
        for n, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"bounds for {n!r} need lower < upper")

    @classmethod
    def from_dict(cls, bounds: dict) -> "ParamSpace":
        names = tuple(bounds)
        return cls(names, tuple(float(bounds[n][0]) for n in names),
                   tuple(float(bounds[n][1]) for n in names))

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def span(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.lower)) / self.span

    def denormalize(self, u) -> np.ndarray:
        return np.asarray(self.lower) + np.asarray(u, dtype=float) * self.span

    def contains(self, x, tol: float = _BOUND_TOL) -> bool:
        u = self.normalize(x)
        return bool(np.all(u >= -tol) and np.all(u <= 1 + tol))


@dataclass(frozen=True)
class Observation:
    params: tuple[float, ...]
    objective: float

    def __post_init__(self):
        if not np.isfinite(self.objective):
            raise ValueError("objective must be finite")


@dataclass(frozen=True)
class GpConfig:
    """Kernel and hyperparameter settings.

    With ``optimize=False`` the fixed values ``length_scale``,
    ``signal_variance`` and ``noise_variance`` are used as given; otherwise
    they are the first start of the marginal-likelihood search.  All are in
    normalized units (unit cube inputs, unit-variance targets).
    """

    length_scale: float | tuple[float, ...] = 0.3
    signal_variance: float = 1.0
    noise_variance: float = 1e-2
    optimize: bool = True
    length_scale_bounds: tuple[float, float] = (1e-2, 1e2)
    signal_variance_bounds: tuple[float, float] = (1e-2, 1e2)
    noise_variance_bounds: tuple[float, float] = (1e-4, 1e1)
    n_restarts: int = 4
    seed: int = 0
    normalize_y: bool = True
    min_observations: int = 2


def matern52(A, B, length_scales, signal_variance) -> np.ndarray:
    """Matern 5/2 covariance between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(A) / length_scales
    B = np.atleast_2d(B) / length_scales
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    r = np.sqrt(np.maximum(d2, 0.0))
    s = _SQRT5 * r
    return signal_variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


@dataclass(frozen=True, eq=False)
class GpModel:
    space: ParamSpace
    observations: tuple[Observation, ...]
    X: np.ndarray            # normalized inputs, shape (n, d)
    y: np.ndarray            # raw targets
    y_mean: float
    y_std: float
    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float
    chol: np.ndarray         # lower Cholesky factor of K + noise*I
    alpha: np.ndarray        # (K + noise*I)^-1 (normalized targets)
    log_marginal_likelihood: float

    @property
    def best_objective(self) -> float:
        return float(self.y.min())

    @property
    def prior_std(self) -> float:
        """Prior standard deviation of the latent function, in raw units."""
        return float(np.sqrt(self.signal_variance) * self.y_std)

    def predict_normalized(self, U) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at unit-cube points ``U``, raw units."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Ks = matern52(U, self.X, self.length_scales, self.signal_variance)
        mean = Ks @ self.alpha
        v = linalg.solve_triangular(self.chol, Ks.T, lower=True)
        var = self.signal_variance - (v * v).sum(0)
        std = np.sqrt(np.maximum(var, 0.0))
        return self.y_mean + self.y_std * mean, self.y_std * std


def _lml_and_grad(theta, X, yn, d2_axes, fit_noise):
    """Negative log marginal likelihood and its gradient in log-hyperparameters."""
    d = X.shape[1]
    ls = np.exp(theta[:d])
    s2 = np.exp(theta[d])
    noise = np.exp(theta[d + 1])
    r2 = (d2_axes / (ls * ls)).sum(-1)
    r = np.sqrt(r2)
    s = _SQRT5 * r
    e = np.exp(-s)
    K0 = (1.0 + s + s * s / 3.0) * e
    n = X.shape[0]
    K = s2 * K0 + noise * np.eye(n)
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = linalg.cho_solve((L, True), yn)
    nll = 0.5 * yn @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * np.log(2 * np.pi)
    Kinv = linalg.cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(theta)
    common = s2 * (5.0 / 3.0) * (1.0 + s) * e
    for k in range(d):
        dK = common * d2_axes[:, :, k] / (ls[k] ** 2)
        grad[k] = -0.5 * np.sum(W * dK)
    grad[d] = -0.5 * np.sum(W * (s2 * K0))
    grad[d + 1] = -0.5 * noise * np.trace(W) if fit_noise else 0.0
    return nll, grad


def fit(observations: Sequence[Observation], space: ParamSpace,
        config: GpConfig = GpConfig()) -> GpModel:
    """Condition a GP on ``observations``.

    Raises
    ------
    TooFewObservations
        If fewer than ``config.min_observations`` observations are given.
    IllConditioned
        With fixed hyperparameters, if repeated inputs carry targets that
        disagree by more than six noise standard deviations, or if the
        covariance matrix cannot be factorized.
    OutOfBounds
        If an observation lies outside ``space``.
    """
    obs = tuple(observations)
    if len(obs) < max(1, config.min_observations):
        raise TooFewObservations(f"need at least {config.min_observations} observations, got {len(obs)}")
    for o in obs:
        if len(o.params) != space.dim:
            raise ValueError("observation dimension does not match the parameter space")
        if not space.contains(o.params):
            raise OutOfBounds(f"observation {o.params} outside parameter bounds")
    X = space.normalize(np.array([o.params for o in obs], dtype=float))
    y = np.array([o.objective for o in obs], dtype=float)
    if config.normalize_y:
        y_mean = float(y.mean())
        y_std = float(y.std())
        if not y_std > 0:
            y_std = 1.0
    else:
        y_mean, y_std = 0.0, 1.0
    yn = (y - y_mean) / y_std

    d = space.dim
    ls0 = np.broadcast_to(np.asarray(config.length_scale, dtype=float), (d,)).copy()
    theta0 = np.concatenate([np.log(ls0), [np.log(config.signal_variance), np.log(config.noise_variance)]])
    diff = X[:, None, :] - X[None, :, :]
    d2_axes = diff * diff

    if config.optimize and len(obs) >= 2:
        bounds = ([tuple(np.log(config.length_scale_bounds))] * d
                  + [tuple(np.log(config.signal_variance_bounds)),
                     tuple(np.log(config.noise_variance_bounds))])
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        rng = np.random.default_rng(config.seed)
        starts = [np.clip(theta0, lo, hi)] + [rng.uniform(lo, hi) for _ in range(config.n_restarts)]
        best = None
        for start in starts:
            res = optimize.minimize(_lml_and_grad, start, args=(X, yn, d2_axes, True),
                                    jac=True, method="L-BFGS-B", bounds=bounds)
            if best is None or res.fun < best.fun:
                best = res
        theta = best.x
    else:
        theta = theta0
        _check_duplicates(X, y, np.sqrt(config.noise_variance) * y_std)

    ls = np.exp(theta[:d])
    s2 = float(np.exp(theta[d]))
    noise = float(np.exp(theta[d + 1]))
    K = matern52(X, X, ls, s2) + noise * np.eye(len(obs))
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditioned("covariance matrix is not positive definite") from exc
    alpha = linalg.cho_solve((L, True), yn)
    lml = -float(_lml_and_grad(theta, X, yn, d2_axes, False)[0])
    for arr in (X, y, ls, L, alpha):
        arr.setflags(write=False)
    return GpModel(space=space, observations=obs, X=X, y=y, y_mean=y_mean, y_std=y_std,
                   length_scales=ls, signal_variance=s2, noise_variance=noise,
                   chol=L, alpha=alpha, log_marginal_likelihood=lml)


def _check_duplicates(X, y, noise_std):
    _, inverse = np.unique(np.round(X, 12), axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    for g in np.unique(inverse):
        vals = y[inverse == g]
        if vals.size > 1 and np.ptp(vals) > 6.0 * noise_std:
            raise IllConditioned("repeated inputs have targets that disagree beyond the noise level")


def predict(model: GpModel, query) -> tuple[float, float]:
    """Posterior mean and standard deviation of the latent objective at ``query`` (raw units)."""
    q = np.asarray(query, dtype=float)
    if q.shape != (model.space.dim,):
        raise ValueError("query dimension does not match the parameter space")
    if not model.space.contains(q):
        raise OutOfBounds(f"query {q} outside parameter bounds")
    mean, std = model.predict_normalized(model.space.normalize(q)[None, :])
    return float(mean[0]), float(std[0])


def _ei(mean, std, f_best, xi):
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = f_best - mean - xi
    out = np.zeros_like(mean)
    ok = std > 0
    z = imp[ok] / std[ok]
    out[ok] = imp[ok] * norm.cdf(z) + std[ok] * norm.pdf(z)
    return np.maximum(out, 0.0)


_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def _log_ei(mean, std, f_best, xi):
    """``log(EI)`` without underflow: ``EI = std * (phi(z) + z Phi(z))``.

    Far in the lower tail ``phi(z) + z Phi(z)`` is written through the
    scaled complementary error function so it keeps its relative accuracy.
    Points with zero ``std`` get ``-inf``.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    out = np.full(mean.shape, -np.inf)
    ok = std > 0
    z = (f_best - mean[ok] - xi) / std[ok]
    log_phi = -0.5 * z * z - _LOG_SQRT_2PI
    # Phi(z) / phi(z) = sqrt(pi/2) * erfcx(-z / sqrt(2))
    ratio = np.sqrt(np.pi / 2) * special.erfcx(-z / np.sqrt(2))
    with np.errstate(divide="ignore"):
        log_h = log_phi + np.log(np.maximum(1.0 + z * ratio, 0.0))
    # for large positive z the ratio form loses nothing, but guard the direct form too
    direct = z * special.ndtr(z) + np.exp(log_phi)
    use_direct = z > -1.0
    log_h[use_direct] = np.log(direct[use_direct])
    out[ok] = np.log(std[ok]) + log_h
    return out


def expected_improvement(model: GpModel, query, xi: float = 0.1) -> float:
    """Expected improvement below the best observed objective, minus margin ``xi``.

    Zero wherever the posterior standard deviation is zero.
    """
    if xi < 0:
        raise ValueError("xi must be non-negative")
    mean, std = predict(model, query)
    return float(_ei(np.array([mean]), np.array([std]), model.best_objective, xi)[0])


def _candidates(dim, n, seed):
    m = int(np.ceil(np.log2(n)))
    return qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]


def _multistart_minimize(fun, dim, seed, n_candidates, n_local, extra_starts=None):
    """Minimize ``fun`` (vectorized over rows of the unit cube) by scan + local polish."""
    cand = _candidates(dim, n_candidates, seed)
    if extra_starts is not None and len(extra_starts):
        cand = np.vstack([np.asarray(extra_starts, dtype=float), cand])
    vals = fun(cand)
    order = np.argsort(vals, kind="stable")
    best_u, best_v = cand[order[0]].copy(), float(vals[order[0]])
    bounds = [(0.0, 1.0)] * dim
    for i in order[:n_local]:
        res = optimize.minimize(lambda u: float(fun(u[None, :])[0]), cand[i],
                                method="L-BFGS-B", bounds=bounds)
        if res.fun < best_v:
            best_u, best_v = np.clip(res.x, 0.0, 1.0), float(res.fun)
    return best_u, best_v


def suggest_next(model: GpModel, space: Optional[ParamSpace] = None, xi: float = 0.1,
                 rng_seed: int = 0, n_candidates: int = 512, n_local: int = 8) -> np.ndarray:
    """Parameter vector (raw units) that maximizes expected improvement."""
    space = space or model.space
    if space != model.space:
        raise ValueError("model was fitted on a different parameter space")
    f_best = model.best_objective

    # log EI has the same maximizer as EI but does not underflow when xi is large
    def neg_ei(U):
        mean, std = model.predict_normalized(U)
        return -np.maximum(_log_ei(mean, std, f_best, xi), -1e300)

    u, _ = _multistart_minimize(neg_ei, space.dim, rng_seed, n_candidates, n_local)
    return space.denormalize(u)


def model_minimum(model: GpModel, space: Optional[ParamSpace] = None, seed: int = 0,
                  n_candidates: int = 1024, n_local: int = 8) -> np.ndarray:
    """Location (raw units) of the lowest posterior mean.

    Training inputs are scanned first, ordered best objective first, so a
    flat posterior resolves to the best observed point.
    """
    space = space or model.space
    if space != model.space:
        raise ValueError("model was fitted on a different parameter space")

    def mean_at(U):
        return model.predict_normalized(U)[0]

    order = np.argsort(model.y, kind="stable")
    u, _ = _multistart_minimize(mean_at, space.dim, seed, n_candidates, n_local,
                                extra_starts=model.X[order])
    return space.denormalize(u)
