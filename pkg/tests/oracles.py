"""Independent reference computations the library is checked against.

None of these reuse library code paths: the transport problem goes to a
generic LP solver, the GP posterior is a dense solve with the kernel written
out from its closed form, EI is integrated numerically.
"""
import math

import numpy as np
from scipy import integrate, optimize
from scipy.spatial.distance import cdist
from scipy.stats import norm


def transport_lp(f_counts, g_counts, coords):
    """Optimal transport cost between two mass vectors via the HiGHS LP solver."""
    a = np.asarray(f_counts, dtype=float).ravel()
    b = np.asarray(g_counts, dtype=float).ravel()
    n = a.size
    cost = cdist(coords, coords).ravel()
    rows = np.zeros((n, n * n))
    cols = np.zeros((n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1.0
        cols[i, i::n] = 1.0
    res = optimize.linprog(cost, A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([a, b]),
                           bounds=(0, None), method="highs",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return res.fun


def grid_coords(shape, spacing=1.0):
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    return spacing * np.column_stack([ii.ravel(), jj.ravel()]).astype(float)


def matern52_direct(A, B, length_scales, signal_variance):
    r = cdist(np.atleast_2d(A) / length_scales, np.atleast_2d(B) / length_scales)
    return signal_variance * (1 + math.sqrt(5) * r + 5 * r ** 2 / 3) * np.exp(-math.sqrt(5) * r)


def gp_posterior_direct(X, y, Xq, length_scales, signal_variance, noise_variance):
    """Posterior mean and latent std with explicit inverse-free dense solves.

    Targets are standardized exactly as the library documents (mean removed,
    population std scaled), then mapped back.
    """
    y = np.asarray(y, dtype=float)
    mu, sd = y.mean(), y.std()
    sd = sd if sd > 0 else 1.0
    yn = (y - mu) / sd
    K = matern52_direct(X, X, length_scales, signal_variance) + noise_variance * np.eye(len(X))
    Ks = matern52_direct(Xq, X, length_scales, signal_variance)
    mean = Ks @ np.linalg.solve(K, yn)
    var = signal_variance - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    return mu + sd * mean, sd * np.sqrt(np.maximum(var, 0.0))


def ei_quadrature(mean, std, f_best, xi):
    """E[max(f_best - xi - Y, 0)] for Y ~ N(mean, std^2) by adaptive quadrature."""
    cut = f_best - xi
    if std == 0:
        return max(cut - mean, 0.0)
    lo = min(mean - 12 * std, cut)
    val, _ = integrate.quad(lambda y: (cut - y) * norm.pdf(y, mean, std), lo, cut,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def pearson_direct(a, b):
    n = len(a)
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = math.fsum((x - ma) ** 2 for x in a)
    vb = math.fsum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)
