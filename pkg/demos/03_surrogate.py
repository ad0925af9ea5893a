"""A Gaussian-process surrogate and the expected-improvement rule.

We fit a handful of noisy evaluations of a one-dimensional bowl, look at the
posterior and ask where the next evaluation should go.

    python demos/03_surrogate.py
"""
import numpy as np

from lorenz_ilc import Observation, ParamSpace, expected_improvement, fit, predict
from lorenz_ilc.surrogate import model_minimum, suggest_next

space = ParamSpace(("rho",), (15.0,), (50.0,))
rng = np.random.default_rng(1)
xs = rng.uniform(15, 50, 6)
ys = 4.5 + 0.01 * (xs - 28) ** 2 + 0.05 * rng.standard_normal(6)
model = fit([Observation((x,), y) for x, y in zip(xs, ys)], space)

print("length scale (unit box):", np.round(model.length_scales, 3),
      " noise variance:", f"{model.noise_variance:.2e}")
print("   rho    mean     std      EI")
for q in np.linspace(15, 50, 8):
    m, s = predict(model, [q])
    print(f"{q:6.1f} {m:7.3f} {s:7.3f} {expected_improvement(model, [q], 0.1):10.2e}")

# xi trades exploitation for exploration: a large value chases uncertainty.
for xi in (0.0, 0.1, 10.0):
    print(f"xi={xi:5.1f} -> next rho {suggest_next(model, xi=xi, rng_seed=0)[0]:.2f}")
print("posterior-mean minimum:", np.round(model_minimum(model), 2))
