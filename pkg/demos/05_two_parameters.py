"""Two knobs at once, and a knob we are not allowed to touch.

First sigma and beta are tuned together at the reference rho.  A coarse grid
scan maps the landscape, and the floor-relative similarity region is the
connected low-EMD patch around (10, 8/3).  Then rho is secretly moved to 40:
the controller can no longer reach the reference, and the best it can do is
find the (sigma, beta) pair whose portrait looks closest.

    python demos/05_two_parameters.py          (about a minute)
"""
from dataclasses import replace

import numpy as np

from lorenz_ilc import CampaignConfig, confidence_floor, run_campaign
from lorenz_ilc.controller import build_reference, grid_scan, similarity_map, similarity_thresholds

box = {"sigma": (2.0, 20.0), "beta": (0.5, 5.0)}
cfg = CampaignConfig(bounds=box, n_prior=12, n_iterations=30, n_keep=50_000, n_discard=50_000)
ref = build_reference(cfg)
floor = confidence_floor(cfg, 50, reference=ref)
axes, emds = grid_scan(cfg, 12, reference=ref)
region = similarity_map(axes, emds, similarity_thresholds(floor)[3], [10.0, 8 / 3])
print("similarity region on a 12x12 grid (sigma down, beta across):")
for row in region.region:
    print("  " + "".join("#" if v else "." for v in row))

res = run_campaign(cfg, reference=ref)
print(f"best guess sigma={res.best_guess[0]:.2f} beta={res.best_guess[1]:.2f}, "
      f"inside region: {region.contains(res.best_guess)}")

hidden = replace(cfg, hidden={"rho": 40.0})
res = run_campaign(hidden, reference=ref)
_, grid_emd = grid_scan(hidden, 12, reference=ref)
best = min(r.emd for r in res.history if not r.failed)
print(f"with rho hidden at 40: best observed EMD {best:.3g}, grid minimum {grid_emd.min():.3g}, "
      f"ratio {best / grid_emd.min():.2f}")
print("best guess:", np.round(res.best_guess, 2))
