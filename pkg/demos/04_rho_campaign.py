"""Recovering rho from the shape of the attractor alone.

The controller only sees one number per run: the EMD between the current
phase portrait and the reference portrait at rho=28.  Five random priors
and ten guided iterations are usually enough to land near 28.

    python demos/04_rho_campaign.py
"""
import numpy as np

from lorenz_ilc import CampaignConfig, confidence_floor, run_campaign
from lorenz_ilc.controller import build_reference, similarity_thresholds

cfg = CampaignConfig(seed=3)
ref = build_reference(cfg)
print(f"one actuation spans {cfg.actuation_interval:.0f} time units")

floor = confidence_floor(cfg, 50, reference=ref)
print(f"floor: mean {floor.mean:.3g}, std {floor.std:.3g}, log10(mean+std) = {floor.log10_floor:.2f}")
print("similarity thresholds:", {k: round(v, 2) for k, v in similarity_thresholds(floor).items()})

res = run_campaign(cfg, reference=ref)
print("\n #  source       rho    log10 EMD   best so far")
trace = res.best_objective_trace()
for rec, best in zip(res.history, trace):
    print(f"{rec.index:2d}  {rec.source:11s} {rec.params[0]:6.2f}  {rec.log10_emd:9.3f}  {best:9.3f}")
print(f"\nbest guess rho = {res.best_guess[0]:.2f} (model minimum), "
      f"best observed log10 EMD = {res.best_observed.objective:.3f}")
