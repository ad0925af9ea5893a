"""Iterative learning control of a chaotic plant through distributional feedback."""

__version__ = "0.1.0"

from .plant import LorenzPlant, PlantRunSpec, State, SystemParams, Trajectory, integrate
from .embedding import BinnedPdf, GridSpec, bin_points, embed, shared_grid
from .transport import emd, emd_with_plan
from .surrogate import GpConfig, GpModel, Observation, ParamSpace, expected_improvement, fit, predict
from .controller import CampaignConfig, confidence_floor, run_campaign

__all__ = [
    "LorenzPlant", "PlantRunSpec", "State", "SystemParams", "Trajectory", "integrate",
    "BinnedPdf", "GridSpec", "bin_points", "embed", "shared_grid",
    "emd", "emd_with_plan",
    "GpConfig", "GpModel", "Observation", "ParamSpace", "expected_improvement", "fit", "predict",
    "CampaignConfig", "confidence_floor", "run_campaign",
]
