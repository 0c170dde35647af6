"""Soil moisture retrieval from multiband (P/L/C) SAR reflectivity.

The package couples a semi-empirical backscatter model with two neural
inverters: one for bare or low-crop soil (all three bands) and one for
vegetated surfaces (P and L only). A linear model of crop height from P-
and L-band reflectivity decides which inverter handles each pixel.
"""

from .calibration import HeightLinearModel, HeightLmCoeffs, estimate_height, fit_height_lm
from .dubois import BANDS_CM, DuboisConstants, SceneParams, forward_db, forward_linear
from .mlp import Mlp, MLPRegressorLM, MlpSpec, load_mlp, save_mlp
from .pipeline import (
    Branch,
    RetrievalModel,
    SoilMoistureRetriever,
    estimate_point,
    estimate_raster,
    evaluate,
    load_bundle,
    save_bundle,
)
from .raster import Raster, read_asc, write_asc
from .soil import dielectric_from_moisture, moisture_from_dielectric
from .synth import SampleSet, Scenario, generate

__version__ = "0.1.0"

__all__ = [
    "BANDS_CM",
    "Branch",
    "DuboisConstants",
    "HeightLinearModel",
    "HeightLmCoeffs",
    "MLPRegressorLM",
    "Mlp",
    "MlpSpec",
    "Raster",
    "RetrievalModel",
    "SampleSet",
    "Scenario",
    "SceneParams",
    "SoilMoistureRetriever",
    "dielectric_from_moisture",
    "estimate_height",
    "estimate_point",
    "estimate_raster",
    "evaluate",
    "fit_height_lm",
    "forward_db",
    "forward_linear",
    "generate",
    "load_bundle",
    "load_mlp",
    "moisture_from_dielectric",
    "read_asc",
    "save_bundle",
    "save_mlp",
    "write_asc",
]
