"""Simulation, demosaicking and design optimization for snapshot multispectral
and spectral-polarization filter arrays."""

from .classic import BandSampling, demosaic_bilinear, demosaic_interband, demosaic_ppi
from .core import (
    FilterArrayPattern,
    MosaickedImage,
    MultispectralImage,
    PolarizedFilterBank,
    SensitivityMatrix,
    SpectralGrid,
    StokesCube,
    default_grid,
    psnr,
    rmse,
    spectral_angle,
    validate,
)
from .forward import (
    NoiseSpec,
    build_system_matrix,
    mosaic_adjoint,
    mosaic_apply,
    polarized_mosaic,
    polarized_system_matrix,
)
from .optimize import OptimizerConfig, optimize_sensitivity, random_init_sensitivity
from .patterns import annd, optimize_pattern, preset_pattern
from .recovery import (
    VtvConfig,
    WienerModel,
    demosaic_vtv,
    recover_spectrum_nonpolarized,
    recover_stokes,
    wiener_apply,
    wiener_train,
)

__version__ = "0.1.0"

__all__ = [
    "BandSampling",
    "FilterArrayPattern",
    "MosaickedImage",
    "MultispectralImage",
    "NoiseSpec",
    "OptimizerConfig",
    "PolarizedFilterBank",
    "SensitivityMatrix",
    "SpectralGrid",
    "StokesCube",
    "VtvConfig",
    "WienerModel",
    "annd",
    "build_system_matrix",
    "default_grid",
    "demosaic_bilinear",
    "demosaic_interband",
    "demosaic_ppi",
    "demosaic_vtv",
    "mosaic_adjoint",
    "mosaic_apply",
    "optimize_pattern",
    "optimize_sensitivity",
    "polarized_mosaic",
    "polarized_system_matrix",
    "preset_pattern",
    "psnr",
    "random_init_sensitivity",
    "recover_spectrum_nonpolarized",
    "recover_stokes",
    "rmse",
    "spectral_angle",
    "validate",
    "wiener_apply",
    "wiener_train",
]
