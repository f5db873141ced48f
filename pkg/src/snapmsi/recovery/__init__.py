"""Model-based recovery: trained Wiener estimation, VTV reconstruction, Stokes recovery."""

from .stokes import project_to_cone, recover_spectrum_nonpolarized, recover_stokes, train_stokes_wiener
from .vtv import VtvConfig, VtvResult, demosaic_vtv, vtv
from .wiener import WienerModel, wiener_apply, wiener_train

__all__ = [
    "VtvConfig",
    "VtvResult",
    "WienerModel",
    "demosaic_vtv",
    "project_to_cone",
    "recover_spectrum_nonpolarized",
    "recover_stokes",
    "train_stokes_wiener",
    "vtv",
    "wiener_apply",
    "wiener_train",
]
