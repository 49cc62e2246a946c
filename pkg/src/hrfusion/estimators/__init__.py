"""Target AoA estimators: fused ML (alternating projection), fused subspace, naive MUSIC."""
from .common import EstimateResult, ProjectedRatio
from .fml import (
    alternating_projection,
    fml_estimate,
    fml_initialize,
    fml_phase1_user_update,
    fml_phase2_target_update,
    fused_objective,
)
from .fused import (
    dl_null_projector,
    fused_subspace_estimate,
    g_spectrum,
    h_spectrum,
    target_subspace,
    user_nulling_projector,
)
from .music import SampledSpectrum, average_covariance, music_spectrum, naive_music

__all__ = [
    "EstimateResult",
    "ProjectedRatio",
    "SampledSpectrum",
    "alternating_projection",
    "average_covariance",
    "dl_null_projector",
    "fml_estimate",
    "fml_initialize",
    "fml_phase1_user_update",
    "fml_phase2_target_update",
    "fused_objective",
    "fused_subspace_estimate",
    "g_spectrum",
    "h_spectrum",
    "music_spectrum",
    "naive_music",
    "target_subspace",
    "user_nulling_projector",
]
