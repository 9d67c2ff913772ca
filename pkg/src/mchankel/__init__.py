"""Multi-channel time-series recovery through low-rank block Hankel lifts."""

from .completion import FihtConfig, RunRecord, am_fiht, ram_fiht, rel_err_unobserved
from .hankel_core import (
    HankelGeometry,
    HankelOperator,
    RankRFactors,
    TangentMatrix,
    hankel_lift,
    hankel_matvec,
    hankel_pinv,
    hankel_rmatvec,
    partial_svd,
    tangent_project,
    truncate_rank,
)
from .robust import SapConfig, SparseEstimate, sap
from .sampling import CorruptionSpec, ObservationMask, corrupt, partition, project, sample_mask
from .signal_gen import MultiChannelSignal, SpectralParams, gen_lds, gen_spectral, incoherence

__version__ = "0.1.0"

__all__ = [
    "HankelGeometry",
    "HankelOperator",
    "RankRFactors",
    "TangentMatrix",
    "hankel_lift",
    "hankel_pinv",
    "hankel_matvec",
    "hankel_rmatvec",
    "tangent_project",
    "truncate_rank",
    "partial_svd",
    "MultiChannelSignal",
    "SpectralParams",
    "gen_spectral",
    "gen_lds",
    "incoherence",
    "ObservationMask",
    "CorruptionSpec",
    "sample_mask",
    "corrupt",
    "partition",
    "project",
    "FihtConfig",
    "RunRecord",
    "am_fiht",
    "ram_fiht",
    "rel_err_unobserved",
    "SapConfig",
    "SparseEstimate",
    "sap",
]
