"""Visual information fidelity under a generalized Gaussian scale mixture model.

Closed-form MGGD entropy and Fisher information, Mardia-kurtosis algebra for
sums of independent vectors, rigorous lower/upper bounds on VIF, a
moment-matched VIF approximation, and Monte Carlo oracles for all of them.
"""
from .errors import (
    DegenerateInputError,
    DimensionError,
    GGSMError,
    InfiniteFisherInformation,
    NotSPDError,
    OracleRefusal,
)
from .infotheory import ChannelParams, MiBound, QualityReport, vif_aggregate
from .kurtosis import EllipticalSummary, MomentSummary, fit_mggd_by_moments
from .mggd import FisherInfo, MggdParams, entropy, fisher_information, log_pdf, sample
from .pipeline import ScoreOptions, score_images

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "DegenerateInputError",
    "DimensionError",
    "EllipticalSummary",
    "FisherInfo",
    "GGSMError",
    "InfiniteFisherInformation",
    "MggdParams",
    "MiBound",
    "MomentSummary",
    "NotSPDError",
    "OracleRefusal",
    "QualityReport",
    "ScoreOptions",
    "entropy",
    "fisher_information",
    "fit_mggd_by_moments",
    "log_pdf",
    "sample",
    "score_images",
    "vif_aggregate",
]
