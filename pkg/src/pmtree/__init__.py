"""Wildcard and subset search structures compiled from randomized protocols."""

from .bits import (
    BitVector,
    CoordDomain,
    Dataset,
    TernaryPattern,
    match_pm,
    subset_of,
)
from .dist import EMPTY_SUPPORT, EmpiricalDistribution, EmptySupport
from .engine import (
    Message,
    Player,
    ProtocolParams,
    RandomTape,
    Stream,
    Tapes,
    Transcript,
    derive_params,
)

__all__ = [
    "BitVector",
    "CoordDomain",
    "Dataset",
    "TernaryPattern",
    "match_pm",
    "subset_of",
    "EMPTY_SUPPORT",
    "EmptySupport",
    "EmpiricalDistribution",
    "Message",
    "Player",
    "ProtocolParams",
    "RandomTape",
    "Stream",
    "Tapes",
    "Transcript",
    "derive_params",
]

__version__ = "0.1.0"
