from .solver import (
    DualReport,
    LambdaStarEstimate,
    OdePath,
    SolveConfig,
    SolveReport,
    TiltedSolutionRead,
)

__all__ = [
    "DualReport",
    "LambdaStarEstimate",
    "OdePath",
    "SolveConfig",
    "SolveReport",
    "TiltedSolutionRead",
]
