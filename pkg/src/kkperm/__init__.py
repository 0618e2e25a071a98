"""Analytic permutation-test p-values.

Sub-Gaussian tail bounds for permutation statistics of scalars, vectors,
curves and covariance operators, calibrated to near-uniform null p-values
with beta transforms, plus a Monte-Carlo and exact permutation oracle.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CalibrationError,
    DegenerateDataError,
    DomainError,
    KKPermError,
    NumericError,
    ParseError,
    SizeError,
    UnsupportedDesignError,
)
from .linalg import GridCurve, NormSpec  # noqa: E402
from .bounds import BoundConfig, SampleSplit, TestStatistic  # noqa: E402
from .specfun import BetaParams  # noqa: E402

__all__ = [
    "__version__",
    "BetaParams",
    "BoundConfig",
    "GridCurve",
    "NormSpec",
    "SampleSplit",
    "TestStatistic",
    "KKPermError",
    "ParseError",
    "DomainError",
    "SizeError",
    "DegenerateDataError",
    "UnsupportedDesignError",
    "CalibrationError",
    "NumericError",
]
