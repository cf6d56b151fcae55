"""Point location with randomized linear decision trees.

Labels a finite point set against a hidden hyperplane using adaptive sign
queries: margin-oracle simulation, isotropic transforms, structure search,
dimensionality reduction, threshold inference, boosting, and a zero-error
verification pipeline, plus the benchmark harness driving them.
"""

__version__ = "0.1.0"

from .config import DEFAULT_CONFIG, EngineConfig
from .geometry import (
    Hyperplane,
    MarginOracleConfig,
    PartialLabeling,
    QueryOracle,
    WeightedPointSet,
)
from .instances import InstanceSpec, gen_instance
from .learners import active_learn_halfspace, boost, partial_learn, weak_learn
from .verification import zero_error_locate

__all__ = [
    "DEFAULT_CONFIG",
    "EngineConfig",
    "Hyperplane",
    "MarginOracleConfig",
    "PartialLabeling",
    "QueryOracle",
    "WeightedPointSet",
    "InstanceSpec",
    "gen_instance",
    "active_learn_halfspace",
    "boost",
    "partial_learn",
    "weak_learn",
    "zero_error_locate",
]
