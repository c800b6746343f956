"""Feature selection on flow records via L1/L2-regularized logistic regression.

Trains multinomial logistic regression with either penalty, ranks features by
learned coefficient magnitude, intersects the two rankings into a compact
"common" feature set, and validates the selection against decision-tree and
random-forest classifiers.  Everything is seeded and config-driven so a run
can be reproduced byte for byte.
"""

__version__ = "0.1.0"

from .errors import DataError, PipelineError, SolverError

__all__ = ["DataError", "PipelineError", "SolverError", "__version__"]
