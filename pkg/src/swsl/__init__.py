"""Learning event detectors jointly from strongly and weakly labeled data.

The main entry points are :func:`swsl.graphswsl.train` (manifold-regularized
least squares with positive-bag constraints, optimized by CCCP) and the
miSVM / naiveSWSL baselines in :mod:`swsl.misvm`.
"""

from swsl.errors import DataError, SolverError

__version__ = "0.1.0"

__all__ = ["DataError", "SolverError", "__version__"]
