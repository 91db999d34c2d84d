"""csabench: cross-dataset generalization benchmarking for drug response
prediction models.

Builds response benchmarks from raw dose-response data, generates
reproducible splits, runs standardized preprocess/train/infer pipelines
across every source x target dataset pair, and aggregates the results into
the G, Ga, Gn, Gna generalization metrics with reports.
"""

from ._fit import BACKEND as FIT_BACKEND

__version__ = "0.1.0"

__all__ = ["FIT_BACKEND", "__version__"]
