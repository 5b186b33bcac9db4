"""Visibility graph analysis with HyperLogLog-based all-pairs depth estimates."""

import os

# the bundled TBB is too old for numba; pick OpenMP or the built-in workqueue
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"
