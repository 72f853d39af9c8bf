"""Input validation helpers shared across the pipeline.

These mirror the role of sklearn's ``check_array``: normalize user input to
a known dtype/layout and fail early with a precise message. Raster checks
return a numpy array view or copy; scalar checks return the validated value.
"""

import numbers

import numpy as np

from .errors import InvalidTreeError


def check_positive(value, name, tree_id=None):
    """Validate a strictly positive finite scalar, returning it as float."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise InvalidTreeError(name, value, tree_id=tree_id)
    return float(value)


def check_non_negative(value, name, tree_id=None):
    """Validate a finite scalar >= 0, returning it as float."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise InvalidTreeError(name, value, tree_id=tree_id)
    return float(value)


def check_fraction(value, name, inclusive_low=False, inclusive_high=False):
    """Validate a scalar in the (0, 1) interval, with optional closed ends."""
    low_ok = value >= 0 if inclusive_low else value > 0
    high_ok = value <= 1 if inclusive_high else value < 1
    if not (np.isfinite(value) and low_ok and high_ok):
        lo = "[0" if inclusive_low else "(0"
        hi = "1]" if inclusive_high else "1)"
        raise ValueError(f"{name} must lie in {lo}, {hi}; got {value!r}")
    return float(value)


def check_instance_map(indices):
    """Coerce to a 2-D integer raster of non-negative tree indices."""
    arr = np.asarray(indices)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"instance map must be a non-empty 2-D array; got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("instance map must hold integer indices")
        arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise ValueError("instance map indices must be >= 0 (0 = background)")
    return arr


def check_density_map(values, name="density map"):
    """Coerce to a 2-D float64 raster of finite, non-negative densities."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array; got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0:
        raise ValueError(f"{name} contains negative values")
    return arr


def check_same_shape(a, b, name_a="first raster", name_b="second raster"):
    """Require matching 2-D shapes; returns the common shape."""
    if a.shape != b.shape:
        raise ValueError(
            f"{name_a} shape {a.shape} does not match {name_b} shape {b.shape}"
        )
    return a.shape
