"""Numeric kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. Set the environment variable ``SKYCOUNT_PURE=1`` before
import to force the fallback (useful for benchmarking and debugging). Both
backends implement the same functions with identical semantics.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("SKYCOUNT_PURE"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND


def polyline_min_dist(points, vertices):
    points = np.ascontiguousarray(points, dtype=np.float64)
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    return _impl.polyline_min_dist(points, vertices)


def iou_matrix(rects_a, rects_b):
    rects_a = np.ascontiguousarray(rects_a, dtype=np.float64)
    rects_b = np.ascontiguousarray(rects_b, dtype=np.float64)
    return _impl.iou_matrix(rects_a, rects_b)


def grow_tree(X, y, n_bins, min_leaf):
    X = np.ascontiguousarray(X, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    return _impl.grow_tree(X, y, int(n_bins), int(min_leaf))


def predict_tree(feature, threshold, left, right, value, X):
    X = np.ascontiguousarray(X, dtype=np.int64)
    return _impl.predict_tree(feature, threshold, left, right, value, X)
