"""Random forest regressor for small-integer features.

Trees are exact-SSE CART grown by the kernel backend on bootstrap resamples.
Out-of-bag predictions are tracked during fitting; they feed the residual
bank, where in-sample residuals would be optimistically small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyInputError

N_TREES = 50
MIN_LEAF = 5


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        return _kernels.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )


@dataclass
class Forest:
    trees: list[Tree]
    n_bins: int
    min_leaf: int
    seed: int | None = None
    # aligned to the training rows; NaN where a row was never out-of-bag
    oob_prediction: np.ndarray | None = field(default=None, repr=False)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.int64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def fit_forest(
    X,
    y,
    n_trees: int = N_TREES,
    min_leaf: int = MIN_LEAF,
    seed: int | None = None,
    track_oob: bool = True,
) -> Forest:
    """Fit a bagged CART forest; bootstrap sample size equals the data size.

    All features are considered at every split and depth is unlimited; the
    only stopping rules are the min_leaf row count and zero SSE improvement.
    """
    X = np.ascontiguousarray(X, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.size
    if n == 0:
        raise EmptyInputError("forest training needs at least one row")
    if X.min() < 0:
        raise ValueError("features must be nonnegative integers")
    n_bins = int(X.max()) + 1

    rng = np.random.default_rng(seed)
    trees = []
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n, dtype=np.int64)
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n)
        tree = Tree(*_kernels.grow_tree(X[idx], y[idx], n_bins, min_leaf))
        trees.append(tree)
        if track_oob:
            out = np.ones(n, dtype=bool)
            out[idx] = False
            rows = np.nonzero(out)[0]
            if rows.size:
                oob_sum[rows] += tree.predict(X[rows])
                oob_cnt[rows] += 1

    oob = None
    if track_oob:
        with np.errstate(invalid="ignore"):
            oob = np.where(oob_cnt > 0, oob_sum / np.maximum(oob_cnt, 1), np.nan)
    return Forest(trees, n_bins, min_leaf, seed, oob)
