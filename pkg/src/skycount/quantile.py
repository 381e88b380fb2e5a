"""Median (pinball-loss) regression via iteratively reweighted least squares.

The pinball loss is smoothed near zero so the L1-style weights stay bounded;
a small ridge term keeps the normal equations solvable on collinear dummy
designs. Rows sharing a design row may be grouped, which collapses the
per-iteration normal equations from O(n p^2) to O(G p^2).
"""

from __future__ import annotations

import numpy as np

from .errors import SingularFitError

SMOOTH_EPS = 1e-6
RIDGE = 1e-8
LOSS_TOL = 1e-10
MAX_ITER = 200


def pinball_loss(residuals, tau: float) -> float:
    """Sum of rho_tau(u) = u * (tau - 1{u<0}) over the residuals."""
    r = np.asarray(residuals, dtype=np.float64)
    return float(np.sum(np.where(r >= 0, tau * r, (tau - 1.0) * r)))


def fit_quantile_irls(
    design,
    groups,
    y,
    tau: float = 0.5,
    eps: float = SMOOTH_EPS,
    ridge: float = RIDGE,
    tol: float = LOSS_TOL,
    max_iter: int = MAX_ITER,
):
    """Fit coefficients minimizing the pinball loss.

    design: (G, p) matrix of distinct design rows; groups: (n,) row indices
    into design; y: (n,) responses. Pass groups=arange(n) for an ungrouped
    fit. Returns the coefficient vector with the lowest loss seen.
    """
    U = np.asarray(design, dtype=np.float64)
    g = np.asarray(groups, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    n = y.size
    n_grp, p = U.shape
    if n < p:
        raise SingularFitError(f"{n} rows cannot identify {p} coefficients")

    eye = ridge * np.eye(p)

    def solve(weights_g, rhs_g):
        A = (U * weights_g[:, None]).T @ U + eye
        b = U.T @ rhs_g
        try:
            beta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise SingularFitError("normal equations singular despite ridge")
        if not np.all(np.isfinite(beta)):
            raise SingularFitError("non-finite coefficients")
        return beta

    # least-squares start
    beta = solve(
        np.bincount(g, minlength=n_grp).astype(np.float64),
        np.bincount(g, weights=y, minlength=n_grp),
    )
    best_beta = beta
    prev = best_loss = pinball_loss(y - (U @ beta)[g], tau)

    for _ in range(max_iter):
        r = y - (U @ beta)[g]
        w = np.where(r > 0, tau, 1.0 - tau) / np.sqrt(r * r + eps * eps)
        beta = solve(
            np.bincount(g, weights=w, minlength=n_grp),
            np.bincount(g, weights=w * y, minlength=n_grp),
        )
        loss = pinball_loss(y - (U @ beta)[g], tau)
        if loss < best_loss:
            best_loss = loss
            best_beta = beta
        if abs(prev - loss) < tol:
            break
        prev = loss
    return best_beta
