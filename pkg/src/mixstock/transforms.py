"""Multidimensional logit transform between the open simplex and R^p.

The last simplex coordinate is the baseline: ``xi_i = log(theta_i / theta_last)``.
"""

import numpy as np
from scipy.special import logsumexp, softmax


def simplex_to_logit(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise ValueError("theta must be a non-empty vector")
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise ValueError("theta must lie strictly inside the simplex")
    if abs(theta.sum() - 1.0) > 1e-9:
        raise ValueError(f"theta sums to {theta.sum()!r}, not 1")
    log_theta = np.log(theta)
    return log_theta[:-1] - log_theta[-1]


def logit_to_simplex(xi):
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi must be finite")
    return softmax(np.append(xi, 0.0))


def log_jacobian_det(xi):
    """log |d theta_{1..p} / d xi| = sum(xi) - (p + 1) log(1 + sum exp(xi))."""
    xi = np.asarray(xi, dtype=float)
    return float(xi.sum() - (xi.size + 1) * logsumexp(np.append(xi, 0.0)))


def logit(x):
    return np.log(x) - np.log1p(-x)


def inv_logit(y):
    # overflow-safe for either sign
    return np.exp(-np.logaddexp(0.0, -y))


def log_unit_jacobian(y):
    """log d/dy inv_logit(y) = log(x (1 - x))."""
    return -np.logaddexp(0.0, -y) - np.logaddexp(0.0, y)
