"""Loss of a whole alpha grid in one pass over the weights.

For a fixed tensor the code of each weight is a step function of alpha, so
the MSE at every grid point can be assembled from tail sums: for each
rounding boundary k - 1/2 we record, per weight, the grid index where the
weight crosses into code >= k.  With reconstruction levels v_k = tau(alpha) * c_k,

    n * loss = sum w^2 - 2 tau (c_l sum w + sum_k dc_k T1_k)
                       + tau^2 (c_l^2 n + sum_k dc2_k T0_k)

where T1_k / T0_k are the sum / count of weights whose code is >= k, and
dc_k = c_k - c_{k-1}, dc2_k = c_k^2 - c_{k-1}^2 (summation by parts).

Cost is O(n * 2^(b-1) log G) instead of O(n * G).  Used only as the
brute-force grid oracle; the search path evaluates the direct kernel.
"""
from __future__ import annotations

import numpy as np


def mse_curve(values: np.ndarray, w_max: float, alphas: np.ndarray, qmax: int, reshaped: bool) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("alphas must be a non-empty 1-D array")
    if np.any(np.diff(alphas) < 0):
        raise ValueError("alphas must be sorted ascending")
    n = values.size
    G = alphas.size
    if w_max == 0.0:
        return np.zeros(G)

    low = -qmax - 1
    ks = np.arange(low + 1, qmax + 1, dtype=np.float64)

    def level(k):
        return np.sign(k) * k * k if reshaped else k

    dc = level(ks) - level(ks - 1)
    dc2 = level(ks) ** 2 - level(ks - 1) ** 2
    half = np.abs(ks - 0.5)
    # a weight with |w| = u * |k - 1/2| * (...) sits on boundary k at alpha = u
    if reshaped:
        thresh = qmax * qmax / (half * half * w_max)
    else:
        thresh = qmax / (half * w_max)

    upper = ks > 0
    pos = values[values > 0]
    neg = -values[values < 0]
    nonneg_count = np.count_nonzero(values >= 0)
    nonneg_sum = values[values >= 0].sum()

    A = np.zeros(G + 1)
    B = np.zeros(G + 1)

    # positive weights vs positive boundaries: code >= k while alpha <= u
    u = pos[:, None] * thresh[upper][None, :]
    idx = np.searchsorted(alphas, u, side="right").ravel()
    wa = (pos[:, None] * dc[upper][None, :]).ravel()
    wb = np.broadcast_to(dc2[upper], u.shape).ravel()
    A[0] += wa.sum()
    B[0] += wb.sum()
    A -= np.bincount(idx, weights=wa, minlength=G + 1)
    B -= np.bincount(idx, weights=wb, minlength=G + 1)

    # negative weights vs non-positive boundaries: code >= k once alpha > u
    u = neg[:, None] * thresh[~upper][None, :]
    idx = np.searchsorted(alphas, u, side="right").ravel()
    A += np.bincount(idx, weights=(-neg[:, None] * dc[~upper][None, :]).ravel(), minlength=G + 1)
    B += np.bincount(idx, weights=np.broadcast_to(dc2[~upper], u.shape).ravel(), minlength=G + 1)

    # non-negative weights are always above the non-positive boundaries
    A[0] += nonneg_sum * dc[~upper].sum()
    B[0] += nonneg_count * dc2[~upper].sum()

    A = np.cumsum(A)[:G]
    B = np.cumsum(B)[:G]
    tau = alphas * w_max / (qmax * qmax) if reshaped else alphas * w_max / qmax
    c_low = float(level(np.float64(low)))
    total = float(np.dot(values, values)) - 2.0 * tau * (c_low * values.sum() + A) + tau * tau * (c_low * c_low * n + B)
    return np.maximum(total / n, 0.0)
