"""Pure numpy versions of the element and mollifier kernels."""

import numpy as np


def strain_local(S, wdet, c1, c2, eps):
    """Element residuals and Jacobians of a strain-energy type integrand.

    res[t]  = sum_q wdet c1 S^T eps
    jac[t]  = sum_q wdet (c1 S^T S + c2 (S^T eps)(S^T eps)^T)

    S is (T, nq, 3, nd), eps is (T, nq, 3); all other arrays are (T, nq).
    """
    Se = np.einsum("tqkd,tqk->tqd", S, eps)
    w1 = wdet * c1
    res = np.einsum("tq,tqd->td", w1, Se)
    jac = np.einsum("tq,tqkd,tqke->tde", w1, S, S)
    jac += np.einsum("tq,tqd,tqe->tde", wdet * c2, Se, Se)
    return res, jac


def mollifier_weights(targets, sources, src_weights, indptr, indices, radius):
    """Row-normalized kernel weights for candidate (target, source) pairs.

    Returns ``(data, counts)``: ``data`` aligned with ``indices`` and
    ``counts[i]`` the number of sources with positive weight for target i.
    Rows without support are left as zeros.
    """
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    d = sources[indices] - targets[rows]
    z = (d[:, 0] ** 2 + d[:, 1] ** 2) / (radius * radius)
    inside = z < 1.0
    w = np.zeros(len(indices))
    with np.errstate(divide="ignore", over="ignore"):
        w[inside] = np.exp(-1.0 / (1.0 - z[inside])) * src_weights[indices[inside]]
    total = np.bincount(rows, weights=w, minlength=n)
    counts = np.bincount(rows, weights=(w > 0).astype(float), minlength=n).astype(np.int64)
    denom = total[rows]
    data = np.divide(w, denom, out=np.zeros_like(w), where=denom > 0)
    return data, counts
