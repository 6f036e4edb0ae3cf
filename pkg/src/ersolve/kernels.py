"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy versions
in :mod:`ersolve._kernels_py` are used.  Set ``ERSOLVE_KERNELS=python`` to
force the fallback and ``ERSOLVE_THREADS`` to cap the number of threads the
compiled element kernel may use.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("ERSOLVE_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ERSOLVE_THREADS", "1")))
    except ValueError:
        return 1


def _contig(a):
    return np.ascontiguousarray(a, dtype=float)


def strain_local(S, wdet, c1, c2, eps, backend: str | None = None):
    """See :func:`ersolve._kernels_py.strain_local`."""
    backend = backend or BACKEND
    if backend == "python" or _compiled is None:
        return _kernels_py.strain_local(S, wdet, c1, c2, eps)
    S, wdet, c1, c2, eps = map(_contig, (S, wdet, c1, c2, eps))
    threads = thread_count()
    T = S.shape[0]
    if threads == 1 or T < 4 * threads:
        return _compiled.strain_local(S, wdet, c1, c2, eps)
    res = np.zeros((T, S.shape[3]))
    jac = np.zeros((T, S.shape[3], S.shape[3]))
    # disjoint element ranges, so the result does not depend on scheduling
    bounds = np.linspace(0, T, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(lambda k: _compiled.strain_local_range(
            S, wdet, c1, c2, eps, res, jac, bounds[k], bounds[k + 1]), range(threads)))
    return res, jac


def mollifier_weights(targets, sources, src_weights, indptr, indices, radius,
                      backend: str | None = None):
    """See :func:`ersolve._kernels_py.mollifier_weights`."""
    backend = backend or BACKEND
    if backend == "python" or _compiled is None:
        return _kernels_py.mollifier_weights(targets, sources, src_weights, indptr, indices, radius)
    return _compiled.mollifier_weights(
        _contig(targets), _contig(sources), _contig(src_weights),
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64), float(radius))
