"""Backend selection for the compiled kernels.

The compiled extension is used when it imports; set ``RSMNCE_BACKEND=python``
to force the numpy fallback. ``use_backend`` switches at runtime, which the
kernel benchmark and the equivalence tests rely on.
"""
import logging
import os

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _dense, _kernels
except ImportError:  # extensions not built
    _ext = None
else:
    _ext = _kernels

_BACKENDS = {"python": _pykernels}
if _ext is not None:
    _BACKENDS["ext"] = _ext

_active = None


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select ``"ext"``, ``"python"`` or ``"auto"`` (ext when built)."""
    global _active
    if name == "auto":
        name = "ext" if "ext" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = name
    return name


def active_backend():
    return _active


def alias_draw(prob, alias, u_idx, u_cmp):
    return _BACKENDS[_active].alias_draw(prob, alias, u_idx, u_cmp)


def multinomial_draw(probs, lengths, uniforms):
    return _BACKENDS[_active].multinomial_draw(probs, lengths, uniforms)


def pns_sample(indptr, ids, counts, n_retain, u_perm, prob, alias, k, u_idx, u_cmp):
    return _BACKENDS[_active].pns_sample(
        indptr, ids, counts, n_retain, u_perm, prob, alias, k, u_idx, u_cmp
    )


def _dense_impl():
    return _dense if _active == "ext" else _pykernels


def scatter_add_rows(target, rows, delta, step):
    """In place ``target[rows] += step * delta`` for unique ``rows``."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    return _dense_impl().scatter_add_rows(target, rows, delta, float(step))


def _csc_parts(X):
    return (np.ascontiguousarray(X.indptr, dtype=np.int64),
            np.ascontiguousarray(X.indices, dtype=np.int64),
            np.ascontiguousarray(X.data, dtype=np.float64))


def csc_rows_times(table, cols, X):
    """``X @ table[cols]`` for a CSC matrix ``X`` whose columns map to ``cols``."""
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    return _dense_impl().csc_rows_times(table, cols, *_csc_parts(X), X.shape[0])


def csc_scatter_update(target, cols, X, hidden, step):
    """In place ``target[cols] += step * (X.T @ hidden)`` for a CSC matrix ``X``."""
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    hidden = np.ascontiguousarray(hidden, dtype=np.float64)
    _dense_impl().csc_scatter_update(target, cols, *_csc_parts(X), hidden, float(step))


def softplus_sigmoid(pre):
    """(row sums of softplus(pre), logistic(pre)); ``pre`` must be finite."""
    return _dense_impl().softplus_sigmoid(np.ascontiguousarray(pre, dtype=np.float64))


use_backend(os.environ.get("RSMNCE_BACKEND", "auto"))
if _active == "python" and _ext is None:
    logger.debug("compiled kernels not built; using numpy fallback")
