"""Replicated Softmax model: parameters and exact per-document quantities.

Conventions: ``W`` is ``H x K`` (row j = hidden unit j, column k = word k),
``b`` is the visible bias, ``a`` the hidden bias; the hidden bias is scaled
by the document length D. The free energy is

    F(V) = -b.v - sum_j softplus(W_j.v + D a_j),    P(V) = exp(-F(V)) / Z_D

so lower free energy means a more probable document.
"""
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from . import kernels
from .corpus import docs_to_csr

LN2 = math.log(2.0)
FORMAT_VERSION = 1


class ParameterBlowUp(FloatingPointError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(eq=False)
class RsmParams:
    W: np.ndarray
    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        # column-major: batches read and update whole columns W[:, k]
        self.W = np.asfortranarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape != (self.a.size, self.b.size):
            raise ValueError(
                f"inconsistent shapes W{self.W.shape}, b({self.b.size}), a({self.a.size})"
            )

    @property
    def H(self):
        return self.a.size

    @property
    def K(self):
        return self.b.size

    @classmethod
    def zeros(cls, K, H):
        return cls(np.zeros((H, K)), np.zeros(K), np.zeros(H))

    def copy(self):
        return RsmParams(self.W.copy(), self.b.copy(), self.a.copy())

    def is_finite(self):
        return bool(
            np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.a))
        )

    def __eq__(self, other):
        return (
            isinstance(other, RsmParams)
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.a, other.a)
        )

    __hash__ = None


def init_params(K, H, unigram=None, rng=None, scale=0.01):
    """Small Gaussian weights, ``b = ln(unigram)``, zero hidden bias.

    With W near zero this starts the model close to the unigram noise.
    """
    rng = np.random.default_rng(rng)
    W = rng.normal(0.0, scale, size=(H, K))
    if unigram is None:
        b = np.zeros(K)
    else:
        b = np.log(np.maximum(np.asarray(unigram, dtype=np.float64), 1e-12))
    return RsmParams(W, b, np.zeros(H))


@dataclass(eq=False)
class FreeEnergyGradient:
    dW: np.ndarray
    db: np.ndarray
    da: np.ndarray

    def flat(self):
        return np.concatenate([self.dW.ravel(), self.db, self.da])


# -- single documents -------------------------------------------------------


def _pre_activation(params, doc):
    return params.W[:, doc.ids] @ doc.values + doc.length * params.a


def free_energy(params, doc):
    F = -params.b[doc.ids] @ doc.values - softplus(_pre_activation(params, doc)).sum()
    if not np.isfinite(F):
        raise ParameterBlowUp("parameter blow-up: free energy is not finite")
    return float(F)


def energy(params, doc, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (params.H,):
        raise ValueError(f"hidden state must have length {params.H}")
    return float(
        -h @ (params.W[:, doc.ids] @ doc.values)
        - params.b[doc.ids] @ doc.values
        - doc.length * (params.a @ h)
    )


def hidden_posterior(params, doc):
    """P(h_j = 1 | V) for every hidden unit."""
    return expit(_pre_activation(params, doc))


def visible_softmax(params, h):
    """Word distribution given hidden states; ``h`` may be ``H`` or ``n x H``."""
    logits = np.asarray(h, dtype=np.float64) @ params.W + params.b
    logits = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=-1, keepdims=True)


def free_energy_gradient(params, doc):
    s = hidden_posterior(params, doc)
    dW = np.zeros_like(params.W)
    dW[:, doc.ids] = -np.outer(s, doc.values)
    db = np.zeros_like(params.b)
    db[doc.ids] = -doc.values
    return FreeEnergyGradient(dW, db, -doc.length * s)


def log_partition_constant(params, D, bias=None):
    """Frozen normalizer ``ln[2^H (sum_k e^{b_k})^D]``; D may be real or an array.

    ``bias`` overrides ``params.b`` (used to hold the constant fixed while
    the parameters move).
    """
    b = params.b if bias is None else bias
    return params.H * LN2 + np.asarray(D, dtype=np.float64) * logsumexp(b)


def log_prob(params, doc):
    """Log-probability under the frozen normalizer (not the true partition)."""
    return -free_energy(params, doc) - float(log_partition_constant(params, doc.length))


# -- sparse batches ---------------------------------------------------------


class DocBatch:
    """CSR rows plus lengths, with columns remapped to the words present.

    Batched free energies and gradients then touch only ``|cols|`` columns
    of W, so their cost does not grow with the vocabulary size.
    """

    def __init__(self, X, lengths=None):
        X = sp.csr_matrix(X)
        X.sum_duplicates()
        self.n, self.K = X.shape
        self.lengths = (
            np.asarray(X.sum(axis=1)).ravel() if lengths is None else np.asarray(lengths, np.float64)
        )
        # O(K) mask instead of a sort: cheaper than np.unique for realistic K
        present = np.zeros(self.K, dtype=bool)
        present[X.indices] = True
        self.cols = np.flatnonzero(present)
        lookup = np.empty(self.K, dtype=np.int64)
        lookup[self.cols] = np.arange(self.cols.size)
        self.local = sp.csr_matrix(
            (X.data, lookup[X.indices], X.indptr), shape=(self.n, self.cols.size)
        )
        self._csc = None

    @classmethod
    def from_docs(cls, docs, K):
        return cls(docs_to_csr(list(docs), K))

    @property
    def csc(self):
        if self._csc is None:
            self._csc = self.local.tocsc()
        return self._csc

    def linear(self, params):
        """Rows times W^T, without the hidden bias: ``n x H``."""
        return kernels.csc_rows_times(params.W.T, self.cols, self.csc)

    def visible(self, params):
        """Rows dotted with the visible bias."""
        return self.local @ params.b[self.cols]

    def pre_activation(self, params):
        return self.linear(params) + self.lengths[:, None] * params.a

    def free_energies(self, params):
        pre = self.pre_activation(params)
        F = -self.visible(params) - softplus(pre).sum(axis=1)
        if not np.all(np.isfinite(F)):
            raise ParameterBlowUp("parameter blow-up: free energy is not finite")
        return F, pre

    def posteriors(self, params):
        return expit(self.pre_activation(params))

    def gradient(self, hidden_weights, row_weights, da):
        """Assemble ``-sum_i v_i (x) hidden_weights[i]`` and ``-sum_i row_weights[i] v_i``."""
        dWt = -(self.local.T @ hidden_weights)
        db = -(self.local.T @ row_weights)
        return SparseGradient(self.cols, np.asarray(dWt), np.asarray(db).ravel(), da)

    def apply_gradient(self, params, hidden_weights, row_weights, da, step):
        """``theta += step * gradient(...)`` without materializing the gradient."""
        kernels.csc_scatter_update(params.W.T, self.cols, self.csc, hidden_weights, -step)
        params.b[self.cols] -= step * (self.local.T @ row_weights)
        params.a += step * da

    def weighted_gradient(self, params, coef, pre=None):
        """``sum_i coef[i] * dF(row i)/dtheta`` as a column-sparse gradient."""
        if pre is None:
            pre = self.pre_activation(params)
        s = expit(pre)
        return self.gradient(coef[:, None] * s, coef, -(coef * self.lengths) @ s)


@dataclass(eq=False)
class SparseGradient:
    """Gradient restricted to columns ``cols`` of W and b.

    ``dWt`` is stored transposed (``|cols| x H``) so each word's slice is
    contiguous, matching the column-major W.
    """

    cols: np.ndarray
    dWt: np.ndarray
    db: np.ndarray
    da: np.ndarray

    def is_finite(self):
        return bool(np.isfinite(self.dWt).all() and np.isfinite(self.db).all() and np.isfinite(self.da).all())

    def dense(self, K):
        dW = np.zeros((self.da.size, K))
        dW[:, self.cols] = self.dWt.T
        db = np.zeros(K)
        db[self.cols] = self.db
        return FreeEnergyGradient(dW, db, self.da.copy())

    def apply(self, params, step):
        """In place: ``theta += step * gradient``."""
        # W.T is a C-ordered view, so each word's row is contiguous
        kernels.scatter_add_rows(params.W.T, self.cols, self.dWt, step)
        params.b[self.cols] += step * self.db
        params.a += step * self.da


# -- model files ------------------------------------------------------------


@dataclass(eq=False)
class RsmModel:
    params: RsmParams
    transform_flags: dict
    words: tuple = ()

    def __eq__(self, other):
        return (
            isinstance(other, RsmModel)
            and self.params == other.params
            and self.transform_flags == other.transform_flags
            and tuple(self.words) == tuple(other.words)
        )

    __hash__ = None


def save_model(model, path):
    p = model.params
    doc = {
        "format_version": FORMAT_VERSION,
        "K": p.K,
        "H": p.H,
        "transform_flags": dict(model.transform_flags),
        "words": list(model.words),
        "W": p.W.ravel(order="C").tolist(),
        "b": p.b.tolist(),
        "a": p.a.tolist(),
    }
    # float repr is the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format {doc.get('format_version')!r}")
    K, H = doc["K"], doc["H"]
    W = np.array(doc["W"], dtype=np.float64).reshape(H, K)
    params = RsmParams(W, np.array(doc["b"]), np.array(doc["a"]))
    words = tuple(doc.get("words", ()))
    if words and len(words) != K:
        raise ValueError(f"{path}: {len(words)} words for K={K}")
    return RsmModel(params, doc["transform_flags"], words)
