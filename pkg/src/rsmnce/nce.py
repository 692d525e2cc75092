"""Noise-contrastive training of the RSM with partial noise and length-normalized ratios.

Each data document is paired with k noise documents. A noise document keeps
a random ``ceil(alpha * D)`` subset of the data tokens (the retained set,
shared by the data document and all its noise documents) and fills the rest
with iid draws from the corpus unigram distribution. The noise density scores
the retained part with the model itself, at the shorter length, and the rest
with the unigram:

    log Pn(V) = log P(V_r) + sum_{v in V \\ V_r} log p(v)

The classifier input is the log-ratio ``X = log P(V) - log Pn(V)``, divided by
the (possibly idf-weighted) length. Normalizers are the frozen
``2^H (sum_k e^{b_k})^D``, recomputed from the bias but never differentiated.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from . import kernels
from .alias import build_alias
from .corpus import BowDocument, docs_to_csr, empirical_distribution
from .rsm import LN2, DocBatch, ParameterBlowUp, init_params, softplus

logger = logging.getLogger(__name__)

_LOG_FLOOR = 1e-12


def ceil_fraction(alpha, n):
    """``ceil(alpha * n)`` without float noise: 0.3 * 10 gives 3, not 4.

    Works elementwise on integer arrays.
    """
    x = alpha * np.asarray(n, dtype=np.float64)
    r = np.round(x)
    out = np.where(np.abs(x - r) <= 1e-9, r, np.ceil(x)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass
class NceConfig:
    k: int = 5
    alpha: float = 0.5
    learning_rate: float = 0.1
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    weighting: str = "count"
    cache_noise: bool = False
    hidden: int = 128
    uniform: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("noise ratio k must be >= 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.weighting not in ("count", "idf"):
            raise ValueError("weighting must be 'count' or 'idf'")
        if self.batch_size < 1 or self.hidden < 1 or self.epochs < 0:
            raise ValueError("batch_size and hidden must be positive")


@dataclass(eq=False)
class NoiseBundle:
    """One data document bound to its k noise documents via a shared retained set."""

    data_doc: BowDocument
    retained: BowDocument
    noise_docs: tuple
    data_residual_logp: float


@dataclass(eq=False)
class BundleBatch:
    """Bundles in matrix form (unweighted counts).

    Rows of ``noise_rest`` hold the sampled part of each noise document; the
    full noise document is that plus the owner's retained row. Likewise the
    data document is ``data_rest + retained``.
    """

    data_rest: sp.csr_matrix
    retained: sp.csr_matrix
    noise_rest: sp.csr_matrix
    noise_owner: np.ndarray
    k: int = field(default=1)

    @property
    def n(self):
        return self.data_rest.shape[0]

    @property
    def K(self):
        return self.data_rest.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        rows = (idx[:, None] * self.k + np.arange(self.k)).ravel()
        return BundleBatch(
            self.data_rest[idx], self.retained[idx], self.noise_rest[rows],
            np.repeat(np.arange(idx.size), self.k), self.k,
        )

    def to_bundles(self, unigram):
        logp = np.log(np.maximum(unigram, _LOG_FLOOR))
        out = []
        for i in range(self.n):
            ret = _row_doc(self.retained, i)
            data = _row_doc(self.data_rest + self.retained, i)
            rows = np.flatnonzero(self.noise_owner == i)
            noise = tuple(_row_doc(self.noise_rest[r] + self.retained[i], 0) for r in rows)
            residual = float((self.data_rest[i] @ logp)[0])
            out.append(NoiseBundle(data, ret, noise, residual))
        return out

    @classmethod
    def from_bundles(cls, bundles, K=None):
        """``K`` defaults to one past the largest word id present."""
        K = _bundle_K(bundles) if K is None else K
        ret = docs_to_csr([b.retained for b in bundles], K)
        data = docs_to_csr([b.data_doc for b in bundles], K)
        owner = np.concatenate([np.full(len(b.noise_docs), i) for i, b in enumerate(bundles)])
        noise = docs_to_csr([d for b in bundles for d in b.noise_docs], K)
        data_rest = _nonneg(data - ret)
        noise_rest = _nonneg(noise - ret[owner])
        ks = {len(b.noise_docs) for b in bundles}
        return cls(data_rest, ret, noise_rest, owner.astype(np.int64), ks.pop() if len(ks) == 1 else 0)


def _bundle_K(bundles):
    K = 1
    for b in bundles:
        for d in (b.data_doc, *b.noise_docs):
            if d.ids.size:
                K = max(K, int(d.ids[-1]) + 1)
    return K


def _nonneg(X):
    X = sp.csr_matrix(X)
    X.eliminate_zeros()
    if X.nnz and X.data.min() < 0:
        raise ValueError("retained set is not a sub-multiset of its document")
    return X


def _row_doc(X, i):
    row = sp.csr_matrix(X[i])
    row.eliminate_zeros()
    return BowDocument(row.indices.astype(np.int64), row.data)


def _integer_counts(X):
    X = sp.csr_matrix(X)
    X.sum_duplicates()
    counts = np.rint(X.data)
    if np.any(counts != X.data) or np.any(counts < 1):
        raise ValueError("noise sampling needs integer counts (apply idf after sampling)")
    return X, counts.astype(np.int64)


def generate_bundles(X, table, k, alpha, rng):
    """Partial noise sampling for every row of the count matrix ``X``.

    Args:
        X: ``n x K`` integer count matrix (CSR).
        table: AliasTable over the unigram distribution.
        k: noise documents per data document.
        alpha: retained fraction.
        rng: numpy Generator.

    Returns:
        BundleBatch
    """
    X, counts = _integer_counts(X)
    n, K = X.shape
    csum = np.concatenate([[0], np.cumsum(counts)])
    D = csum[X.indptr[1:]] - csum[X.indptr[:-1]]
    if np.any(D < 1):
        raise ValueError("cannot sample noise for an empty document")
    n_retain = ceil_fraction(alpha, D)
    m = k * (D - n_retain)
    u_perm = rng.random(int(n_retain.sum()))
    u_idx = rng.random(int(m.sum()))
    u_cmp = rng.random(int(m.sum()))
    ret, rest, noise = kernels.pns_sample(
        X.indptr.astype(np.int64), X.indices.astype(np.int64), counts, n_retain, u_perm,
        table.prob, table.alias, int(k), u_idx, u_cmp,
    )

    def csr(parts, rows):
        indptr, indices, data = parts
        return sp.csr_matrix((data, indices, indptr), shape=(rows, K))

    return BundleBatch(csr(rest, n), csr(ret, n), csr(noise, n * k), np.repeat(np.arange(n), k), k)


def pns_generate(doc, table, k, alpha, rng):
    """Partial noise sampling for a single document."""
    if doc.length < 1:
        raise ValueError("cannot sample noise for an empty document")
    if doc.idf:
        raise ValueError("noise sampling needs integer counts (apply idf after sampling)")
    X = docs_to_csr([doc], len(table))
    batch = generate_bundles(X, table, k, alpha, rng)
    bundle = batch.to_bundles(table.source)[0]
    bundle.data_doc = doc
    return bundle


# -- log-ratios, objective, gradient ----------------------------------------


def frozen_log_partition(H, bias):
    """Length -> log Z^c, with the bias captured now and held fixed."""
    lse = float(logsumexp(bias))
    return lambda D: H * LN2 + np.asarray(D, dtype=np.float64) * lse


def _weigh(X, weights):
    if weights is None:
        return X
    Xw = sp.csr_matrix(X @ sp.diags(weights))
    Xw.eliminate_zeros()
    return Xw


@dataclass(eq=False)
class RatioTerms:
    """Per-member log-ratios for a bundle batch; data rows first, then noise.

    ``docs`` stacks the non-retained part of every member followed by one
    retained row per bundle; a member's full vector is its row plus its
    owner's retained row, so retained tokens are multiplied through W once.
    """

    log_ratio: np.ndarray  # unnormalized X
    lengths: np.ndarray
    scaled: np.ndarray  # X / D (or X when not uniform)
    valid: np.ndarray
    log_model: np.ndarray
    log_noise: np.ndarray
    docs: DocBatch
    owner: np.ndarray
    post_members: np.ndarray  # hidden posteriors
    post_retained: np.ndarray
    retained_lengths: np.ndarray


def log_ratios(batch, params, unigram, weights=None, uniform=True, log_partition=None):
    """Compute model and noise log-densities and the classifier inputs.

    Args:
        batch: BundleBatch.
        params: RsmParams.
        unigram: noise unigram p over the vocabulary.
        weights: optional per-word weights (idf) applied to every document.
        uniform: divide the log-ratio by the document length.
        log_partition: callable length -> log normalizer; defaults to the
            frozen constant at the current bias.
    """
    if log_partition is None:
        log_partition = frozen_log_partition(params.H, params.b)
    n = batch.n
    owner = np.concatenate([np.arange(n), batch.noise_owner])
    nm = owner.size
    docs = DocBatch(_weigh(sp.vstack([batch.data_rest, batch.noise_rest, batch.retained], format="csr"),
                           weights))
    logp = np.log(np.maximum(np.asarray(unigram)[docs.cols], _LOG_FLOOR))
    lin = docs.linear(params)
    bv = docs.visible(params)
    D_r = docs.lengths[nm:]
    D = docs.lengths[:nm] + D_r[owner]
    pre_r = lin[nm:] + D_r[:, None] * params.a
    pre_m = lin[:nm] + lin[nm:][owner] + D[:, None] * params.a
    if not (np.isfinite(pre_m).all() and np.isfinite(pre_r).all()):
        raise ParameterBlowUp("parameter blow-up: hidden pre-activations are not finite")
    sp_r, s_r = kernels.softplus_sigmoid(pre_r)
    sp_m, s_m = kernels.softplus_sigmoid(pre_m)
    F_r = -bv[nm:] - sp_r
    F_m = -(bv[:nm] + bv[nm:][owner]) - sp_m
    if not (np.all(np.isfinite(F_m)) and np.all(np.isfinite(F_r))):
        raise ParameterBlowUp("parameter blow-up: free energy is not finite")
    log_model = -F_m - log_partition(D)
    log_ret = -F_r - log_partition(D_r)
    log_noise = log_ret[owner] + docs.local[:nm] @ logp
    X = log_model - log_noise
    valid = D > 0
    if uniform:
        scaled = np.where(valid, X / np.where(valid, D, 1.0), 0.0)
    else:
        scaled = np.where(valid, X, 0.0)
    return RatioTerms(X, D, scaled, valid, log_model, log_noise, docs, owner, s_m, s_r, D_r)


def _member_weights(batch, terms, data_weights, noise_weights):
    n, m = batch.n, batch.noise_owner.size
    wd = np.full(n, 1.0 / n) if data_weights is None else np.asarray(data_weights, np.float64)
    wn = np.full(m, 1.0 / m) if noise_weights is None else np.asarray(noise_weights, np.float64)
    w = np.concatenate([wd, wn]) * terms.valid
    return w[:n], w[n:]


def objective_from_terms(terms, k, n_data, data_weights, noise_weights):
    logk = math.log(k)
    xd, xn = terms.scaled[:n_data], terms.scaled[n_data:]
    # -ln sigma_k(x) = softplus(ln k - x);  -ln sigma_{1/k}(-x) = softplus(x - ln k)
    return float(data_weights @ softplus(logk - xd) + k * (noise_weights @ softplus(xn - logk)))


def _ratio_gradient_parts(terms, c):
    """Factors of ``sum_m c[m] * dX_m/dtheta`` for ``DocBatch.gradient``.

    ``dX_m = -dF(member m) + dF(retained of m)``; a member's own row holds
    only its non-retained tokens, so the retained rows carry the members'
    hidden weights as well as their own.
    """
    s_m, s_r = terms.post_members, terms.post_retained
    n = s_r.shape[0]
    nm = terms.owner.size
    group = sp.csr_matrix((np.ones(nm), (terms.owner, np.arange(nm))), shape=(n, nm))
    coef_r = group @ c
    h_m = -c[:, None] * s_m
    h_r = group @ h_m + coef_r[:, None] * s_r
    # retained tokens cancel in the visible-bias term
    row_w = np.concatenate([-c, np.zeros(n)])
    da = -((-c * terms.lengths) @ s_m + (coef_r * terms.retained_lengths) @ s_r)
    return np.vstack([h_m, h_r]), row_w, da


def _score(batch, params, unigram, k, weights, uniform, log_partition, data_weights, noise_weights):
    terms = log_ratios(batch, params, unigram, weights, uniform, log_partition)
    n = batch.n
    wd, wn = _member_weights(batch, terms, data_weights, noise_weights)
    J = objective_from_terms(terms, k, n, wd, wn)
    if not np.isfinite(J):
        raise ParameterBlowUp("parameter blow-up: NCE objective is not finite")
    logk = math.log(k)
    xd, xn = terms.scaled[:n], terms.scaled[n:]
    # coefficient of d(scaled X)/dtheta in -dJ/dtheta
    g = np.concatenate([wd * expit(logk - xd), -k * wn * expit(xn - logk)])
    if uniform:
        g = g * np.where(terms.valid, 1.0 / np.where(terms.valid, terms.lengths, 1.0), 0.0)
    return J, g, terms


def nce_terms(batch, params, unigram, k, weights=None, uniform=True, log_partition=None,
              data_weights=None, noise_weights=None, with_gradient=True):
    """Objective J, its descent direction -dJ/dtheta, and the ratio terms.

    Data terms are averaged with ``data_weights`` (default uniform over the
    batch), noise terms with ``noise_weights`` (default uniform over all noise
    documents), and the noise average is multiplied by k.

    Returns:
        (J, SparseGradient or None, RatioTerms)
    """
    J, g, terms = _score(batch, params, unigram, k, weights, uniform, log_partition,
                         data_weights, noise_weights)
    if not with_gradient:
        return J, None, terms
    return J, terms.docs.gradient(*_ratio_gradient_parts(terms, g)), terms


def classification_accuracy(terms, k, n_data):
    """Fraction of members the ratio classifier labels correctly."""
    logk = math.log(k)
    hit = np.concatenate([terms.scaled[:n_data] > logk, terms.scaled[n_data:] < logk])
    return float(hit[terms.valid].mean()) if terms.valid.any() else float("nan")


def _member_bundle_batch(bundle, K):
    return BundleBatch.from_bundles([bundle], K)


def _member_row(bundle, member):
    if member == "data":
        return 0
    j = int(member)
    if not 0 <= j < len(bundle.noise_docs):
        raise IndexError(f"bundle has {len(bundle.noise_docs)} noise documents")
    return 1 + j


def noise_log_prob(bundle, member, params, unigram, weights=None, log_partition=None):
    """log Pn of the data document (``member="data"``) or noise document j."""
    terms = log_ratios(_member_bundle_batch(bundle, params.K), params, unigram, weights, True, log_partition)
    return float(terms.log_noise[_member_row(bundle, member)])


def uce_log_ratio(bundle, member, params, unigram, weights=None, log_partition=None):
    """Length-normalized log-ratio of one bundle member."""
    terms = log_ratios(_member_bundle_batch(bundle, params.K), params, unigram, weights, True, log_partition)
    row = _member_row(bundle, member)
    if not terms.valid[row]:
        raise ValueError("zero-length member")
    return float(terms.scaled[row])


def _as_batch(bundles, K):
    if isinstance(bundles, BundleBatch):
        return bundles
    if not bundles:
        raise ValueError("empty batch")
    return BundleBatch.from_bundles(list(bundles), K)


def nce_objective(bundles, params, unigram, k, weights=None, uniform=True, frozen_bias=None):
    """J for a batch of bundles (list of NoiseBundle or a BundleBatch).

    ``frozen_bias`` fixes the bias used in the normalizers; by default the
    current ``params.b``.
    """
    batch = _as_batch(bundles, params.K)
    lp = frozen_log_partition(params.H, params.b if frozen_bias is None else frozen_bias)
    return nce_terms(batch, params, unigram, k, weights, uniform, lp, with_gradient=False)[0]


def nce_gradient(bundles, params, unigram, k, weights=None, uniform=True, frozen_bias=None):
    """Descent direction -dJ/dtheta as a dense FreeEnergyGradient."""
    batch = _as_batch(bundles, params.K)
    lp = frozen_log_partition(params.H, params.b if frozen_bias is None else frozen_bias)
    _, grad, _ = nce_terms(batch, params, unigram, k, weights, uniform, lp)
    return grad.dense(params.K)


# -- training -------------------------------------------------------------


class NceTrainer:
    """SGD on J with minibatches of bundles."""

    def __init__(self, params, config, unigram, weights=None, rng=None):
        self.params = params
        self.config = config
        self.unigram = np.asarray(unigram, dtype=np.float64)
        self.table = build_alias(self.unigram)
        self.weights = weights
        self.rng = np.random.default_rng(config.seed if rng is None else rng)

    def make_bundles(self, X):
        cfg = self.config
        return generate_bundles(X, self.table, cfg.k, cfg.alpha, self.rng)

    def update(self, batch):
        """One SGD step on a BundleBatch; returns J and proxy accuracy before the step."""
        t0 = time.perf_counter()
        cfg = self.config
        J, g, terms = _score(batch, self.params, self.unigram, cfg.k, self.weights, cfg.uniform,
                             None, None, None)
        hidden, row_w, da = _ratio_gradient_parts(terms, g)
        if not (np.isfinite(hidden).all() and np.isfinite(da).all() and np.isfinite(row_w).all()):
            raise ParameterBlowUp(f"parameter blow-up in NCE update (lr={cfg.learning_rate}, J={J:.4g})")
        terms.docs.apply_gradient(self.params, hidden, row_w, da, cfg.learning_rate)
        return {
            "objective": J,
            "accuracy": classification_accuracy(terms, cfg.k, batch.n),
            "seconds": time.perf_counter() - t0,
        }

    def evaluate(self, batch):
        cfg = self.config
        J, _, terms = nce_terms(batch, self.params, self.unigram, cfg.k, self.weights, cfg.uniform,
                                with_gradient=False)
        return J, classification_accuracy(terms, cfg.k, batch.n)

    def fit(self, X, log=None):
        cfg = self.config
        n = X.shape[0]
        cached = self.make_bundles(X) if cfg.cache_noise else None
        stats = []
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = self.rng.permutation(n)
            Js, accs, sizes = [], [], []
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                batch = cached.take(idx) if cached is not None else self.make_bundles(X[idx])
                rec = self.update(batch)
                Js.append(rec["objective"])
                accs.append(rec["accuracy"])
                sizes.append(idx.size)
            rec = {
                "epoch": epoch,
                "trainer": "nce",
                "objective": float(np.average(Js, weights=sizes)),
                "accuracy": float(np.average(accs, weights=sizes)),
                "wall_seconds": time.perf_counter() - t0,
                "k": cfg.k,
                "alpha": cfg.alpha,
                "weighting": cfg.weighting,
            }
            stats.append(rec)
            if log is not None:
                log(rec)
        return stats


def train_nce(corpus, config, params=None, log=None):
    """Train on an unweighted corpus; ``weighting="idf"`` weights after sampling.

    Returns:
        (params, per-epoch stats)
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if corpus.idf:
        raise ValueError("pass the unweighted corpus; idf is applied after noise sampling")
    rng = np.random.default_rng(config.seed)
    unigram = empirical_distribution(corpus)
    if params is None:
        params = init_params(len(corpus.vocab), config.hidden, unigram, rng)
    weights = corpus.vocab.idf if config.weighting == "idf" else None
    X = corpus.matrix()
    if weights is not None:
        keep = np.flatnonzero(np.asarray((X @ sp.diags(weights)).sum(axis=1)).ravel() > 0)
        if keep.size < X.shape[0]:
            logger.warning("dropped %d documents with zero idf-weighted length", X.shape[0] - keep.size)
            X = X[keep]
    trainer = NceTrainer(params, config, unigram, weights, rng)
    stats = trainer.fit(X, log=log)
    return trainer.params, stats
