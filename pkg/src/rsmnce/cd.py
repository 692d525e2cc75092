"""Contrastive divergence (CD-k) and persistent CD for the RSM.

Visible resampling draws D tokens from the softmax given the hidden sample.
That distribution changes with every hidden sample, so it is rebuilt and
scanned in O(K) per document per step; an alias table would not pay off.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import kernels
from .corpus import docs_to_csr, empirical_distribution
from .rsm import DocBatch, ParameterBlowUp, init_params, visible_softmax

logger = logging.getLogger(__name__)


@dataclass
class CdConfig:
    gibbs_steps: int = 1
    persistent: bool = False
    learning_rate: float = 0.1
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    hidden: int = 128

    def __post_init__(self):
        if self.gibbs_steps < 1 or self.batch_size < 1 or self.hidden < 1 or self.epochs < 0:
            raise ValueError("gibbs_steps, batch_size and hidden must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass(eq=False)
class GibbsState:
    """A batch of chains: integer count rows, their lengths, last hidden sample."""

    counts: sp.csr_matrix
    lengths: np.ndarray
    h: np.ndarray = None

    @classmethod
    def from_matrix(cls, X):
        X = sp.csr_matrix(X, dtype=np.float64)
        values = X.data
        if np.any(values != np.round(values)):
            raise ValueError("CD needs integer counts; idf-weighted input is not supported")
        lengths = np.asarray(X.sum(axis=1)).ravel().round().astype(np.int64)
        return cls(X, lengths)

    @classmethod
    def from_docs(cls, docs, K):
        if any(d.idf for d in docs):
            raise ValueError("CD needs integer counts; idf-weighted input is not supported")
        return cls.from_matrix(docs_to_csr(list(docs), K))


def _counts_from_tokens(rows, tokens, shape):
    X = sp.csr_matrix((np.ones(tokens.size), (rows, tokens)), shape=shape)
    X.sum_duplicates()
    return X


def gibbs_step(params, state, rng):
    """One sweep: h ~ P(h | V), then V' ~ P(V | h) with D tokens per chain."""
    n = state.counts.shape[0]
    pre = state.counts @ params.W.T + state.lengths[:, None] * params.a
    s = expit(pre)
    h = (rng.random(s.shape) < s).astype(np.float64)
    probs = np.ascontiguousarray(visible_softmax(params, h))
    u = rng.random(int(state.lengths.sum()))
    tokens = kernels.multinomial_draw(probs, state.lengths, u)
    rows = np.repeat(np.arange(n), state.lengths)
    counts = _counts_from_tokens(rows, tokens, (n, params.K))
    return GibbsState(counts, state.lengths, h)


def run_chain(params, state, steps, rng):
    for _ in range(steps):
        state = gibbs_step(params, state, rng)
    return state


class CdTrainer:
    """Holds parameters, RNG and (for PCD) the persistent chains."""

    def __init__(self, params, config, rng=None):
        self.params = params
        self.config = config
        self.rng = np.random.default_rng(config.seed if rng is None else rng)
        self.chains = None

    def update(self, data):
        """One minibatch step on ``data`` (a GibbsState built from data rows).

        Returns a stats dict with the mean data free energy and wall time.
        """
        t0 = time.perf_counter()
        cfg = self.config
        params = self.params
        if cfg.persistent:
            if self.chains is None:
                self.chains = GibbsState(data.counts.copy(), data.lengths.copy())
            self.chains = run_chain(params, self.chains, cfg.gibbs_steps, self.rng)
            negative = self.chains
        else:
            negative = run_chain(params, data, cfg.gibbs_steps, self.rng)
        n_pos, n_neg = data.counts.shape[0], negative.counts.shape[0]
        both = DocBatch(sp.vstack([data.counts, negative.counts], format="csr"),
                        np.concatenate([data.lengths, negative.lengths]))
        F, pre = both.free_energies(params)
        coef = np.concatenate([np.full(n_pos, -1.0 / n_pos), np.full(n_neg, 1.0 / n_neg)])
        # descent direction: data phase lowers F, model phase raises it
        hidden = coef[:, None] * expit(pre)
        da = -both.lengths @ hidden
        if not (np.isfinite(hidden).all() and np.isfinite(da).all()):
            raise ParameterBlowUp(
                f"parameter blow-up in CD update (lr={cfg.learning_rate}, "
                f"max|W|={np.abs(params.W).max():.3g})"
            )
        both.apply_gradient(params, hidden, coef, da, cfg.learning_rate)
        F_data = F[:n_pos]
        return {"free_energy": float(F_data.mean()), "seconds": time.perf_counter() - t0}

    def fit(self, corpus, log=None):
        cfg = self.config
        X = corpus.matrix()
        stats = []
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = self.rng.permutation(X.shape[0])
            fe = []
            for lo in range(0, order.size, cfg.batch_size):
                data = GibbsState.from_matrix(X[order[lo:lo + cfg.batch_size]])
                fe.append(self.update(data)["free_energy"])
            rec = {
                "epoch": epoch,
                "trainer": "pcd" if cfg.persistent else "cd",
                "objective": float(np.mean(fe)),
                "wall_seconds": time.perf_counter() - t0,
                "gibbs_steps": cfg.gibbs_steps,
            }
            stats.append(rec)
            if log is not None:
                log(rec)
        return stats


def cd_minibatch_update(params, batch, config, rng, chains=None):
    """Functional form of one CD/PCD step.

    Args:
        params: current RsmParams (not modified).
        batch: list of BowDocument with integer counts.
        config: CdConfig.
        rng: numpy Generator.
        chains: persistent GibbsState to continue from (PCD only).

    Returns:
        (new_params, stats, chains)
    """
    if not batch:
        raise ValueError("empty minibatch")
    trainer = CdTrainer(params.copy(), config, rng)
    trainer.chains = chains
    stats = trainer.update(GibbsState.from_docs(batch, params.K))
    return trainer.params, stats, trainer.chains


def train_cd(corpus, config, params=None, log=None):
    """Full CD/PCD training loop with shuffled minibatches.

    Returns:
        (params, per-epoch stats)
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if corpus.idf:
        raise ValueError("CD needs integer counts; idf-weighted input is not supported")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(len(corpus.vocab), config.hidden, empirical_distribution(corpus), rng)
    trainer = CdTrainer(params, config, rng)
    stats = trainer.fit(corpus, log=log)
    return trainer.params, stats
