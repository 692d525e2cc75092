"""Downstream evaluation of hidden-posterior features.

Retrieval ranks index documents by cosine similarity to each query;
classification is multinomial logistic regression trained by minibatch SGD.
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .corpus import TransformError
from .rsm import DocBatch

RECALL_LEVELS = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


@dataclass(eq=False)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels)
        if self.labels.shape[0] != self.rows.shape[0]:
            raise ValueError("labels are not aligned with feature rows")

    def __len__(self):
        return self.rows.shape[0]


def extract_features(params, corpus, transform_flags=None):
    """Hidden posteriors of every document.

    ``transform_flags`` are the ones the model was trained with; a corpus
    prepared differently is rejected.
    """
    if transform_flags is not None and dict(transform_flags) != corpus.transform_flags:
        raise TransformError(
            f"corpus transforms {corpus.transform_flags} differ from model's {dict(transform_flags)}"
        )
    if len(corpus.vocab) != params.K:
        raise ValueError(f"vocabulary size {len(corpus.vocab)} != model K={params.K}")
    batch = DocBatch(corpus.matrix())
    return FeatureMatrix(batch.posteriors(params), corpus.labels())


@dataclass(eq=False)
class RetrievalReport:
    pr_curve: list
    map: float
    average_precision: np.ndarray = field(repr=False)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("recall,precision\n")
            for r, p in self.pr_curve:
                fh.write(f"{r!r},{p!r}\n")
            fh.write(f"# map={self.map!r}\n")


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def _rank_chunk(q, q_labels, index_unit, index_labels, levels):
    sims = q @ index_unit.T
    order = np.argsort(-sims, axis=1, kind="stable")
    rel = index_labels[order] == q_labels[:, None]
    hits = np.cumsum(rel, axis=1)
    prec = hits / np.arange(1, rel.shape[1] + 1)
    n_rel = rel.sum(axis=1)
    safe = np.maximum(n_rel, 1)
    ap = np.where(n_rel > 0, (prec * rel).sum(axis=1) / safe, 0.0)
    recall = hits / safe[:, None]
    best_after = np.maximum.accumulate(prec[:, ::-1], axis=1)[:, ::-1]
    curve = np.zeros((q.shape[0], len(levels)))
    for j, r in enumerate(levels):
        reached = recall >= r - 1e-12
        first = reached.argmax(axis=1)
        ok = reached[np.arange(q.shape[0]), first] & (n_rel > 0)
        curve[:, j] = np.where(ok, best_after[np.arange(q.shape[0]), first], 0.0)
    return ap, curve


def retrieve(queries, index, recall_levels=RECALL_LEVELS, chunk=256, threads=1):
    """Cosine-similarity retrieval; a hit is an index document with the query's label.

    Average precision is taken over the ranks of all relevant index documents
    (queries without any relevant document score 0). The P-R curve is the
    interpolated precision (best precision at any recall >= r), averaged
    over queries.
    """
    if len(index) == 0:
        raise ValueError("empty index")
    if queries.rows.shape[1] != index.rows.shape[1]:
        raise ValueError("queries and index have different feature widths")
    iu = _unit_rows(index.rows)
    qu = _unit_rows(queries.rows)
    spans = [(lo, min(lo + chunk, len(queries))) for lo in range(0, len(queries), chunk)]

    def run(span):
        lo, hi = span
        return _rank_chunk(qu[lo:hi], queries.labels[lo:hi], iu, index.labels, recall_levels)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    ap = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    curve = np.vstack([p[1] for p in parts]).mean(axis=0) if parts else np.zeros(len(recall_levels))
    return RetrievalReport(
        [(float(r), float(p)) for r, p in zip(recall_levels, curve)],
        float(ap.mean()) if ap.size else 0.0,
        ap,
    )


def average_precision(relevance):
    """AP of one ranked relevance list (1 = relevant), over all relevant items."""
    rel = np.asarray(relevance, dtype=bool)
    if not rel.any():
        return 0.0
    prec = np.cumsum(rel) / np.arange(1, rel.size + 1)
    return float(prec[rel].mean())


# -- classification -------------------------------------------------------


@dataclass(eq=False)
class SoftmaxClassifier:
    weights: np.ndarray  # classes x H
    bias: np.ndarray
    classes: np.ndarray
    loss_history: list = field(default_factory=list)

    def scores(self, X):
        return np.asarray(X) @ self.weights.T + self.bias

    def predict(self, X):
        return self.classes[np.argmax(self.scores(X), axis=1)]

    def predict_proba(self, X):
        return softmax(self.scores(X), axis=1)


def loss_and_grad(weights, bias, X, y, l2):
    """Mean cross-entropy plus ``l2/2 * ||weights||^2`` (bias unpenalized).

    ``y`` holds class positions in ``0..C-1``.
    """
    logp = log_softmax(X @ weights.T + bias, axis=1)
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * np.sum(weights * weights)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, delta.T @ X + l2 * weights, delta.sum(axis=0)


def train_classifier(train, classes=None, l2=0.0, epochs=100, lr=0.1, seed=0, batch_size=32):
    """Multinomial logistic regression by minibatch SGD; two classes is plain logistic regression.

    Args:
        train: FeatureMatrix.
        classes: number of classes expected (checked), or None to infer.
        l2: weight penalty.
        epochs, lr, batch_size: SGD schedule.
        seed: shuffling seed.
    """
    labels = np.unique(train.labels)
    if labels.size < 2:
        raise ValueError("training set has a single class")
    if classes is not None and classes != labels.size:
        raise ValueError(f"expected {classes} classes, found {labels.size}")
    y = np.searchsorted(labels, train.labels)
    X = train.rows
    rng = np.random.default_rng(seed)
    W = np.zeros((labels.size, X.shape[1]))
    c = np.zeros(labels.size)
    history = []
    for _ in range(epochs):
        order = rng.permutation(X.shape[0])
        for lo in range(0, order.size, batch_size):
            idx = order[lo:lo + batch_size]
            _, gW, gc = loss_and_grad(W, c, X[idx], y[idx], l2)
            W -= lr * gW
            c -= lr * gc
        history.append(loss_and_grad(W, c, X, y, l2)[0])
    return SoftmaxClassifier(W, c, labels, history)


def classify_accuracy(classifier, test):
    if len(test) == 0:
        raise ValueError("empty test set")
    return float(np.mean(classifier.predict(test.rows) == test.labels))


def write_classification_report(path, accuracy, n_test, classes):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"accuracy": accuracy, "n_test": n_test, "classes": classes}, fh)
        fh.write("\n")
