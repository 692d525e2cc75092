"""Corpus ingestion: tokenizing, vocabulary building, bag-of-words documents.

Documents are kept sparse (sorted term ids plus values). Two transforms are
supported, each applicable once: ``ceil(ln(1 + count))`` on raw counts, and
idf weighting, which makes values and lengths real-valued.
"""
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

STOP_WORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can did do does doing down during
    each few for from further had has have having he her here hers herself him
    himself his how i if in into is it its itself just me more most my myself no
    nor not now of off on once only or other our ours ourselves out over own same
    she should so some such than that the their theirs them themselves then there
    these they this those through to too under until up very was we were what
    when where which while who whom why will with you your yours yourself
    yourselves""".split()
)

_EDGE = re.compile(r"^[^0-9a-z]+|[^0-9a-z]+$")


class TransformError(ValueError):
    pass


def tokenize(text):
    """Lowercase, split on whitespace, strip non-alphanumeric edges."""
    tokens = []
    for raw in text.lower().split():
        tok = _EDGE.sub("", raw)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Word/id map with per-word document frequencies and idf weights.

    ``n_docs`` is the number of raw documents the frequencies were counted
    over; ``idf[k] = ln(n_docs / doc_freq[k])``.
    """

    words: tuple
    doc_freq: np.ndarray
    n_docs: int
    index: dict = field(init=False, repr=False)
    idf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        doc_freq = np.asarray(self.doc_freq, dtype=np.int64)
        if len(doc_freq) != len(self.words):
            raise ValueError("doc_freq length does not match word count")
        if np.any(doc_freq < 1) or np.any(doc_freq > self.n_docs):
            raise ValueError("doc_freq entries must lie in [1, n_docs]")
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        idf = np.log(self.n_docs / doc_freq)
        object.__setattr__(self, "doc_freq", doc_freq)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "idf", idf)

    def __len__(self):
        return len(self.words)

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.words == other.words
            and self.n_docs == other.n_docs
            and np.array_equal(self.doc_freq, other.doc_freq)
        )

    __hash__ = None


def build_vocabulary(raw_docs, max_size, stop_words=frozenset()):
    """Keep the ``max_size`` most frequent non-stop tokens.

    Ties on total frequency go to the token seen first in the corpus.

    Args:
        raw_docs: sequence of token sequences.
        max_size: vocabulary cap K.
        stop_words: tokens never admitted.

    Returns:
        Vocabulary with document frequencies counted over ``raw_docs``.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    raw_docs = list(raw_docs)
    if not raw_docs:
        raise ValueError("empty corpus")
    total = Counter()
    first_seen = {}
    df = Counter()
    for doc in raw_docs:
        kept = [t for t in doc if t not in stop_words]
        for t in kept:
            if t not in first_seen:
                first_seen[t] = len(first_seen)
        total.update(kept)
        df.update(set(kept))
    if not total:
        raise ValueError("empty corpus")
    ranked = sorted(total, key=lambda t: (-total[t], first_seen[t]))[:max_size]
    return Vocabulary(tuple(ranked), np.array([df[t] for t in ranked]), len(raw_docs))


@dataclass(frozen=True, eq=False)
class BowDocument:
    """Sparse term vector. ``ids`` sorted ascending, ``values`` all positive."""

    ids: np.ndarray
    values: np.ndarray
    label: object = None
    log_count: bool = False
    idf: bool = False

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if ids.shape != values.shape or ids.ndim != 1:
            raise ValueError("ids and values must be 1-d and aligned")
        if np.any(values <= 0):
            raise ValueError("document values must be positive")
        if ids.size and np.any(np.diff(ids) <= 0):
            order = np.argsort(ids, kind="stable")
            ids, values = ids[order], values[order]
            if np.any(np.diff(ids) == 0):
                raise ValueError("duplicate term ids")
        ids.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_counts(cls, counts, label=None):
        """Build from a ``{term_id: value}`` mapping."""
        items = sorted((int(k), float(v)) for k, v in counts.items() if v)
        ids = np.array([k for k, _ in items], dtype=np.int64)
        vals = np.array([v for _, v in items], dtype=np.float64)
        return cls(ids, vals, label=label)

    @property
    def length(self):
        return float(self.values.sum())

    @property
    def entries(self):
        return dict(zip(self.ids.tolist(), self.values.tolist()))

    def __len__(self):
        return self.ids.size

    def __eq__(self, other):
        return (
            isinstance(other, BowDocument)
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.values, other.values)
            and self.label == other.label
            and self.log_count == other.log_count
            and self.idf == other.idf
        )

    __hash__ = None


def vectorize(raw_doc, vocab, label=None):
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    counts = Counter(vocab.index[t] for t in raw_doc if t in vocab.index)
    return BowDocument.from_counts(counts, label=label)


def apply_log_count(doc):
    """Replace each count c by ceil(ln(1 + c))."""
    if doc.log_count or doc.idf:
        raise TransformError("double transform")
    values = np.ceil(np.log1p(doc.values))
    return replace(doc, values=values, log_count=True)


def apply_idf(doc, vocab):
    """Scale entry k by ``vocab.idf[k]``; entries whose weight is 0 are dropped."""
    if doc.idf:
        raise TransformError("double transform")
    if doc.ids.size and doc.ids[-1] >= len(vocab):
        raise ValueError("document references ids outside the vocabulary")
    weighted = doc.values * vocab.idf[doc.ids]
    keep = weighted > 0
    return replace(doc, ids=doc.ids[keep], values=weighted[keep], idf=True)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Documents plus their vocabulary and a record of applied transforms."""

    docs: tuple
    vocab: Vocabulary
    log_count: bool = False
    idf: bool = False

    def __post_init__(self):
        docs = tuple(self.docs)
        K = len(self.vocab)
        for d in docs:
            if d.ids.size and d.ids[-1] >= K:
                raise ValueError("document references ids outside the vocabulary")
            if d.log_count != self.log_count or d.idf != self.idf:
                raise TransformError("document transform flags disagree with corpus")
        object.__setattr__(self, "docs", docs)

    @classmethod
    def from_tokens(cls, raw_docs, vocab, labels=None, drop_empty=True):
        """Vectorize token sequences, skipping documents left empty."""
        raw_docs = list(raw_docs)
        if labels is not None and len(labels) != len(raw_docs):
            raise ValueError("labels and documents differ in length")
        docs, dropped = [], 0
        for i, toks in enumerate(raw_docs):
            doc = vectorize(toks, vocab, label=None if labels is None else labels[i])
            if drop_empty and doc.length == 0:
                dropped += 1
                continue
            docs.append(doc)
        if dropped:
            logger.warning("dropped %d documents with no in-vocabulary tokens", dropped)
        return cls(tuple(docs), vocab)

    @property
    def transform_flags(self):
        return {"log_count": self.log_count, "idf": self.idf}

    def __len__(self):
        return len(self.docs)

    def with_log_count(self):
        if self.log_count or self.idf:
            raise TransformError("double transform")
        return Corpus(tuple(apply_log_count(d) for d in self.docs), self.vocab, True, False)

    def with_idf(self):
        if self.idf:
            raise TransformError("double transform")
        docs, dropped = [], 0
        for d in self.docs:
            w = apply_idf(d, self.vocab)
            if w.length == 0:
                dropped += 1
                continue
            docs.append(w)
        if dropped:
            logger.warning("dropped %d documents with zero idf-weighted length", dropped)
        return Corpus(tuple(docs), self.vocab, self.log_count, True)

    def subset(self, indices):
        return Corpus(tuple(self.docs[i] for i in indices), self.vocab, self.log_count, self.idf)

    def labels(self):
        return np.array([d.label for d in self.docs])

    def lengths(self):
        return np.array([d.length for d in self.docs], dtype=np.float64)

    def matrix(self):
        """Documents as an ``n x K`` CSR matrix."""
        return docs_to_csr(self.docs, len(self.vocab))


def docs_to_csr(docs, K):
    indptr = np.zeros(len(docs) + 1, dtype=np.int64)
    np.cumsum([d.ids.size for d in docs], out=indptr[1:])
    ids = np.concatenate([d.ids for d in docs]) if docs else np.zeros(0, np.int64)
    vals = np.concatenate([d.values for d in docs]) if docs else np.zeros(0)
    return sp.csr_matrix((vals, ids, indptr), shape=(len(docs), K))


def empirical_distribution(corpus):
    """Unigram frequencies over the corpus as currently transformed.

    Raises on idf-weighted corpora: the noise distribution is defined on
    unweighted counts.
    """
    if corpus.idf:
        raise TransformError("empirical distribution needs unweighted counts")
    totals = np.zeros(len(corpus.vocab))
    for d in corpus.docs:
        np.add.at(totals, d.ids, d.values)
    mass = totals.sum()
    if mass <= 0:
        raise ValueError("corpus has no tokens")
    return totals / mass


# -- files ------------------------------------------------------------------


def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def read_text_corpus(path):
    """One document per line, tokenized."""
    return [tokenize(line) for line in read_lines(path)]


def read_labels(path):
    return [line.strip() for line in read_lines(path)]


def save_vocabulary(vocab, path, df_path=None):
    df_path = df_path or f"{path}.df"
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(w + "\n" for w in vocab.words)
    with open(df_path, "w", encoding="utf-8") as fh:
        fh.write(f"#T={vocab.n_docs}\n")
        fh.writelines(f"{int(c)}\n" for c in vocab.doc_freq)
    return path, df_path


def load_vocabulary(path, df_path=None):
    df_path = df_path or f"{path}.df"
    words = tuple(read_lines(path))
    lines = read_lines(df_path)
    if not lines or not lines[0].startswith("#T="):
        raise ValueError(f"{df_path}: missing '#T=' header")
    n_docs = int(lines[0][3:])
    return Vocabulary(words, np.array([int(x) for x in lines[1:]]), n_docs)


def save_bow(corpus, path):
    """Write ``doc_id<TAB>term_id<TAB>value`` lines under a ``#K= T=`` header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#K={len(corpus.vocab)} T={len(corpus)}\n")
        for i, d in enumerate(corpus.docs):
            for t, v in zip(d.ids.tolist(), d.values.tolist()):
                fh.write(f"{i}\t{t}\t{v!r}\n")


def load_bow(path, vocab, log_count=False, idf=False, labels=None):
    lines = read_lines(path)
    m = re.fullmatch(r"#K=(\d+) T=(\d+)", lines[0].strip()) if lines else None
    if m is None:
        raise ValueError(f"{path}: bad header")
    K, T = int(m.group(1)), int(m.group(2))
    if K != len(vocab):
        raise ValueError(f"{path}: K={K} but vocabulary has {len(vocab)} words")
    rows = [dict() for _ in range(T)]
    for line in lines[1:]:
        if not line.strip():
            continue
        i, t, v = line.split("\t")
        rows[int(i)][int(t)] = float(v)
    docs = []
    for i, r in enumerate(rows):
        d = BowDocument.from_counts(r, label=None if labels is None else labels[i])
        docs.append(replace(d, log_count=log_count, idf=idf))
    return Corpus(tuple(docs), vocab, log_count, idf)

