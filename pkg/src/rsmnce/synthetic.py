"""Synthetic corpora for benchmarks and desk-scale experiments."""
import numpy as np

from .corpus import BowDocument, Corpus, Vocabulary


def _corpus_from_counts(counts, labels=None):
    """Corpus over ``K = counts.shape[1]`` synthetic words ``w0, w1, ...``."""
    n, K = counts.shape
    df = np.maximum((counts > 0).sum(axis=0), 1)
    vocab = Vocabulary(tuple(f"w{k}" for k in range(K)), df, max(n, int(df.max())))
    docs = []
    for i in range(n):
        ids = np.flatnonzero(counts[i])
        if ids.size == 0:
            continue
        docs.append(BowDocument(ids, counts[i, ids].astype(np.float64),
                                label=None if labels is None else int(labels[i])))
    return Corpus(tuple(docs), vocab)


def zipf_unigram(K, exponent=1.0):
    p = 1.0 / np.arange(1, K + 1) ** exponent
    return p / p.sum()


def unigram_corpus(K, n_docs, mean_length=100, rng=None, exponent=1.0):
    """Documents of Poisson length drawn iid from a Zipf unigram."""
    rng = np.random.default_rng(rng)
    p = zipf_unigram(K, exponent)
    lengths = np.maximum(rng.poisson(mean_length, n_docs), 1)
    counts = np.stack([rng.multinomial(L, p) for L in lengths])
    return _corpus_from_counts(counts)


def topic_corpus(n_docs, K, n_topics=3, mean_length=60, rng=None, topic_words=None,
                 topic_weight=0.5, concentration=0.1):
    """Labeled documents mixing a shared Zipf background with one topic.

    Each topic puts Dirichlet(concentration) mass on a random subset of
    ``topic_words`` words (subsets may overlap). A document picks a topic
    uniformly and draws each token from the topic with probability
    ``topic_weight``, otherwise from the background.

    Returns:
        (Corpus with integer topic labels, n_topics x K topic distributions)
    """
    rng = np.random.default_rng(rng)
    topic_words = topic_words or max(K // 5, 2)
    background = zipf_unigram(K)
    topics = np.zeros((n_topics, K))
    for t in range(n_topics):
        words = rng.choice(K, size=topic_words, replace=False)
        topics[t, words] = rng.dirichlet(np.full(topic_words, concentration) + 1.0)
    labels = rng.integers(0, n_topics, size=n_docs)
    lengths = np.maximum(rng.poisson(mean_length, n_docs), 1)
    counts = np.stack([
        rng.multinomial(L, topic_weight * topics[z] + (1.0 - topic_weight) * background)
        for L, z in zip(lengths, labels)
    ])
    return _corpus_from_counts(counts, labels), topics
