"""Per-minibatch timing of CD and NCE updates across vocabulary sizes."""
import csv
import re
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .cd import CdConfig, CdTrainer, GibbsState
from .corpus import empirical_distribution
from .nce import NceConfig, NceTrainer
from .rsm import init_params
from .synthetic import unigram_corpus

DEFAULT_VOCAB_SIZES = (100, 1000, 5000, 20000)
DEFAULT_CONFIGS = ("cd1", "cd5", "nce5", "nce25")


@dataclass
class TimingRecord:
    trainer: str
    K: int
    gibbs_steps: int
    noise_k: int
    mean_seconds: float
    std_seconds: float
    batches: int
    backend: str


def parse_config(name):
    """``cd<steps>``, ``pcd<steps>`` or ``nce<k>`` -> (trainer, number)."""
    m = re.fullmatch(r"(cd|pcd|nce)(\d+)", name)
    if m is None or int(m.group(2)) < 1:
        raise ValueError(f"bad trainer config {name!r}; use e.g. cd1, pcd5, nce25")
    return m.group(1), int(m.group(2))


def time_config(name, K, hidden=128, batch_size=128, batches=20, warmup=3, doc_length=100,
                alpha=0.5, seed=0):
    """Time ``batches`` minibatch updates after ``warmup`` untimed ones.

    NCE timings include noise generation for the batch (no caching).
    """
    trainer_id, n = parse_config(name)
    rng = np.random.default_rng(seed)
    n_distinct = min(batches + warmup, 4)
    corpus = unigram_corpus(K, batch_size * n_distinct, doc_length, rng)
    X = corpus.matrix()
    unigram = empirical_distribution(corpus)
    params = init_params(K, hidden, unigram, rng)
    slices = [X[i * batch_size:(i + 1) * batch_size] for i in range(n_distinct)]
    if trainer_id == "nce":
        trainer = NceTrainer(params, NceConfig(k=n, alpha=alpha, batch_size=batch_size, hidden=hidden,
                                               learning_rate=0.01, seed=seed), unigram, rng=rng)

        def step(Xb):
            trainer.update(trainer.make_bundles(Xb))
    else:
        cfg = CdConfig(gibbs_steps=n, persistent=trainer_id == "pcd", batch_size=batch_size,
                       hidden=hidden, learning_rate=0.01, seed=seed)
        trainer = CdTrainer(params, cfg, rng)

        def step(Xb):
            trainer.update(GibbsState.from_matrix(Xb))

    times = []
    for i in range(warmup + batches):
        t0 = time.perf_counter()
        step(slices[i % n_distinct])
        if i >= warmup:
            times.append(time.perf_counter() - t0)
    times = np.asarray(times)
    return TimingRecord(
        trainer=trainer_id,
        K=K,
        gibbs_steps=n if trainer_id != "nce" else 0,
        noise_k=n if trainer_id == "nce" else 0,
        mean_seconds=float(times.mean()),
        std_seconds=float(times.std()),
        batches=int(times.size),
        backend=kernels.active_backend(),
    )


def run_benchmark(vocab_sizes=DEFAULT_VOCAB_SIZES, configs=DEFAULT_CONFIGS, log=None, **kwargs):
    records = []
    for K in vocab_sizes:
        for name in configs:
            rec = time_config(name, K, **kwargs)
            records.append(rec)
            if log is not None:
                log(rec)
    return records


def write_timings(records, path):
    fields = list(TimingRecord.__dataclass_fields__)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in records:
            w.writerow(asdict(r))
