"""Shared oracles: brute-force enumeration of tiny RSMs and finite differences.

Nothing here calls the package's free-energy code, so tests that compare
against these helpers are independent checks.
"""
import itertools
import math

import numpy as np
import pytest

from rsmnce import kernels
from rsmnce.corpus import BowDocument
from rsmnce.rsm import RsmParams


def random_params(rng, K, H, scale=1.0):
    return RsmParams(
        rng.normal(0.0, scale, size=(H, K)),
        rng.normal(0.0, scale, size=K),
        rng.normal(0.0, scale / 2, size=H),
    )


def doc_from_counts(counts):
    counts = np.asarray(counts, dtype=np.float64)
    ids = np.flatnonzero(counts)
    return BowDocument(ids, counts[ids])


def hidden_states(H):
    return np.array(list(itertools.product([0.0, 1.0], repeat=H))).reshape(-1, H)


def brute_unnormalized(params, counts):
    """sum_h exp(-E(V, h)) straight from the energy function."""
    v = np.asarray(counts, dtype=np.float64)
    D = v.sum()
    W, b, a = (np.asarray(x, dtype=np.float64) for x in (params.W, params.b, params.a))
    total = 0.0
    for h in hidden_states(W.shape[0]):
        E = -h @ W @ v - b @ v - D * (a @ h)
        total += math.exp(-E)
    return total


def ordered_documents(K, D):
    """Count vectors of all K^D token sequences (with repeats)."""
    out = []
    for seq in itertools.product(range(K), repeat=D):
        out.append(np.bincount(np.array(seq, dtype=np.int64), minlength=K).astype(np.float64))
    return out


def distinct_documents(K, D):
    """Distinct count vectors of length D with their sequence multiplicities."""
    seen = {}
    for v in ordered_documents(K, D):
        key = tuple(v)
        seen[key] = seen.get(key, 0) + 1
    keys = sorted(seen)
    return np.array(keys, dtype=np.float64), np.array([seen[k] for k in keys], dtype=np.float64)


def brute_partition(params, D):
    """Z_D summed over every ordered sequence and every hidden state."""
    return sum(brute_unnormalized(params, v) for v in ordered_documents(params.K, D))


def flat_params(params):
    return np.concatenate([params.W.ravel(), params.b, params.a])


def unflat_params(theta, K, H):
    W = theta[: H * K].reshape(H, K)
    return RsmParams(W, theta[H * K: H * K + K], theta[H * K + K:])


def central_difference(f, x, eps=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += eps
        down[i] -= eps
        g[i] = (f(up) - f(down)) / (2 * eps)
    return g


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.active_backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
