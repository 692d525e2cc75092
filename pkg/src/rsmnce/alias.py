"""Alias-method sampling from a fixed categorical distribution.

Construction is O(K) (Vose's small/large work lists); each draw costs one
uniform index, one uniform real and one comparison.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True, eq=False)
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray
    source: np.ndarray

    def __len__(self):
        return self.prob.size

    def reconstruct(self):
        """Distribution the table encodes, recovered from prob/alias."""
        K = self.prob.size
        out = self.prob.copy()
        np.add.at(out, self.alias, 1.0 - self.prob)
        return out / K


def build_alias(dist):
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0:
        raise ValueError("distribution must be a non-empty vector")
    if not np.all(np.isfinite(dist)):
        raise ValueError("distribution has non-finite entries")
    if np.any(dist < 0):
        raise ValueError("distribution has negative entries")
    total = dist.sum()
    if total <= 0:
        raise ValueError("distribution has no positive mass")
    source = dist / total
    K = source.size
    scaled = source * K
    prob = np.ones(K)
    alias = np.arange(K, dtype=np.int64)
    small = [i for i in range(K) if scaled[i] < 1.0]
    large = [i for i in range(K) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        # equivalent to scaled[g] -= 1 - scaled[s], with less cancellation
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    prob.flags.writeable = False
    alias.flags.writeable = False
    source.flags.writeable = False
    return AliasTable(prob, alias, source)


def sample(table, rng):
    return int(sample_many(table, 1, rng)[0])


def sample_many(table, n, rng):
    """``n`` iid draws; ``rng`` is a ``numpy.random.Generator``."""
    u_idx = rng.random(n)
    u_cmp = rng.random(n)
    return kernels.alias_draw(table.prob, table.alias, u_idx, u_cmp)
