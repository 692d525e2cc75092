"""Pure-Python/numpy sampling kernels, used when the extension is not built.

Same signatures and same draw-for-draw results as ``_kernels.pyx``.
"""
import numpy as np
import scipy.sparse as sp


def alias_draw(prob, alias, u_idx, u_cmp):
    K = prob.shape[0]
    j = np.minimum(np.floor(u_idx * K).astype(np.int64), K - 1)
    return np.where(u_cmp < prob[j], j, alias[j])


def multinomial_draw(probs, lengths, uniforms):
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    K = probs.shape[1]
    pos = 0
    for i in range(probs.shape[0]):
        n = int(lengths[i])
        if n == 0:
            continue
        cdf = np.cumsum(probs[i])
        idx = np.searchsorted(cdf, uniforms[pos:pos + n] * cdf[-1], side="right")
        out[pos:pos + n] = np.minimum(idx, K - 1)
        pos += n
    return out


def _csr_parts(rows, tokens, weights, shape):
    X = sp.csr_matrix((weights, (rows, tokens)), shape=shape)
    X.sum_duplicates()
    X.eliminate_zeros()
    return X.indptr.astype(np.int64), X.indices.astype(np.int64), X.data.astype(np.float64)


def pns_sample(indptr, ids, counts, n_retain, u_perm, prob, alias, k, u_idx, u_cmp):
    n = indptr.shape[0] - 1
    K = prob.shape[0]
    retained = []
    upos = 0
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        seq = np.repeat(ids[lo:hi], counts[lo:hi]).tolist()
        D = len(seq)
        for t in range(int(n_retain[i])):
            j = min(t + int(u_perm[upos] * (D - t)), D - 1)
            upos += 1
            seq[t], seq[j] = seq[j], seq[t]
        retained.extend(seq[:int(n_retain[i])])
    retained = np.asarray(retained, dtype=np.int64)
    ret_rows = np.repeat(np.arange(n), n_retain)
    doc_rows = np.repeat(np.arange(n), np.diff(indptr))
    D = np.bincount(doc_rows, weights=counts, minlength=n).astype(np.int64)
    noise = alias_draw(prob, alias, u_idx, u_cmp)
    noise_rows = np.repeat(np.arange(n * k), np.repeat(D - n_retain, k))
    ret = _csr_parts(ret_rows, retained, np.ones(retained.size), (n, K))
    rest = _csr_parts(np.concatenate([doc_rows, ret_rows]), np.concatenate([ids, retained]),
                      np.concatenate([counts, -np.ones(retained.size)]), (n, K))
    return ret, rest, _csr_parts(noise_rows, noise, np.ones(noise.size), (n * k, K))


def scatter_add_rows(target, rows, delta, step):
    target[rows] += step * delta


def softplus_sigmoid(pre):
    e = np.exp(-np.abs(pre))
    sums = (np.maximum(pre, 0.0) + np.log1p(e)).sum(axis=1)
    sig = np.where(pre >= 0, 1.0, e) / (1.0 + e)
    return sums, sig



def csc_rows_times(table, cols, colptr, rows, data, n_rows):
    X = sp.csc_matrix((data, rows, colptr), shape=(n_rows, cols.size))
    return np.asarray(X @ table[cols])


def csc_scatter_update(target, cols, colptr, rows, data, hidden, step):
    X = sp.csc_matrix((data, rows, colptr), shape=(hidden.shape[0], cols.size))
    target[cols] += step * np.asarray(X.T @ hidden)
