# cython: language_level=3
"""Compiled sampling kernels.

Every routine consumes uniforms drawn by the caller, so results match the
pure-Python versions in ``_pykernels`` draw for draw.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64


cdef inline i64 _alias_one(const f64[::1] prob, const i64[::1] alias, i64 K,
                           f64 u_idx, f64 u_cmp) nogil:
    cdef i64 j = <i64>floor(u_idx * K)
    if j >= K:
        j = K - 1
    if u_cmp < prob[j]:
        return j
    return alias[j]


def alias_draw(const f64[::1] prob, const i64[::1] alias,
               const f64[::1] u_idx, const f64[::1] u_cmp):
    cdef Py_ssize_t n = u_idx.shape[0], t
    cdef i64 K = prob.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef i64[::1] o = out
    with nogil:
        for t in range(n):
            o[t] = _alias_one(prob, alias, K, u_idx[t], u_cmp[t])
    return out


def multinomial_draw(const f64[:, ::1] probs, const i64[::1] lengths,
                     const f64[::1] uniforms):
    """Draw lengths[i] tokens from row i of probs by a cumulative scan."""
    cdef Py_ssize_t n = probs.shape[0], K = probs.shape[1]
    cdef Py_ssize_t i, k, t, pos = 0, lo, hi, mid
    cdef f64 acc, target
    cdef f64[::1] cdf = np.empty(K, dtype=np.float64)
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    cdef i64[::1] o = out
    with nogil:
        for i in range(n):
            if lengths[i] == 0:
                continue
            acc = 0.0
            for k in range(K):
                acc = acc + probs[i, k]
                cdf[k] = acc
            for t in range(lengths[i]):
                target = uniforms[pos] * acc
                # first k with target < cdf[k]
                lo = 0
                hi = K
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cdf[mid] <= target:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo >= K:
                    lo = K - 1
                o[pos] = lo
                pos += 1
    return out


cdef inline void _sort_row(i64* idx, f64* val, Py_ssize_t n) noexcept nogil:
    # insertion sort; rows are short
    cdef Py_ssize_t a, b
    cdef i64 ki
    cdef f64 kv
    for a in range(1, n):
        ki = idx[a]
        kv = val[a]
        b = a - 1
        while b >= 0 and idx[b] > ki:
            idx[b + 1] = idx[b]
            val[b + 1] = val[b]
            b -= 1
        idx[b + 1] = ki
        val[b + 1] = kv


def pns_sample(const i64[::1] indptr, const i64[::1] ids, const i64[::1] counts,
               const i64[::1] n_retain, const f64[::1] u_perm,
               const f64[::1] prob, const i64[::1] alias, i64 k,
               const f64[::1] u_idx, const f64[::1] u_cmp):
    """Partial noise sampling for a batch of integer-count documents.

    Document i's tokens are laid out in CSR order and the first n_retain[i]
    positions of a partial Fisher-Yates shuffle are retained; each of its k
    noise documents then gets D_i - n_retain[i] alias draws.

    Returns:
        (retained, rest, noise), each a CSR triple (indptr, indices, data)
        with sorted, duplicate-free column indices; rest is the data
        document minus its retained tokens.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, e, c, t, j, q, D, Dr, m, upos = 0, npos = 0
    cdef Py_ssize_t rnz = 0, snz = 0, znz = 0, row = 0
    cdef i64 K = prob.shape[0], tmp, w, max_len = 0, total_n = 0
    for i in range(n):
        D = 0
        for e in range(indptr[i], indptr[i + 1]):
            D += counts[e]
        if D > max_len:
            max_len = D
        total_n += k * (D - n_retain[i])
    nnz_x = indptr[n]
    r_ptr = np.zeros(n + 1, dtype=np.int64)
    r_idx = np.empty(nnz_x, dtype=np.int64)
    r_val = np.empty(nnz_x, dtype=np.float64)
    s_ptr = np.zeros(n + 1, dtype=np.int64)
    s_idx = np.empty(nnz_x, dtype=np.int64)
    s_val = np.empty(nnz_x, dtype=np.float64)
    z_ptr = np.zeros(n * k + 1, dtype=np.int64)
    z_idx = np.empty(total_n, dtype=np.int64)
    z_val = np.empty(total_n, dtype=np.float64)
    cdef i64[::1] rp = r_ptr, ri = r_idx, sp_ = s_ptr, si = s_idx, zp = z_ptr, zi = z_idx
    cdef f64[::1] rv = r_val, sv = s_val, zv = z_val
    cdef i64[::1] seq = np.empty(max(max_len, 1), dtype=np.int64)
    cdef i64[::1] kept = np.zeros(K, dtype=np.int64)
    cdef i64[::1] seen = np.full(K, -1, dtype=np.int64)
    cdef i64[::1] slot = np.empty(K, dtype=np.int64)
    with nogil:
        for i in range(n):
            D = 0
            for e in range(indptr[i], indptr[i + 1]):
                for c in range(counts[e]):
                    seq[D] = ids[e]
                    D += 1
            Dr = n_retain[i]
            for t in range(Dr):
                j = t + <Py_ssize_t>floor(u_perm[upos] * (D - t))
                upos += 1
                if j >= D:
                    j = D - 1
                tmp = seq[t]
                seq[t] = seq[j]
                seq[j] = tmp
                kept[seq[t]] += 1
            # split the (sorted) document row into retained and rest
            for e in range(indptr[i], indptr[i + 1]):
                w = ids[e]
                if kept[w] > 0:
                    ri[rnz] = w
                    rv[rnz] = kept[w]
                    rnz += 1
                if counts[e] > kept[w]:
                    si[snz] = w
                    sv[snz] = counts[e] - kept[w]
                    snz += 1
                kept[w] = 0
            rp[i + 1] = rnz
            sp_[i + 1] = snz
            m = D - Dr
            for q in range(k):
                c = znz
                for t in range(m):
                    w = _alias_one(prob, alias, K, u_idx[npos], u_cmp[npos])
                    npos += 1
                    if seen[w] != row:
                        seen[w] = row
                        slot[w] = znz
                        zi[znz] = w
                        zv[znz] = 1.0
                        znz += 1
                    else:
                        zv[slot[w]] += 1.0
                _sort_row(&zi[c], &zv[c], znz - c)
                row += 1
                zp[row] = znz
    return ((r_ptr, r_idx[:rnz], r_val[:rnz]), (s_ptr, s_idx[:snz], s_val[:snz]),
            (z_ptr, z_idx[:znz], z_val[:znz]))
