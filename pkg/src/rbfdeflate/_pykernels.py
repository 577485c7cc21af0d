"""Numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module.
Per-row sums accumulate in ascending column order, so ``csr_matvec`` and
``radius_pairs`` agree bitwise with the compiled versions.
"""
import numpy as np


def csr_matvec(indptr, indices, data, x):
    nrows = indptr.shape[0] - 1
    rows = np.repeat(np.arange(nrows), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=nrows)


def _candidates(queries, origin, h, shape, strides, order, starts, offsets):
    """Yield (query_idx, site_idx) candidate arrays, one batch per offset."""
    cells = np.floor((queries - origin) / h).astype(np.intp)
    qidx = np.arange(queries.shape[0])
    for off in offsets:
        nc = cells + off
        ok = np.all((nc >= 0) & (nc < shape), axis=1)
        if not ok.any():
            continue
        key = nc[ok] @ strides
        lo = starts[key]
        counts = starts[key + 1] - lo
        total = int(counts.sum())
        if total == 0:
            continue
        first = np.cumsum(counts) - counts
        pos = np.arange(total) - np.repeat(first, counts) + np.repeat(lo, counts)
        yield np.repeat(qidx[ok], counts), order[pos]


def _sqdist(queries, sites, qi, sj):
    r2 = np.zeros(qi.shape[0])
    for a in range(queries.shape[1]):
        diff = queries[qi, a] - sites[sj, a]
        r2 = r2 + diff * diff
    return r2


def radius_pairs(queries, sites, origin, h, shape, strides, order, starts, offsets):
    nq = queries.shape[0]
    qs, js, ds = [], [], []
    for qi, sj in _candidates(queries, origin, h, shape, strides, order, starts, offsets):
        r2 = _sqdist(queries, sites, qi, sj)
        keep = r2 < h * h
        qs.append(qi[keep])
        js.append(sj[keep])
        ds.append(np.sqrt(r2[keep]))
    if not qs:
        return np.zeros(nq + 1, dtype=np.intp), np.empty(0, np.intp), np.empty(0)
    qi = np.concatenate(qs)
    sj = np.concatenate(js)
    dist = np.concatenate(ds)
    perm = np.lexsort((sj, qi))
    indptr = np.zeros(nq + 1, dtype=np.intp)
    np.cumsum(np.bincount(qi, minlength=nq), out=indptr[1:])
    return indptr, sj[perm].astype(np.intp), dist[perm]


def rbf_eval_sum(queries, sites, weights, origin, h, shape, strides, order, starts, offsets):
    indptr, idx, dist = radius_pairs(queries, sites, origin, h, shape, strides,
                                     order, starts, offsets)
    t = dist / h
    s2 = (1.0 - t) * (1.0 - t)
    vals = weights[idx] * (s2 * s2 * (4.0 * t + 1.0))
    rows = np.repeat(np.arange(queries.shape[0]), np.diff(indptr))
    return np.bincount(rows, weights=vals, minlength=queries.shape[0])
