"""Compiled inner loops for index build, query and (de)serialization."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_ONE = np.uint64(1)


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _tuple_keys(H, tables, seed):
    n, k = H.shape
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        h = _mix(seed + (np.uint64(tables[i]) + _ONE) * _GOLDEN)
        for j in range(k):
            h = _mix(h ^ (H[i, j] + _GOLDEN))
        out[i] = h
    return out


def tuple_keys(H, tables, seed) -> np.ndarray:
    """64-bit keys of atomic-value tuples (rows of ``H``), salted by table index."""
    H = np.ascontiguousarray(H, dtype=np.int64).view(np.uint64)
    return _tuple_keys(H, np.asarray(tables, dtype=np.int64), np.uint64(seed))


@njit(cache=True, nogil=True)
def find_buckets(table_start, keys, tuples, qkeys, qtuples):
    L, k = qtuples.shape
    out = np.full(L, -1, dtype=np.int64)
    for t in range(L):
        lo = table_start[t]
        hi = table_start[t + 1]
        p = lo + np.searchsorted(keys[lo:hi], qkeys[t])
        while p < hi and keys[p] == qkeys[t]:
            same = True
            for j in range(k):
                if tuples[p, j] != qtuples[t, j]:
                    same = False
                    break
            if same:
                out[t] = p
                break
            p += 1
    return out


@njit(cache=True, nogil=True)
def merge_estimate(bidx, meta, slot_hll, sketches, regs, pow2neg):
    """Reset ``regs``, fold in the query's buckets; return (collisions, sum 2^-M, zero registers).

    ``meta[b] = (start, end, sketch_row)``; ``slot_hll[p] = register << 8 | rank`` for ``ids[p]``.
    """
    m = regs.shape[0]
    regs[:] = 0
    collisions = 0
    for t in range(bidx.shape[0]):
        b = bidx[t]
        if b < 0:
            continue
        s0 = meta[b, 0]
        s1 = meta[b, 1]
        row = meta[b, 2]
        collisions += s1 - s0
        if row >= 0:
            for j in range(m):
                v = sketches[row, j]
                if v > regs[j]:
                    regs[j] = v
        else:
            for p in range(s0, s1):
                packed = slot_hll[p]
                j = packed >> 8
                v = np.uint8(packed & 0xFF)
                if v > regs[j]:
                    regs[j] = v
    total = 0.0
    zeros = 0
    for j in range(m):
        total += pow2neg[regs[j]]
        if regs[j] == 0:
            zeros += 1
    return collisions, total, zeros


@njit(cache=True, nogil=True)
def gather_dedup(bidx, meta, ids, stamp, gen, out):
    """Distinct ids of the query's buckets via a generation-stamped table; returns the count."""
    c = 0
    for t in range(bidx.shape[0]):
        b = bidx[t]
        if b < 0:
            continue
        for p in range(meta[b, 0], meta[b, 1]):
            # branch-free: whether an id is new is unpredictable
            i = ids[p]
            out[c] = i
            c += stamp[i] != gen
            stamp[i] = gen
    return c


@njit(cache=True, nogil=True)
def build_sketches(offsets, ids, sketch_row, pos, rank, sketches):
    for b in range(sketch_row.shape[0]):
        row = sketch_row[b]
        if row < 0:
            continue
        for p in range(offsets[b], offsets[b + 1]):
            i = ids[p]
            if rank[i] > sketches[row, pos[i]]:
                sketches[row, pos[i]] = rank[i]


# -- serialization -------------------------------------------------------------

@njit(cache=True, nogil=True)
def _put_u64(buf, o, v):
    for s in range(8):
        buf[o + s] = np.uint8((v >> np.uint64(8 * s)) & np.uint64(0xFF))
    return o + 8


@njit(cache=True, nogil=True)
def _get_u64(buf, o):
    v = np.uint64(0)
    for s in range(8):
        v |= np.uint64(buf[o + s]) << np.uint64(8 * s)
    return v


@njit(cache=True, nogil=True)
def serialize_tables(table_start, keys, tuples, offsets, ids, sketch_row, sketches, m, seed):
    L = table_start.shape[0] - 1
    k = tuples.shape[1]
    B = keys.shape[0]
    size = 8 * L + B * (8 + 8 * k + 8 + 1) + 8 * ids.shape[0]
    for b in range(B):
        if sketch_row[b] >= 0:
            size += 12 + m
    buf = np.empty(size, dtype=np.uint8)
    o = 0
    for t in range(L):
        o = _put_u64(buf, o, np.uint64(table_start[t + 1] - table_start[t]))
        for b in range(table_start[t], table_start[t + 1]):
            o = _put_u64(buf, o, keys[b])
            for j in range(k):
                o = _put_u64(buf, o, np.uint64(tuples[b, j]))
            o = _put_u64(buf, o, np.uint64(offsets[b + 1] - offsets[b]))
            for p in range(offsets[b], offsets[b + 1]):
                o = _put_u64(buf, o, np.uint64(ids[p]))
            if sketch_row[b] >= 0:
                buf[o] = 1
                o += 1
                for s in range(4):
                    buf[o + s] = np.uint8((m >> (8 * s)) & 0xFF)
                o += 4
                o = _put_u64(buf, o, seed)
                for j in range(m):
                    buf[o + j] = sketches[sketch_row[b], j]
                o += m
            else:
                buf[o] = 0
                o += 1
    return buf


@njit(cache=True, nogil=True)
def _scan(buf, start, L, k, m, seed, n):
    """Validate the table section; return (status, buckets, ids, sketches, end)."""
    o = start
    N = buf.shape[0]
    B = 0
    nid = 0
    S = 0
    for t in range(L):
        if o + 8 > N:
            return 1, 0, 0, 0, o
        cnt = np.int64(_get_u64(buf, o))
        o += 8
        if cnt < 0 or cnt > N:
            return 1, 0, 0, 0, o
        for _ in range(cnt):
            if o + 8 * k + 16 > N:
                return 1, 0, 0, 0, o
            o += 8 + 8 * k
            size = np.int64(_get_u64(buf, o))
            o += 8
            if size < 0 or size > n or o + 8 * size + 1 > N:
                return 1, 0, 0, 0, o
            for p in range(size):
                if _get_u64(buf, o + 8 * p) >= np.uint64(n):
                    return 2, 0, 0, 0, o
            o += 8 * size
            flag = buf[o]
            o += 1
            if flag == 1:
                if o + 12 + m > N:
                    return 1, 0, 0, 0, o
                mm = 0
                for s in range(4):
                    mm |= np.int64(buf[o + s]) << (8 * s)
                if mm != m or _get_u64(buf, o + 4) != seed:
                    return 3, 0, 0, 0, o
                for j in range(m):
                    if buf[o + 12 + j] > 64:
                        return 2, 0, 0, 0, o
                o += 12 + m
                S += 1
            elif flag != 0:
                return 2, 0, 0, 0, o
            B += 1
            nid += size
    return 0, B, nid, S, o


@njit(cache=True, nogil=True)
def _fill(buf, start, L, k, m, table_start, keys, tuples, offsets, ids, sketch_row, sketches):
    o = start
    b = 0
    nid = 0
    s_count = 0
    offsets[0] = 0
    for t in range(L):
        table_start[t] = b
        cnt = np.int64(_get_u64(buf, o))
        o += 8
        for _ in range(cnt):
            keys[b] = _get_u64(buf, o)
            o += 8
            for j in range(k):
                tuples[b, j] = np.int64(_get_u64(buf, o))
                o += 8
            size = np.int64(_get_u64(buf, o))
            o += 8
            for p in range(size):
                ids[nid + p] = np.int64(_get_u64(buf, o))
                o += 8
            nid += size
            offsets[b + 1] = nid
            if buf[o] == 1:
                o += 13
                for j in range(m):
                    sketches[s_count, j] = buf[o + j]
                sketch_row[b] = s_count
                s_count += 1
                o += m
            else:
                sketch_row[b] = -1
                o += 1
            b += 1
    table_start[L] = b


def parse_tables(buf, start, L, k, m, seed, n):
    status, B, nid, S, end = _scan(buf, start, L, k, m, np.uint64(seed), n)
    if status:
        return status, None
    table_start = np.empty(L + 1, np.int64)
    keys = np.empty(B, np.uint64)
    tuples = np.empty((B, k), np.int64)
    offsets = np.empty(B + 1, np.int64)
    ids = np.empty(nid, np.int64)
    sketch_row = np.empty(B, np.int64)
    sketches = np.zeros((S, m), np.uint8)
    _fill(buf, start, L, k, m, table_start, keys, tuples, offsets, ids, sketch_row, sketches)
    return 0, (table_start, keys, tuples, offsets, ids, sketch_row, sketches, end)


# -- dense distances -------------------------------------------------------------
# metric codes: 0 = l1, 1 = l2, 2 = cosine on unit rows (1 - dot, clipped to [0, 2])

@njit(cache=True, nogil=True)
def _row_dist(X, i, q, code):
    acc = 0.0
    if code == 0:
        for j in range(q.shape[0]):
            acc += abs(X[i, j] - q[j])
        return acc
    if code == 1:
        for j in range(q.shape[0]):
            t = X[i, j] - q[j]
            acc += t * t
        return np.sqrt(acc)
    for j in range(q.shape[0]):
        acc += X[i, j] * q[j]
    return min(max(1.0 - acc, 0.0), 2.0)


@njit(cache=True, nogil=True)
def dense_dist_all(X, q, code):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = _row_dist(X, i, q, code)
    return out


@njit(cache=True, nogil=True)
def dense_dist_ids(X, q, ids, code):
    out = np.empty(ids.shape[0])
    for t in range(ids.shape[0]):
        out[t] = _row_dist(X, ids[t], q, code)
    return out


@njit(cache=True, nogil=True)
def dense_within_all(X, q, code, r, out_ids, out_d):
    """Scan every row; keep those within ``r``.  Returns the count kept."""
    c = 0
    for i in range(X.shape[0]):
        v = _row_dist(X, i, q, code)
        out_ids[c] = i
        out_d[c] = v
        c += v <= r
    return c


@njit(cache=True, nogil=True)
def dense_within_ids(X, q, ids, code, r, out_ids, out_d):
    c = 0
    for t in range(ids.shape[0]):
        i = ids[t]
        v = _row_dist(X, i, q, code)
        out_ids[c] = i
        out_d[c] = v
        c += v <= r
    return c


@njit(cache=True, nogil=True)
def stamped_ids(stamp, gen, out):
    """Ids carrying generation ``gen``, in increasing order."""
    c = 0
    for i in range(stamp.shape[0]):
        out[c] = i
        c += stamp[i] == gen
    return c
