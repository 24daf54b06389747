"""Per-node scans used while growing a tree.

Two interchangeable implementations: compiled loops (numba) and vectorised
numpy.  Both consume no randomness and return identical results, so a tree
grown with either is the same.
"""

from __future__ import annotations

import os

import numpy as np

_CHUNK_MIN = 32


def scan_numpy(XT, idx, order, k, live):
    """Walk ``order`` until ``k`` features vary over ``idx``.

    Returns the varying features with their node min and max, plus ``live``
    minus every feature that was scanned and found constant.
    """
    feats, lo, hi, dead = [], [], [], []
    need, pos = k, 0
    while need > 0 and pos < len(order):
        chunk = order[pos: pos + max(4 * need, _CHUNK_MIN)]
        cols = XT[np.ix_(chunk, idx)]
        mn, mx = cols.min(axis=1), cols.max(axis=1)
        varying = mx > mn
        hits = np.flatnonzero(varying)[:need]
        if len(hits) == need:
            stop = hits[-1] + 1  # constants past the k-th hit were never scanned
            chunk, mn, mx, varying = chunk[:stop], mn[:stop], mx[:stop], varying[:stop]
        pos += len(chunk)
        dead.append(chunk[~varying])
        feats.append(chunk[hits])
        lo.append(mn[hits])
        hi.append(mx[hits])
        need -= len(hits)
    dead = np.concatenate(dead) if dead else np.zeros(0, dtype=np.int64)
    if len(dead):
        live = live[~np.isin(live, dead, assume_unique=True)]
    empty = np.zeros(0)
    return (
        np.concatenate(feats).astype(np.int64) if feats else np.zeros(0, dtype=np.int64),
        np.concatenate(lo) if lo else empty,
        np.concatenate(hi) if hi else empty,
        live,
    )


def left_counts_numpy(XT, idx, y, feats, thr, n_classes):
    """``(len(feats), n_classes)`` class counts of samples going left."""
    goes_left = XT[np.ix_(feats, idx)] <= thr[:, None]
    out = np.zeros((len(feats), n_classes))
    cls = y[idx]
    for j in range(len(feats)):
        out[j] = np.bincount(cls[goes_left[j]], minlength=n_classes)
    return out


def _scan_loop(XT, idx, order, k, live, dead_flag):
    m = idx.shape[0]
    feats = np.empty(k, dtype=np.int64)
    lo = np.empty(k)
    hi = np.empty(k)
    found = 0
    n_dead = 0
    dead = np.empty(order.shape[0], dtype=np.int64)
    for p in range(order.shape[0]):
        if found == k:
            break
        f = order[p]
        row = XT[f]
        first = row[idx[0]]
        mn = first
        mx = first
        i = 1
        while i < m and row[idx[i]] == first:
            i += 1
        if i == m:
            dead[n_dead] = f
            n_dead += 1
            continue
        for j in range(i, m):
            v = row[idx[j]]
            if v < mn:
                mn = v
            elif v > mx:
                mx = v
        feats[found] = f
        lo[found] = mn
        hi[found] = mx
        found += 1
    if n_dead == 0:
        return feats[:found], lo[:found], hi[:found], live
    for j in range(n_dead):
        dead_flag[dead[j]] = True
    keep = np.empty(live.shape[0], dtype=np.int64)
    n_keep = 0
    for j in range(live.shape[0]):
        if not dead_flag[live[j]]:
            keep[n_keep] = live[j]
            n_keep += 1
    for j in range(n_dead):
        dead_flag[dead[j]] = False
    return feats[:found], lo[:found], hi[:found], keep[:n_keep]


def _left_counts_loop(XT, idx, y, feats, thr, n_classes):
    out = np.zeros((feats.shape[0], n_classes))
    for j in range(feats.shape[0]):
        row = XT[feats[j]]
        t = thr[j]
        for i in range(idx.shape[0]):
            s = idx[i]
            if row[s] <= t:
                out[j, y[s]] += 1.0
    return out


def _compile():
    if os.environ.get("KWFP_DISABLE_JIT"):
        return None
    try:
        import numba
    except ImportError:
        return None
    jit = numba.njit(cache=True, nogil=True)
    return jit(_scan_loop), jit(_left_counts_loop)


_compiled = _compile()
HAVE_JIT = _compiled is not None


class ScanKernels:
    """Dispatch to compiled or numpy scans; ``dead_flag`` is per-tree scratch."""

    def __init__(self, d: int, use_jit: bool | None = None):
        self.jit = HAVE_JIT if use_jit is None else (use_jit and HAVE_JIT)
        self.dead_flag = np.zeros(d, dtype=np.bool_)

    def scan(self, XT, idx, order, k, live):
        if self.jit:
            return _compiled[0](XT, idx, order, k, live, self.dead_flag)
        return scan_numpy(XT, idx, order, k, live)

    def left_counts(self, XT, idx, y, feats, thr, n_classes):
        if self.jit:
            return _compiled[1](XT, idx, y, feats, thr, n_classes)
        return left_counts_numpy(XT, idx, y, feats, thr, n_classes)
