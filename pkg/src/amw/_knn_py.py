"""Pure numpy fallback for the 1-D nearest-neighbour kernel.

Same contract as the compiled ``knn_sorted``: reference scores sorted
ascending with ties ordered by original index, equal distances resolved by
lowest original index.  Each query inspects a window of ``2k`` sorted
neighbours around its insertion point; queries whose k-th distance ties with
an element just outside the window are redone exactly against the full
reference set.
"""

from __future__ import annotations

import numpy as np


def knn_sorted(query, ref_scores, ref_index, k):
    query = np.asarray(query, dtype=float)
    ref_scores = np.asarray(ref_scores, dtype=float)
    ref_index = np.asarray(ref_index, dtype=np.int64)
    nq, m = query.shape[0], ref_scores.shape[0]
    kk = min(int(k), m)
    if nq == 0 or kk == 0:
        return np.empty((nq, kk), dtype=np.int64), np.empty((nq, kk))

    width = min(2 * kk, m)
    pos = np.searchsorted(ref_scores, query, side="left")
    start = np.clip(pos - kk, 0, m - width)
    cols = start[:, None] + np.arange(width)
    cand = ref_index[cols]
    dist = np.abs(query[:, None] - ref_scores[cols])
    order = np.lexsort((cand, dist), axis=1)[:, :kk]
    neighbors = np.take_along_axis(cand, order, axis=1)
    distances = np.take_along_axis(dist, order, axis=1)

    kth = distances[:, -1]
    left_out = start - 1
    right_out = start + width
    tie_left = (left_out >= 0) & (np.abs(query - ref_scores[np.maximum(left_out, 0)]) == kth)
    tie_right = (right_out < m) & (np.abs(query - ref_scores[np.minimum(right_out, m - 1)]) == kth)
    for q in np.flatnonzero(tie_left | tie_right):
        d_all = np.abs(query[q] - ref_scores)
        o = np.lexsort((ref_index, d_all))[:kk]
        neighbors[q] = ref_index[o]
        distances[q] = d_all[o]
    return neighbors, distances
