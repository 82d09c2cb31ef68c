"""Independent reference implementations used by the tests.

These are deliberately naive (loops, full sorts) and share no code with the
package.
"""

from __future__ import annotations

import numpy as np


def brute_knn(scores, a, k, both=True):
    """{unit: [neighbours]} and match counts by exhaustive enumeration."""
    scores = [float(s) for s in scores]
    a = [int(v) for v in a]
    n = len(scores)
    sets = {}
    for i in range(n):
        if not both and a[i] == 0:
            continue
        cand = [j for j in range(n) if a[j] != a[i]]
        cand.sort(key=lambda j: (abs(scores[i] - scores[j]), j))
        sets[i] = cand[:k]
    counts = np.zeros(n, dtype=int)
    for nb in sets.values():
        for j in nb:
            counts[j] += 1
    return sets, counts


def random_instance(rng, n_max=30, ties=True):
    """Scores on a coarse grid (many exact ties) or continuous, both arms present."""
    n = int(rng.integers(2, n_max + 1))
    a = np.zeros(n, dtype=int)
    n1 = int(rng.integers(1, n))
    a[rng.choice(n, n1, replace=False)] = 1
    if ties and rng.random() < 0.7:
        scores = rng.integers(0, max(2, n // 3), size=n) / 10.0
    else:
        scores = rng.random(n)
    k = int(rng.integers(1, n + 2))
    return scores, a, k


def saturated_b(y, a, r, estimand="ate"):
    """B(K) when every unit is matched to the whole opposite arm.

    Treated unit i is then used by all n0 controls, M_i = n0, and M_j = n1
    for every control; with K = max arm size this gives the closed form
    below, written with per-arm sums of residuals.
    """
    a = np.asarray(a)
    r = np.asarray(r, dtype=float)
    n = a.size
    n1, n0 = int(a.sum()), int(n - a.sum())
    s1, s0 = r[a == 1].sum(), r[a == 0].sum()
    if estimand == "ate":
        k = max(n1, n0)
        return (n0 / k * s1 - n1 / k * s0) / n
    k = n0
    return -(n1 / k * s0) / n1
