"""Independent reference implementations used to check the library.

Each oracle is deliberately naive: brute force, exhaustive enumeration or a
plain grid search, sharing no code with the package under test.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import gammaln


def dirichlet_grid_mle(samples, lo=0.2, hi=20.0, points=21, rounds=12, shrink=0.35):
    """Coarse-to-fine grid search for the Dirichlet MLE in log-concentration space.

    Returns ``(alpha, log_likelihood)``. Works for any K but costs
    ``points ** K`` evaluations per round, so keep K small.
    """
    p = np.asarray(samples, dtype=np.float64)
    n, k = p.shape
    s = np.log(p).sum(axis=0)

    def loglik(a):  # a: (m, k)
        return n * (gammaln(a.sum(axis=1)) - gammaln(a).sum(axis=1)) + (a - 1.0) @ s

    lo_v = np.full(k, np.log(lo))
    hi_v = np.full(k, np.log(hi))
    best = None
    for _ in range(rounds):
        axes = [np.linspace(lo_v[d], hi_v[d], points) for d in range(k)]
        grid = np.exp(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k))
        ll = loglik(grid)
        i = int(np.argmax(ll))
        best = (grid[i], float(ll[i]))
        centre = np.log(grid[i])
        half = (hi_v - lo_v) / 2 * shrink
        lo_v, hi_v = centre - half, centre + half
    return best


def nearest_rank(scores, tau):
    """Percentile by counting: the smallest score with at least tau% of scores at or below it."""
    s = sorted(float(x) for x in scores)
    n = len(s)
    for v in s:
        if 100 * sum(x <= v for x in s) >= tau * n - 1e-9:
            return v
    return s[-1]


def confusion_brute(labels, flags):
    tp = fp = tn = fn = 0
    for lab, f in zip(labels, flags):
        if lab and f:
            tp += 1
        elif lab:
            fn += 1
        elif f:
            fp += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def auroc_pairs(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly, ties counting one half, in percent."""
    pos = [s for s, lab in zip(scores, labels) if lab]
    neg = [s for s, lab in zip(scores, labels) if not lab]
    total = 0.0
    for a, b in itertools.product(pos, neg):
        total += 1.0 if a > b else 0.5 if a == b else 0.0
    return 100.0 * total / (len(pos) * len(neg))
