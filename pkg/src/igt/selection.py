"""Pruning of the candidate transformation set by pairwise distinguishability.

For every pair of candidates a fresh binary probe learns to tell ``Psi_i(x)``
from ``Psi_j(x)``. Pairs it cannot separate (held-out accuracy near chance)
are redundant; each group of mutually redundant transforms keeps only its
simplest member.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .errors import InsufficientData
from .imaging import TransformSpec, apply_transform

logger = logging.getLogger(__name__)

DEFAULT_BAND = (0.45, 0.55)


@dataclass(frozen=True)
class PairAccuracy:
    i: int
    j: int
    accuracy: float
    n_eval: int

    def __post_init__(self):
        if self.i <= self.j:
            raise ValueError("pair must satisfy i > j")
        if self.n_eval <= 0:
            raise ValueError("accuracy needs at least one evaluated example")


def logistic_probe(X_train, y_train, l2: float = 1e-2, max_iter: int = 200):
    """L2-regularised logistic regression fit with L-BFGS; returns a predict function."""
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    n, d = X.shape
    s = 2.0 * y - 1.0

    def objective(wb):
        w, b = wb[:-1], wb[-1]
        z = s * (X @ w + b)
        loss = -log_expit(z).mean() + 0.5 * l2 * (w @ w)
        g = -s * expit(-z) / n
        return loss, np.concatenate([X.T @ g + l2 * w, [g.sum()]])

    res = minimize(objective, np.zeros(d + 1), jac=True, method="L-BFGS-B", options={"maxiter": max_iter})
    w, b = res.x[:-1], res.x[-1]
    return lambda Z: (np.asarray(Z, dtype=np.float64) @ w + b > 0).astype(int)


def pairwise_accuracy(images, spec_i: TransformSpec, spec_j: TransformSpec, trainer: Callable | None = None,
                      eval_fraction: float = 0.3, min_images: int = 20, seed: int = 0) -> PairAccuracy:
    """Held-out accuracy of a binary probe separating ``Psi_i(x)`` from ``Psi_j(x)``.

    Source images (not transformed copies) are split, so no image contributes
    to both sides of the split.
    """
    if spec_i.index == spec_j.index:
        raise ValueError("need two distinct transforms")
    images = np.asarray(images, dtype=np.float64)
    n = len(images)
    if n < min_images:
        raise InsufficientData(f"{n} images, need at least {min_images}")
    trainer = trainer or logistic_probe
    if spec_i.index < spec_j.index:
        spec_i, spec_j = spec_j, spec_i
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_eval = max(1, int(round(n * eval_fraction)))
    ev, tr = order[:n_eval], order[n_eval:]
    a = apply_transform(images, spec_i).reshape(n, -1)
    b = apply_transform(images, spec_j).reshape(n, -1)

    def stack(idx):
        return np.concatenate([a[idx], b[idx]]), np.concatenate([np.zeros(len(idx), int), np.ones(len(idx), int)])

    predictor = trainer(*stack(tr))
    Xe, ye = stack(ev)
    acc = float((predictor(Xe) == ye).mean())
    return PairAccuracy(spec_i.index, spec_j.index, acc, len(ye))


def all_pair_accuracies(images, candidates: Sequence[TransformSpec], seed: int = 0, **kw) -> list[PairAccuracy]:
    """Every unordered pair, in ``(i, j)`` order with ``i > j``."""
    out = []
    by_index = {c.index: c for c in candidates}
    for j, i in itertools.combinations(sorted(by_index), 2):
        out.append(pairwise_accuracy(images, by_index[i], by_index[j], seed=seed, **kw))
    return out


def prune(candidates: Sequence[TransformSpec], pair_accuracies: Sequence[PairAccuracy],
          band=DEFAULT_BAND) -> list[TransformSpec]:
    """Keep one spec per connected component of the redundancy graph.

    Edges join pairs whose accuracy lies in ``band`` (inclusive). The survivor
    of a component has the fewest active operations, ties going to the lowest
    index. The result is ordered by index.
    """
    lo, hi = band
    idx = [c.index for c in candidates]
    parent = {i: i for i in idx}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for p in pair_accuracies:
        if lo <= p.accuracy <= hi and p.i in parent and p.j in parent:
            ru, rv = find(p.i), find(p.j)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
    best: dict = {}
    for c in candidates:
        r = find(c.index)
        if r not in best or (c.n_ops, c.index) < (best[r].n_ops, best[r].index):
            best[r] = c
    return sorted(best.values(), key=lambda c: c.index)


def select_transforms(images, candidates: Sequence[TransformSpec], band=DEFAULT_BAND, seed: int = 0,
                      max_images: int | None = 400, **kw):
    """Measure all pairs on (at most ``max_images``) images and prune; returns ``(kept, pairs)``."""
    images = np.asarray(images, dtype=np.float64)
    if max_images is not None and len(images) > max_images:
        pick = np.sort(np.random.default_rng(seed).choice(len(images), max_images, replace=False))
        images = images[pick]
    pairs = all_pair_accuracies(images, candidates, seed=seed, **kw)
    kept = prune(candidates, pairs, band)
    logger.info("selection kept %d of %d transforms", len(kept), len(candidates))
    return kept, pairs


def write_selection_report(path, candidates: Sequence[TransformSpec], pairs: Sequence[PairAccuracy],
                           kept: Sequence[TransformSpec], band=DEFAULT_BAND) -> None:
    """One row per pair: accuracy, which of the two survive, and why."""
    kept_idx = {c.index for c in kept}
    lo, hi = band
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "accuracy", "kept", "dropped", "reason"])
        for p in pairs:
            k = [str(x) for x in (p.i, p.j) if x in kept_idx]
            d = [str(x) for x in (p.i, p.j) if x not in kept_idx]
            reason = "redundant" if lo <= p.accuracy <= hi else "distinct"
            w.writerow([p.i, p.j, f"{p.accuracy:.6f}", ";".join(k), ";".join(d), reason])
