"""Detection metrics, AUROC, the two unsupervised baselines and report assembly."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyTrainingSet, LengthMismatch, MissingLabels, SingleClass
from .model import TrainConfig, build_mlp, predict, train

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    FP: int
    FN: int
    TN: int

    @property
    def total(self) -> int:
        return self.TP + self.FP + self.FN + self.TN


@dataclass
class Metrics:
    DR: float
    PR: float
    FPR: float
    F1: float
    diagnostics: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"DR": self.DR, "PR": self.PR, "FPR": self.FPR, "F1": self.F1}


def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    return a, b


def confusion(labels, flags) -> ConfusionCounts:
    labels, flags = _pair(labels, flags)
    labels, flags = labels.astype(bool), flags.astype(bool)
    return ConfusionCounts(
        int(np.sum(labels & flags)),
        int(np.sum(~labels & flags)),
        int(np.sum(labels & ~flags)),
        int(np.sum(~labels & ~flags)),
    )


def _pct(num, den, name, diag):
    if den == 0:
        diag.append(f"{name}: zero denominator, reported as 0")
        return 0.0
    return round(100.0 * num / den, 2)


def metrics(c: ConfusionCounts) -> Metrics:
    """Detection rate, precision, false-positive rate and F1, in percent to 2 decimals."""
    diag: list[str] = []
    dr = _pct(c.TP, c.TP + c.FN, "DR", diag)
    pr = _pct(c.TP, c.TP + c.FP, "PR", diag)
    fpr = _pct(c.FP, c.FP + c.TN, "FPR", diag)
    if c.TP == 0:
        diag.append("F1: no true positives, reported as 0")
        f1 = 0.0
    else:
        # harmonic mean of the unrounded rates
        f1 = round(100.0 * 2 * c.TP / (2 * c.TP + c.FP + c.FN), 2)
    return Metrics(dr, pr, fpr, f1, diag)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC in percent; ties count one half."""
    scores, labels = _pair(scores, labels)
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both classes")
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def relative_scores(test, train, lam: float) -> np.ndarray:
    """Rescale one user's scores so pooled ranking compares like with like.

    Per-user models put raw scores on unrelated scales, so pooling them across
    users mostly ranks users, not windows. Mapping the training median to 0 and
    the threshold to 1 keeps each user's ordering and decision rule
    (relative >= 1 exactly when score >= lam) while aligning the scales.
    """
    test = np.asarray(test, dtype=np.float64)
    med = float(np.median(np.asarray(train, dtype=np.float64)))
    spread = lam - med
    if not spread > 0:
        spread = 1.0
    return (test - med) / spread


# --------------------------------------------------------------------------
# isolation forest


def c_factor(n) -> float:
    """Average unsuccessful-search path length in a binary search tree of ``n`` points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray  # leaf sizes (0 for internal nodes)
    depth: np.ndarray


@dataclass
class IsolationForest:
    trees: list
    subsample: int
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _grow(X, rng, height_limit):
    feat, thr, left, right, size, depth = [], [], [], [], [], []

    def node(idx, d):
        k = len(feat)
        feat.append(-1), thr.append(0.0), left.append(-1), right.append(-1), size.append(0), depth.append(d)
        pts = X[idx]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if d >= height_limit or len(idx) <= 1 or splittable.size == 0:
            size[k] = len(idx)
            return k
        q = splittable[rng.integers(splittable.size)]
        t = rng.uniform(lo[q], hi[q])
        mask = pts[:, q] < t
        feat[k], thr[k] = int(q), float(t)
        left[k] = node(idx[mask], d + 1)
        right[k] = node(idx[~mask], d + 1)
        return k

    node(np.arange(len(X)), 0)
    return _Tree(*(np.asarray(a) for a in (feat, thr, left, right, size, depth)))


def fit_iforest(train_vectors, n_trees: int = 100, subsample: int | None = None, seed: int = 0) -> IsolationForest:
    X = np.asarray(train_vectors, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyTrainingSet("isolation forest needs at least one training vector")
    if not 1 <= n_trees:
        raise ValueError("n_trees must be positive")
    psi = min(256, len(X)) if subsample is None else min(subsample, len(X))
    height = math.ceil(math.log2(psi)) if psi > 1 else 0
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        idx = rng.choice(len(X), size=psi, replace=False)
        trees.append(_grow(X[idx], rng, height))
    return IsolationForest(trees, psi, seed)


def path_lengths(forest: IsolationForest, V) -> np.ndarray:
    """``(n_trees, n)`` path lengths, with the ``c(size)`` correction at leaves."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    out = np.empty((forest.n_trees, len(V)))
    rows = np.arange(len(V))
    for t, tree in enumerate(forest.trees):
        cur = np.zeros(len(V), dtype=np.int64)
        while True:
            internal = tree.feature[cur] >= 0
            if not internal.any():
                break
            i = rows[internal]
            c = cur[i]
            go_left = V[i, tree.feature[c]] < tree.threshold[c]
            cur[i] = np.where(go_left, tree.left[c], tree.right[c])
        out[t] = tree.depth[cur] + np.array([c_factor(s) for s in tree.size[cur]])
    return out


def score_iforest(forest: IsolationForest, V):
    """``2 ** (-E[h(v)] / c(subsample))`` in (0, 1]; higher is more anomalous."""
    single = np.ndim(V) == 1
    h = path_lengths(forest, V).mean(axis=0)
    cn = c_factor(forest.subsample)
    s = np.power(2.0, -h / cn) if cn > 0 else np.ones_like(h)
    return float(s[0]) if single else s


# --------------------------------------------------------------------------
# autoencoder


@dataclass
class AEConfig:
    n_hidden: int = 1
    hidden: tuple | None = None  # explicit widths override the halving rule
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    l2: float = 1e-6
    seed: int = 0

    def widths(self, d: int) -> list[int]:
        if self.hidden is not None:
            return [d, *self.hidden, d]
        if not 1 <= self.n_hidden <= 3:
            raise ValueError("n_hidden must be 1, 2 or 3")
        hidden, w = [], d
        for _ in range(self.n_hidden):
            w = max(1, w // 2)
            hidden.append(w)
        return [d, *hidden, d]


@dataclass
class Autoencoder:
    net: object
    config: AEConfig
    history: object = None


def fit_autoencoder(train_vectors, cfg: AEConfig | None = None) -> Autoencoder:
    """Fully connected autoencoder: ReLU hidden layers (each half the previous width), sigmoid output."""
    cfg = cfg or AEConfig()
    X = np.asarray(train_vectors, dtype=np.float32)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyTrainingSet("autoencoder needs at least one training vector")
    net = build_mlp(cfg.widths(X.shape[1]), out_activation="sigmoid", seed=cfg.seed)
    # inputs are all non-negative, so with zero biases many first-layer units
    # start (and stay) inactive; centre them on the training mean instead
    first = net.layers[0]
    first.params["b"] = (-X.mean(axis=0) @ first.params["W"]).astype(first.params["b"].dtype)
    tc = TrainConfig(batch_size=cfg.batch_size, epochs=cfg.epochs, lr=cfg.lr, l2=cfg.l2, seed=cfg.seed)
    hist = train(net, X, X, tc, loss="mse")
    return Autoencoder(net, cfg, hist)


def score_ae(ae: Autoencoder, V):
    """Mean squared reconstruction error per vector."""
    single = np.ndim(V) == 1
    V = np.atleast_2d(np.asarray(V, dtype=np.float32))
    err = ((predict(ae.net, V).astype(np.float64) - V) ** 2).mean(axis=1)
    return float(err[0]) if single else err


def tune_autoencoder(train_vectors, n_trials: int = 4, seed: int = 0, val_fraction: float = 0.2,
                     epochs: int = 200) -> Autoencoder:
    """Seeded random search over depth (1 to 3) and learning rate.

    Candidates are compared by reconstruction error on the chronologically
    last ``val_fraction`` of the training vectors; the winner is refit on all
    of them.
    """
    X = np.asarray(train_vectors, dtype=np.float32)
    if len(X) == 0:
        raise EmptyTrainingSet("autoencoder needs at least one training vector")
    rng = np.random.default_rng(seed)
    n_val = int(round(len(X) * val_fraction))
    fit_part, val_part = (X[:-n_val], X[-n_val:]) if 0 < n_val < len(X) else (X, X)
    best, best_err = None, np.inf
    for _ in range(n_trials):
        cfg = AEConfig(n_hidden=int(rng.integers(1, 4)), lr=float(10 ** rng.uniform(-3.5, -2.5)),
                       epochs=epochs, seed=int(rng.integers(2**31)))
        err = float(score_ae(fit_autoencoder(fit_part, cfg), val_part).mean())
        if err < best_err:
            best, best_err = cfg, err
    return fit_autoencoder(X, best)


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    level: str
    granularity: str
    counts: ConfusionCounts
    metrics: Metrics
    auroc: float | None
    n: int

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "granularity": self.granularity,
            "n": self.n,
            **{k: getattr(self.counts, k) for k in ("TP", "FP", "FN", "TN")},
            **self.metrics.as_dict(),
            "AUROC": None if self.auroc is None else round(self.auroc, 2),
        }


def _safe_auroc(scores, labels):
    try:
        return auroc(scores, labels)
    except SingleClass:
        return None


def instance_report(scores, flags, labels, granularity: str = "day") -> EvalReport:
    if labels is None or any(lab is None for lab in labels):
        raise MissingLabels("instance labels are required for evaluation")
    labels = np.asarray(labels, dtype=bool)
    c = confusion(labels, flags)
    return EvalReport("instance", granularity, c, metrics(c), _safe_auroc(scores, labels), len(labels))


def user_labels(users: Sequence[str], labels) -> dict:
    """A user is malicious when any of their evaluated instances is."""
    out: dict = {}
    for u, lab in zip(users, labels):
        out[u] = out.get(u, False) or bool(lab)
    return out


def user_report(user_flags: dict, user_truth: dict, user_scores: dict | None = None,
                granularity: str = "day") -> EvalReport:
    if set(user_truth) - set(user_flags):
        raise MissingLabels("users without decisions")
    users = sorted(user_flags)
    if any(u not in user_truth for u in users):
        raise MissingLabels("users without ground truth")
    truth = np.array([user_truth[u] for u in users], dtype=bool)
    flags = np.array([user_flags[u] for u in users], dtype=bool)
    c = confusion(truth, flags)
    au = None
    if user_scores is not None:
        au = _safe_auroc(np.array([user_scores[u] for u in users], dtype=np.float64), truth)
    return EvalReport("user", granularity, c, metrics(c), au, len(users))


def report(rows, user_flags: dict, user_scores: dict | None = None, granularity: str = "day"):
    """Instance and user reports from scored test rows (objects with user/score/flagged/label)."""
    rows = list(rows)
    labels = [r.label for r in rows]
    inst = instance_report([r.score for r in rows], [r.flagged for r in rows], labels, granularity)
    truth = user_labels([r.user for r in rows], labels)
    for u in user_flags:
        truth.setdefault(u, False)
    return inst, user_report(user_flags, truth, user_scores, granularity)


REPORT_COLUMNS = ["level", "granularity", "n", "TP", "FP", "FN", "TN", "DR", "PR", "FPR", "F1", "AUROC"]


def write_report(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            d = r.as_dict()
            w.writerow({k: ("" if d[k] is None else (f"{d[k]:.2f}" if isinstance(d[k], float) else d[k]))
                        for k in REPORT_COLUMNS})


TREND_COLUMNS = ["window_start", "phase", "score", "lambda", "flagged", "label", "outcome"]


def write_trend(path, train_rows, test_rows, lam: float) -> None:
    """Per-user score series over time with TP/FP/FN markers on test windows."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TREND_COLUMNS)
        for phase, rows in (("train", train_rows), ("test", test_rows)):
            for r in rows:
                outcome = ""
                if phase == "test" and r.label is not None:
                    outcome = {(True, True): "TP", (False, True): "FP", (True, False): "FN"}.get(
                        (bool(r.label), bool(r.flagged)), "")
                label = "" if r.label is None else int(r.label)
                w.writerow([r.window_start, phase, repr(float(r.score)), repr(float(lam)), int(r.flagged), label,
                            outcome])
