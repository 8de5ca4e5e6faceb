"""Dirichlet fitting, anomaly scores and the instance/user decision rules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import DegenerateSamples, EmptyScores, EmptyTrainSet, EmptyWindow, MismatchedK
from .imaging import apply_transform
from .model import predict_softmax

CLIP = 1e-6
ALPHA_CAP = 1e6


@dataclass
class DirichletFit:
    alpha: np.ndarray
    iterations: int
    log_likelihood: float
    capped: bool = False


@dataclass
class DirichletParams:
    """One K-vector of concentrations per transform (row ``i`` belongs to transform ``i``)."""

    alphas: np.ndarray  # (K transforms, K classes)
    iterations: list = field(default_factory=list)
    log_likelihoods: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.alphas.ndim != 2 or self.alphas.shape[0] != self.alphas.shape[1]:
            raise MismatchedK(f"expected a (K, K) alpha matrix, got {self.alphas.shape}")
        if not (np.all(np.isfinite(self.alphas)) and np.all(self.alphas > 0)):
            raise ValueError("alpha components must be positive and finite")

    @property
    def k(self) -> int:
        return self.alphas.shape[0]

    def to_json(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "iterations": [int(i) for i in self.iterations],
            "log_likelihoods": [float(v) for v in self.log_likelihoods],
            "degenerate": [int(i) for i in self.degenerate],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DirichletParams":
        return cls(np.array(obj["alphas"]), obj.get("iterations", []), obj.get("log_likelihoods", []),
                   obj.get("degenerate", []))


@dataclass(frozen=True)
class Thresholds:
    tau: float
    lam: float
    kappa: float = 0.14

    def __post_init__(self):
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")


@dataclass(frozen=True)
class InstanceScore:
    user: str
    granularity: str
    window_start: str
    score: float
    flagged: bool
    label: int | None = None


# --------------------------------------------------------------------------
# softmax statistics


def clip_simplex(p, eps: float = CLIP) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return p / p.sum(axis=-1, keepdims=True)


def transformed_softmax(model, images, transforms, eps: float = CLIP) -> np.ndarray:
    """``(n, K, K)``: clipped softmax of every image under every transform."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    out = np.stack([predict_softmax(model, apply_transform(images, t).astype(np.float32)) for t in transforms], axis=1)
    return clip_simplex(out, eps)


def collect_softmax_stats(model, train_images, transforms, eps: float = CLIP) -> list[np.ndarray]:
    """Per transform ``i`` the ``(n, K)`` clipped softmax vectors of ``Psi_i(x)`` over training images."""
    if len(train_images) == 0:
        raise EmptyTrainSet("no training images")
    y = transformed_softmax(model, train_images, transforms, eps)
    return [y[:, i, :] for i in range(len(transforms))]


# --------------------------------------------------------------------------
# Dirichlet maximum likelihood


def dirichlet_loglik(alpha, mean_log_p, n: int = 1) -> float:
    """Log-likelihood of ``n`` samples given their per-component mean log."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(n * (gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * mean_log_p).sum()))


def inverse_digamma(y, iters: int = 5) -> np.ndarray:
    """Solve ``digamma(x) = y`` by Newton's method (Minka's starting point)."""
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(divide="ignore"):
        x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - digamma(1.0)))
    for _ in range(iters):
        x = x - (digamma(x) - y) / polygamma(1, x)
    return x


def fit_dirichlet(samples, tol: float = 1e-8, max_iter: int = 1000, cap: float = ALPHA_CAP,
                  strict: bool = False) -> DirichletFit:
    """Maximum-likelihood Dirichlet concentrations by fixed-point iteration.

    Each step sets ``digamma(alpha_new) = digamma(sum(alpha)) + mean(log p)``.
    Components are capped at ``cap``; samples with no spread at all drive
    every component to the cap, which is reported through ``capped`` (or
    raised as DegenerateSamples when ``strict``).
    """
    p = np.asarray(samples, dtype=np.float64)
    if p.ndim != 2 or len(p) < 2:
        raise ValueError("need at least 2 simplex samples")
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("sample components must lie in (0, 1)")
    n = len(p)
    mlp = np.log(p).mean(axis=0)
    # moment-matching start
    m = p.mean(axis=0)
    v = p.var(axis=0)
    s = np.median(m * (1 - m) / np.maximum(v, 1e-300) - 1.0)
    alpha = np.clip(m * max(s, 1e-3), 1e-3, cap)
    it = 0
    capped = False
    for it in range(1, max_iter + 1):
        new = np.minimum(inverse_digamma(digamma(alpha.sum()) + mlp), cap)
        delta = np.max(np.abs(new - alpha) / alpha)
        alpha = new
        if np.all(alpha >= cap):
            capped = True
            break
        if delta < tol:
            break
    capped = capped or bool(np.any(alpha >= cap))
    if capped and strict:
        raise DegenerateSamples("samples have no spread; concentrations hit the cap")
    return DirichletFit(alpha, it, dirichlet_loglik(alpha, mlp, n), capped)


def fit_dirichlet_params(stats: Sequence[np.ndarray], **kw) -> DirichletParams:
    fits = [fit_dirichlet(s, **kw) for s in stats]
    return DirichletParams(
        np.stack([f.alpha for f in fits]),
        [f.iterations for f in fits],
        [f.log_likelihood for f in fits],
        [i for i, f in enumerate(fits) if f.capped],
    )


# --------------------------------------------------------------------------
# scores and decisions


def score_from_softmax(y, alphas) -> np.ndarray:
    """``1 - (1/K) sum_i <alpha_i - 1, log y_i>`` for softmax tensors ``(..., K, K)``."""
    y = np.asarray(y, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    if y.shape[-2:] != alphas.shape:
        raise MismatchedK(f"softmax block {y.shape[-2:]} does not match alphas {alphas.shape}")
    k = alphas.shape[0]
    return 1.0 - ((alphas - 1.0) * np.log(y)).sum(axis=(-2, -1)) / k


def anomaly_score(model, dirichlet: DirichletParams, image, transforms, eps: float = CLIP):
    """Anomaly score of one image (float) or a stack (array); larger is more anomalous."""
    if len(transforms) != dirichlet.k or model.num_classes != dirichlet.k:
        raise MismatchedK(f"{len(transforms)} transforms, model K={model.num_classes}, dirichlet K={dirichlet.k}")
    single = np.ndim(image) == 2
    y = transformed_softmax(model, image, transforms, eps)
    r = score_from_softmax(y, dirichlet.alphas)
    return float(r[0]) if single else r


def fit_threshold(train_scores, tau: float = 95.0) -> float:
    """Nearest-rank percentile: the value at rank ``ceil(tau/100 * n)`` of the sorted scores."""
    s = np.sort(np.asarray(train_scores, dtype=np.float64).ravel())
    if s.size == 0:
        raise EmptyScores("no scores to threshold")
    if not 0 < tau < 100:
        raise ValueError("tau must lie in (0, 100)")
    rank = math.ceil(round(tau / 100.0 * s.size, 9))
    return float(s[max(rank, 1) - 1])


def classify_instance(score: float, thresholds) -> bool:
    lam = thresholds.lam if isinstance(thresholds, Thresholds) else float(thresholds)
    return bool(score >= lam)


def classify_user(flags, kappa: float = 0.14) -> bool:
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        raise EmptyWindow("no instances in the decision window")
    return bool(flags.sum() / flags.size > kappa)


# --------------------------------------------------------------------------
# scores CSV

SCORE_COLUMNS = ["user", "granularity", "window_start", "score", "lambda", "flagged", "label"]


def write_scores(path, rows: Sequence[InstanceScore], lam: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            w.writerow([r.user, r.granularity, r.window_start, repr(float(r.score)), repr(float(lam)),
                        int(r.flagged), "" if r.label is None else int(r.label)])


def read_scores(path) -> tuple[list[InstanceScore], list[float]]:
    rows, lams = [], []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            label = rec["label"]
            rows.append(InstanceScore(rec["user"], rec["granularity"], rec["window_start"], float(rec["score"]),
                                      rec["flagged"] == "1", None if label == "" else int(label)))
            lams.append(float(rec["lambda"]))
    return rows, lams
