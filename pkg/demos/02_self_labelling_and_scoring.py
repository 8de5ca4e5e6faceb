"""Train one user's transformation classifier and score their test days.

Walks through the per-user core of the detector on a synthetic corpus:
prune the geometric candidates, self-label the training images, train the
small convolutional classifier, fit one Dirichlet per transformation to
the softmax outputs, and score every day against the 95th-percentile
threshold of the training scores.

    python3 demos/02_self_labelling_and_scoring.py [--epochs N]
"""

import argparse
import tempfile

import numpy as np

from igt.eval import auroc
from igt.features import build_catalog, build_profile, extract_features, fit_normalizer, normalize, split_index
from igt.imaging import images_from_vectors, self_label, transform_policy
from igt.ingest import Granularity, aggregate, load_corpus
from igt.model import TrainConfig, build_classifier, train
from igt.scoring import (
    collect_softmax_stats,
    fit_dirichlet_params,
    fit_threshold,
    score_from_softmax,
    transformed_softmax,
)
from igt.selection import select_transforms
from igt.synth import default_plan, synth_generate


def user_matrix(events, user, manifest):
    mine = [e for e in events if e.user == user]
    days = sorted(aggregate(mine, Granularity.DAY).values(), key=lambda b: b.window_start)
    k = split_index(len(days), 0.7)
    profile = build_profile(mine, until=days[k].window_start)
    catalog = build_catalog(Granularity.DAY)
    raw = np.array([extract_features(b, profile, catalog).values for b in days])
    norm = fit_normalizer(raw[:k])
    planted = {d for u, d in manifest["malicious_days"] if u == user}
    labels = np.array([b.window_start.strftime("%Y-%m-%d") in planted for b in days])
    return np.vstack([normalize(v, norm) for v in raw]), labels, k


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = tempfile.mkdtemp(prefix="igt-demo-")
    manifest = synth_generate(default_plan(n_users=10, n_days=90, n_malicious=1, seed=args.seed), args.seed, out)
    events, _ = load_corpus(out)
    user = manifest["malicious_users"][0]
    X, labels, k = user_matrix(events, user, manifest)
    images = images_from_vectors(X)
    print(f"{user}: {k} training days, {len(X) - k} test days of which {labels.sum()} planted")

    candidates = transform_policy("geometric")
    kept, pairs = select_transforms(images[:k], candidates, seed=args.seed)
    redundant = [p for p in pairs if 0.45 <= p.accuracy <= 0.55]
    print(f"selection: {len(candidates)} candidates, {len(redundant)} indistinguishable pairs, {len(kept)} kept")

    ds = self_label(images[:k], kept)
    print(f"self-labelled training set: {len(ds)} images = {len(kept)} transforms x {k} days")
    model = build_classifier(images.shape[-1], len(kept), "tiny", seed=args.seed)
    hist = train(model, ds.images.astype(np.float32), ds.labels, TrainConfig(epochs=args.epochs, seed=args.seed))
    print(f"training loss {hist.loss[0]:.3f} -> {hist.loss[-1]:.4f} (ln K = {np.log(len(kept)):.3f})")

    dirichlet = fit_dirichlet_params(collect_softmax_stats(model, images[:k], kept))
    print(f"Dirichlet fits: median {np.median(dirichlet.iterations):.0f} iterations, "
          f"{len(dirichlet.degenerate)} capped")

    r = score_from_softmax(transformed_softmax(model, images, kept), dirichlet.alphas)
    lam = fit_threshold(r[:k], 95)
    flags = r[k:] >= lam
    print(f"lambda (95th percentile of training scores) = {lam:.2f}")
    print(f"test days flagged: {flags.sum()} of {flags.size}; planted days caught: {flags[labels[k:]].sum()}"
          f" of {labels[k:].sum()}")
    print(f"mean score normal test days {r[k:][~labels[k:]].mean():.2f}, planted {r[k:][labels[k:]].mean():.2f}")
    print(f"test AUROC {auroc(r[k:], labels[k:]):.2f}")


if __name__ == "__main__":
    main()
