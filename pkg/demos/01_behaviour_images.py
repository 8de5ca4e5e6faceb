"""From raw audit events to behaviour images.

Generates a small synthetic CERT-format corpus, buckets one user's events
into days, turns each day into a normalised feature vector and then into an
outer-product image. Finally shows what the geometric transformations do to
one of those images.

    python3 demos/01_behaviour_images.py [--out DIR]
"""

import argparse
import tempfile

import numpy as np

from igt.features import build_catalog, build_profile, extract_features, fit_normalizer, normalize, split_index
from igt.imaging import apply_transform, images_from_vectors, transform_policy
from igt.ingest import Granularity, aggregate, load_corpus
from igt.synth import default_plan, synth_generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", help="where to write the corpus (default: a temporary directory)")
    args = parser.parse_args()
    out = args.out or tempfile.mkdtemp(prefix="igt-demo-")

    manifest = synth_generate(default_plan(n_users=10, n_days=60, n_malicious=1, seed=1), 1, out)
    print(f"corpus: {manifest['n_events']} events in {out}")
    print(f"planted user: {manifest['malicious_users'][0]}")

    events, stats = load_corpus(out)
    for source, s in stats.items():
        print(f"  {source:7s} {s['rows']:6d} rows")

    user = manifest["malicious_users"][0]
    mine = [e for e in events if e.user == user]
    days = sorted(aggregate(mine, Granularity.DAY).values(), key=lambda b: b.window_start)
    k = split_index(len(days), 0.7)
    profile = build_profile(mine, until=days[k].window_start)
    catalog = build_catalog(Granularity.DAY)
    vectors = np.array([extract_features(b, profile, catalog).values for b in days])
    norm = fit_normalizer(vectors[:k])
    X = np.vstack([normalize(v, norm) for v in vectors])
    print(f"\n{user}: {len(days)} days, {k} for training, own PC {profile.own_pc}")
    print(f"feature vector length {catalog.dimension}; first five names: {catalog.names[:5]}")

    planted = {d for u, d in manifest["malicious_days"] if u == user}
    labels = np.array([b.window_start.strftime("%Y-%m-%d") in planted for b in days])
    test = X[k:]
    print("mean |x - training mean| on test days:")
    print(f"  normal  {np.abs(test[~labels[k:]] - X[:k].mean(0)).mean():.3f}")
    print(f"  planted {np.abs(test[labels[k:]] - X[:k].mean(0)).mean():.3f}")

    images = images_from_vectors(X)
    img = images[0]
    print(f"\nimage {img.shape}, symmetric: {np.allclose(img, img.T)}, range [{img.min():.2f}, {img.max():.2f}]")
    for spec in transform_policy("geometric")[:4] + transform_policy("geometric")[18:20]:
        moved = apply_transform(img, spec)
        print(f"  {spec.index:2d} {spec.name:24s} mean abs change {np.abs(moved - img).mean():.4f}")


if __name__ == "__main__":
    main()
