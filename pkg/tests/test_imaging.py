import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from igt.errors import DegenerateTransformSet
from igt.imaging import (
    TransformSpec,
    apply_transform,
    candidate_set,
    gaussian_kernel,
    images_from_vectors,
    read_raw,
    self_label,
    sharpen_kernel,
    to_image,
    transform_policy,
    write_pgm,
    write_raw,
)

unit_vec = arrays(np.float64, st.sampled_from([16, 28, 40]), elements=st.floats(0, 1))


def test_outer_product_example():
    assert np.allclose(to_image([0.5, 1.0]).pixels, [[0.25, 0.5], [0.5, 1.0]])
    assert not to_image(np.zeros(5)).pixels.any()


@settings(max_examples=50)
@given(unit_vec)
def test_image_symmetric_rank_one(x):
    p = to_image(x).pixels
    assert np.array_equal(p, p.T)
    assert np.allclose(np.diag(p), x**2)
    assert np.all((0 <= p) & (p <= 1))
    minors = p[:-1, :-1] * p[1:, 1:] - p[:-1, 1:] * p[1:, :-1]
    assert np.abs(minors).max() < 1e-9


def test_rotate_ccw_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(apply_transform(a, TransformSpec(rotate90=True)), [[2.0, 4.0], [1.0, 3.0]])


def test_identity_unchanged():
    x = np.random.default_rng(0).random((28, 28))
    assert np.array_equal(apply_transform(x, TransformSpec()), x)


def test_gaussian_centre_weight():
    oracle = 1.0 / (1 + 4 * math.exp(-0.5) + 4 * math.exp(-1.0))
    k = gaussian_kernel(1.0)
    assert abs(k[1, 1] - oracle) < 1e-15 and abs(k[1, 1] - 0.2042) < 1e-4
    assert abs(k.sum() - 1) < 1e-15


def test_sharpen_kernel_shape():
    k = sharpen_kernel(0.5)
    assert abs(k.sum()) < 1e-12 and k[1, 1] == 1.0
    assert np.allclose(k, k.T) and np.allclose(k, k[::-1])


def test_translation_direction_and_fill():
    x = np.arange(9, dtype=float).reshape(3, 3) + 1
    down = apply_transform(x, TransformSpec(shift=(1, 0)))
    assert np.array_equal(down[0], [0, 0, 0]) and np.array_equal(down[1:], x[:2])
    right = apply_transform(x, TransformSpec(shift=(0, 1)))
    assert np.array_equal(right[:, 0], [0, 0, 0]) and np.array_equal(right[:, 1:], x[:, :2])


def test_composition_order():
    """Flip happens before the shift, which happens before the rotation."""
    x = np.random.default_rng(1).random((6, 6))
    spec = TransformSpec(rotate90=True, flip_h=True, shift=(1, -1))
    manual = np.rot90(apply_transform(np.fliplr(x), TransformSpec(shift=(1, -1))))
    assert np.array_equal(apply_transform(x, spec), manual)


@settings(max_examples=30)
@given(arrays(np.float64, (7, 7), elements=st.floats(0, 1)))
def test_group_identities(x):
    r = TransformSpec(rotate90=True)
    f = TransformSpec(flip_h=True)
    y = x
    for _ in range(4):
        y = apply_transform(y, r)
    assert np.array_equal(y, x)
    assert np.array_equal(apply_transform(apply_transform(x, f), f), x)
    back = apply_transform(apply_transform(x, TransformSpec(shift=(1, 0))), TransformSpec(shift=(-1, 0)))
    assert np.array_equal(back[:-1], x[:-1]) and not back[-1].any()


def test_blur_constant_is_identity_and_sharpen_clamps():
    c = np.full((5, 5), 0.37)
    assert np.allclose(apply_transform(c, TransformSpec(blur=True)), c, atol=1e-15)
    spike = np.zeros((5, 5))
    spike[2, 2] = 1.0
    s = apply_transform(spike, TransformSpec(sharpen=True))
    assert s.min() >= 0 and s.max() <= 1


def test_candidate_counts_and_identity_first():
    for policy, n in (("geometric", 36), ("simplified", 63), ("full", 144)):
        c = transform_policy(policy)
        assert len(c) == n
        assert c[0].is_identity and [t.index for t in c] == list(range(n))
        assert len({(t.rotate90, t.flip_h, t.blur, t.sharpen, t.shift) for t in c}) == n
    assert candidate_set() == transform_policy("geometric")
    simplified = transform_policy("simplified")
    assert all(t.is_geometric or not (t.rotate90 or t.flip_h) for t in simplified)


def test_spec_json_round_trip():
    for t in transform_policy("full"):
        assert TransformSpec.from_json(t.to_json()) == t


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(2, 10))
def test_self_label_cardinality(n, k):
    rng = np.random.default_rng(n * 100 + k)
    images = images_from_vectors(rng.random((n, 16)))
    specs = transform_policy("geometric")[:k]
    ds = self_label(images, specs)
    assert len(ds) == n * k == ds.images.shape[0]
    assert np.array_equal(np.bincount(ds.labels), np.full(k, n))
    for s in range(n):
        for j in range(k):
            assert np.array_equal(ds.images[s * k + j], apply_transform(images[s], specs[j]))


def test_self_label_needs_two_transforms():
    with pytest.raises(DegenerateTransformSet):
        self_label(np.zeros((3, 16, 16)), transform_policy("geometric")[:1])


def test_image_dumps(tmp_path):
    x = np.random.default_rng(2).random((16, 16))
    write_raw(tmp_path / "a.raw", x, origin=("U1", "day", "2010-01-04"), transform_index=3)
    back, meta = read_raw(tmp_path / "a.raw")
    assert np.array_equal(back, x.astype("<f4")) and meta["transform_index"] == 3 and meta["d"] == 16
    write_pgm(tmp_path / "a.pgm", x)
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n16 16\n255\n") and len(data) == len(b"P5\n16 16\n255\n") + 256
