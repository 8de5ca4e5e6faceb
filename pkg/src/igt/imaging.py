"""Behaviour images and the transformation set used for self-labelling.

A normalized feature vector ``x`` becomes the grayscale image ``x x^T``.
Candidate transformations compose (right to left) Laplacian sharpening,
Gaussian blur, horizontal flip, a one-pixel translation and a 90 degree
counter-clockwise rotation. All functions operate on the last two axes, so a
stack of images of shape ``(n, d, d)`` is transformed in one call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateTransformSet

SHIFTS = ((0, 0), (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class BehaviorImage:
    pixels: np.ndarray
    origin: tuple | None = None

    @property
    def d(self) -> int:
        return self.pixels.shape[-1]


@dataclass(frozen=True)
class TransformSpec:
    rotate90: bool = False
    flip_h: bool = False
    blur: bool = False
    sharpen: bool = False
    shift: tuple[int, int] = (0, 0)
    index: int = 0

    @property
    def n_ops(self) -> int:
        return int(self.rotate90) + int(self.flip_h) + int(self.blur) + int(self.sharpen) + abs(self.shift[0]) + abs(self.shift[1])

    @property
    def is_identity(self) -> bool:
        return self.n_ops == 0

    @property
    def is_geometric(self) -> bool:
        return not (self.blur or self.sharpen)

    @property
    def name(self) -> str:
        parts = []
        if self.sharpen:
            parts.append("sharp")
        if self.blur:
            parts.append("blur")
        if self.flip_h:
            parts.append("flip")
        if self.shift != (0, 0):
            parts.append(f"shift({self.shift[0]:+d},{self.shift[1]:+d})")
        if self.rotate90:
            parts.append("rot90")
        return "+".join(parts) or "identity"

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "rotate90": self.rotate90,
            "flip_h": self.flip_h,
            "blur": self.blur,
            "sharpen": self.sharpen,
            "shift": list(self.shift),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransformSpec":
        return cls(obj["rotate90"], obj["flip_h"], obj["blur"], obj["sharpen"], tuple(obj["shift"]), obj["index"])


@dataclass
class SelfLabelledSet:
    images: np.ndarray  # (K * |S|, d, d), image-major
    labels: np.ndarray  # (K * |S|,), position of the transform in the list
    source_count: int
    transform_count: int

    def __len__(self) -> int:
        return len(self.labels)


# --------------------------------------------------------------------------


def to_image(x) -> BehaviorImage:
    """Outer product image ``pixels[i, j] = x[i] * x[j]``."""
    origin = None
    if hasattr(x, "values"):
        origin = (x.user, x.granularity.value, x.window_start)
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    return BehaviorImage(np.outer(x, x), origin)


def images_from_vectors(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[:, :, None] * X[:, None, :]


def gaussian_kernel(sigma: float = 1.0) -> np.ndarray:
    d = np.arange(-1, 2)
    r2 = d[:, None] ** 2 + d[None, :] ** 2
    k = np.exp(-r2 / (2.0 * sigma**2))
    return k / k.sum()


def sharpen_kernel(sigma: float = 0.5) -> np.ndarray:
    """Negated Laplacian-of-Gaussian on a 3x3 grid, made zero-sum.

    Off-centre weights follow -LoG(r; sigma); the centre weight is set so the
    kernel sums to zero (flat regions are untouched) and then scaled to 1.
    """
    d = np.arange(-1, 2)
    r2 = (d[:, None] ** 2 + d[None, :] ** 2).astype(np.float64)
    log = (r2 / (2 * sigma**2) - 1.0) * np.exp(-r2 / (2 * sigma**2))  # LoG up to a positive factor
    k = log.copy()
    k[1, 1] = 0.0
    k[1, 1] = -k.sum()
    return k / k[1, 1]


_GAUSS = gaussian_kernel(1.0)
_SHARP = sharpen_kernel(0.5)


def convolve3x3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation over the last two axes with edge replication."""
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(img, pad, mode="edge")
    h, w = img.shape[-2:]
    out = np.zeros_like(img, dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * p[..., di:di + h, dj:dj + w]
    return out


def translate(img: np.ndarray, s_h: int, s_w: int) -> np.ndarray:
    """Shift content by ``s_h`` rows (down for +) and ``s_w`` columns (right for +), zero fill."""
    out = np.zeros_like(img)
    h, w = img.shape[-2:]
    src_r = slice(max(0, -s_h), h - max(0, s_h))
    dst_r = slice(max(0, s_h), h - max(0, -s_h))
    src_c = slice(max(0, -s_w), w - max(0, s_w))
    dst_c = slice(max(0, s_w), w - max(0, -s_w))
    out[..., dst_r, dst_c] = img[..., src_r, src_c]
    return out


def apply_transform(image, spec: TransformSpec):
    is_obj = isinstance(image, BehaviorImage)
    x = np.asarray(image.pixels if is_obj else image, dtype=np.float64)
    if spec.sharpen:
        x = np.clip(x + convolve3x3(x, _SHARP), 0.0, 1.0)
    if spec.blur:
        x = convolve3x3(x, _GAUSS)
    if spec.flip_h:
        x = np.flip(x, axis=-1)
    if spec.shift != (0, 0):
        x = translate(x, *spec.shift)
    if spec.rotate90:
        x = np.rot90(x, k=1, axes=(-2, -1))
    x = np.ascontiguousarray(x)
    return BehaviorImage(x, image.origin) if is_obj else x


def candidate_set(include_non_geometric: bool = False, restrict_non_geometric_to_shifts: bool = False) -> list[TransformSpec]:
    """Enumerate candidate transformations; identity is always index 0.

    geometric only: 2 rotations x 2 flips x 9 shifts = 36
    full: the 36 geometric specs under each blur/sharpen combination = 144
    restricted: 36 geometric + blur/sharpen variants of the 9 pure shifts = 63
    """
    geo = [(rot, flip, s) for rot in (False, True) for flip in (False, True) for s in SHIFTS]
    filters = [(False, False)]
    if include_non_geometric:
        filters += [(True, False), (False, True), (True, True)]
    specs = []
    for blur, sharp in filters:
        for rot, flip, s in geo:
            if blur or sharp:
                if restrict_non_geometric_to_shifts and (rot or flip):
                    continue
            specs.append(TransformSpec(rot, flip, blur, sharp, s, len(specs)))
    return specs


def transform_policy(name: str) -> list[TransformSpec]:
    policies = {
        "geometric": (False, False),
        "full": (True, False),
        "simplified": (True, True),
    }
    if name not in policies:
        raise ValueError(f"unknown transform policy {name!r}")
    return candidate_set(*policies[name])


def transform_stack(images: np.ndarray, transforms: Sequence[TransformSpec]) -> np.ndarray:
    """``(n, d, d)`` -> ``(n, K, d, d)`` with every transform applied."""
    images = np.asarray(images)
    return np.stack([apply_transform(images, t) for t in transforms], axis=1)


def self_label(images, transforms: Sequence[TransformSpec]) -> SelfLabelledSet:
    """Apply every transform to every image; the label is the transform's position."""
    if len(transforms) < 2:
        raise DegenerateTransformSet(f"need at least 2 transforms, got {len(transforms)}")
    stack = np.asarray([im.pixels if isinstance(im, BehaviorImage) else im for im in images], dtype=np.float64)
    if stack.ndim != 3 or len(stack) == 0:
        raise ValueError("expected a non-empty stack of square images")
    n, k = len(stack), len(transforms)
    out = transform_stack(stack, transforms).reshape(n * k, *stack.shape[1:])
    labels = np.tile(np.arange(k), n)
    return SelfLabelledSet(out, labels, n, k)


# --------------------------------------------------------------------------
# image dumps


def write_pgm(path, pixels: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) for eyeballing; values are rounded."""
    px = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def write_raw(path, pixels: np.ndarray, origin=None, transform_index: int | None = None) -> None:
    """Row-major little-endian float32 pixels plus a JSON sidecar."""
    path = Path(path)
    px = np.asarray(pixels, dtype="<f4")
    path.write_bytes(px.tobytes(order="C"))
    meta = {
        "d": int(px.shape[-1]),
        "origin": None if origin is None else [str(o) for o in origin],
        "transform_index": transform_index,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_raw(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    d = meta["d"]
    px = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(d, d)
    return px, meta
