"""A small numpy network library: layers, wide residual classifier, Adam
training loop, finite-difference gradient check and checkpoints.

Tensors are NCHW. Each layer caches what its backward pass needs during
``forward`` and accumulates parameter gradients into ``grads`` during
``backward``. Training runs in float32; ``Network.astype(np.float64)``
gives a copy for gradient checking.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, UnsupportedSide

logger = logging.getLogger(__name__)

SUPPORTED_SIDES = (16, 28, 40)

# BatchNorm modes
TRAIN, EVAL, BATCH = "train", "eval", "batch"  # BATCH: batch statistics, running stats untouched


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, mode=TRAIN):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def children(self) -> list[tuple[str, "Layer"]]:
        return []

    def zero_grad(self):
        # in place: the optimizer holds references to these arrays
        for k, p in self.params.items():
            g = self.grads.get(k)
            if g is None or g.shape != p.shape or g.dtype != p.dtype:
                self.grads[k] = np.zeros_like(p)
            else:
                g.fill(0)
        for _, c in self.children():
            c.zero_grad()


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2D(Layer):
    """k x k convolution (k in {1, 3}), 'same' padding, optional stride, no bias."""

    def __init__(self, cin, cout, k=3, stride=1, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cin, self.cout, self.k, self.stride, self.pad = cin, cout, k, stride, k // 2
        self.input_grad = True  # False on a first layer: nothing upstream needs dx
        self.params["W"] = _he(rng, (cout, cin, k, k), cin * k * k, dtype)
        self.zero_grad()

    def forward(self, x, mode=TRAIN):
        n, c, h, w = x.shape
        k, s, p = self.k, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        wmat = self.params["W"].reshape(self.cout, -1)
        out = cols @ wmat.T
        self._cache = (cols, x.shape, ho, wo)
        return out.reshape(n, ho, wo, self.cout).transpose(0, 3, 1, 2)

    def backward(self, dout):
        cols, (n, c, h, w), ho, wo = self._cache
        k, s, p = self.k, self.stride, self.pad
        d = dout.transpose(0, 2, 3, 1).reshape(-1, self.cout)
        self.grads["W"] += (d.T @ cols).reshape(self.params["W"].shape)
        if not self.input_grad:
            return None
        dcols = (d @ self.params["W"].reshape(self.cout, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


def _csum(a, b):
    """Per-channel sum of ``a * b`` over every other axis."""
    n, c = a.shape[:2]
    return np.einsum("ncs,ncs->c", a.reshape(n, c, -1), b.reshape(n, c, -1))


class BatchNorm(Layer):
    """Batch normalization over every axis but the channel axis (1)."""

    def __init__(self, c, eps=1e-5, momentum=0.9, dtype=np.float32):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)
        self.zero_grad()

    def _shape(self, x):
        return (1, -1) + (1,) * (x.ndim - 2)

    def forward(self, x, mode=TRAIN):
        axes = (0,) + tuple(range(2, x.ndim))
        shp = self._shape(x)
        if mode != EVAL:
            mu = x.mean(axis=axes)
            xc = x - mu.reshape(shp)
            var = _csum(xc, xc) / (x.size / x.shape[1])
            if mode == TRAIN:
                m = self.momentum
                self.buffers["running_mean"] = (m * self.buffers["running_mean"] + (1 - m) * mu).astype(x.dtype)
                self.buffers["running_var"] = (m * self.buffers["running_var"] + (1 - m) * var).astype(x.dtype)
        else:
            mu, var = self.buffers["running_mean"], self.buffers["running_var"]
            xc = x - mu.reshape(shp)
        inv = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = xc * inv.reshape(shp)
        self._cache = (xhat, inv, axes, shp)
        return self.params["gamma"].reshape(shp) * xhat + self.params["beta"].reshape(shp)

    def backward(self, dout):
        xhat, inv, axes, shp = self._cache
        m = dout.size / dout.shape[1]
        g_gamma = _csum(dout, xhat)
        g_beta = dout.sum(axis=axes)
        self.grads["gamma"] += g_gamma
        self.grads["beta"] += g_beta
        gamma = self.params["gamma"]
        s1 = (gamma * g_beta).reshape(shp)
        s2 = (gamma * g_gamma).reshape(shp)
        scale = (inv * gamma).reshape(shp)
        return scale * dout - (inv.reshape(shp) / m) * (s1 + xhat * s2)


class ReLU(Layer):
    def forward(self, x, mode=TRAIN):
        out = np.maximum(x, 0)
        self._mask = out > 0
        return out

    def backward(self, dout):
        return np.where(self._mask, dout, 0)


class Sigmoid(Layer):
    def forward(self, x, mode=TRAIN):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


class AvgPool(Layer):
    """Non-overlapping k x k average pooling."""

    def __init__(self, k):
        super().__init__()
        self.k = k

    def forward(self, x, mode=TRAIN):
        n, c, h, w = x.shape
        k = self.k
        self._shape = x.shape
        return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(self, dout):
        k = self.k
        return np.repeat(np.repeat(dout, k, axis=2), k, axis=3) / (k * k)


class GlobalAvgPool(Layer):
    def forward(self, x, mode=TRAIN):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None] / (h * w), self._shape).copy()


class Flatten(Layer):
    def forward(self, x, mode=TRAIN):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["W"] = _he(rng, (n_in, n_out), n_in, dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.zero_grad()

    def forward(self, x, mode=TRAIN):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] += self._x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T


class PreActBlock(Layer):
    """Pre-activation basic block: BN-ReLU-conv-BN-ReLU-conv plus a skip.

    When the shape changes the skip is a strided 1x1 convolution of the
    pre-activated input.
    """

    def __init__(self, cin, cout, stride, rng, dtype=np.float32):
        super().__init__()
        self.bn1 = BatchNorm(cin, dtype=dtype)
        self.relu1 = ReLU()
        self.conv1 = Conv2D(cin, cout, 3, stride, rng, dtype)
        self.bn2 = BatchNorm(cout, dtype=dtype)
        self.relu2 = ReLU()
        self.conv2 = Conv2D(cout, cout, 3, 1, rng, dtype)
        self.shortcut = None if (cin == cout and stride == 1) else Conv2D(cin, cout, 1, stride, rng, dtype)

    def children(self):
        out = [("bn1", self.bn1), ("relu1", self.relu1), ("conv1", self.conv1), ("bn2", self.bn2),
               ("relu2", self.relu2), ("conv2", self.conv2)]
        if self.shortcut is not None:
            out.append(("shortcut", self.shortcut))
        return out

    def forward(self, x, mode=TRAIN):
        o = self.relu1.forward(self.bn1.forward(x, mode))
        skip = x if self.shortcut is None else self.shortcut.forward(o, mode)
        y = self.conv1.forward(o, mode)
        y = self.conv2.forward(self.relu2.forward(self.bn2.forward(y, mode)))
        return y + skip

    def backward(self, dout):
        dy = self.conv2.backward(dout)
        dy = self.bn2.backward(self.relu2.backward(dy))
        do = self.conv1.backward(dy)
        if self.shortcut is None:
            dx_skip = dout
        else:
            do = do + self.shortcut.backward(dout)
            dx_skip = 0.0
        return self.bn1.backward(self.relu1.backward(do)) + dx_skip


class Network(Layer):
    """A sequential stack of layers."""

    def __init__(self, layers, input_side=None, num_classes=None, arch="custom", seed=0, meta=None):
        super().__init__()
        self.layers = list(layers)
        self.input_side = input_side
        self.num_classes = num_classes
        self.arch = arch
        self.seed = seed
        self.meta = dict(meta or {})

    def children(self):
        return [(f"l{i}", layer) for i, layer in enumerate(self.layers)]

    def forward(self, x, mode=TRAIN):
        for layer in self.layers:
            x = layer.forward(x, mode)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
            if dout is None:
                break
        return dout

    def named_layers(self, prefix=""):
        for name, child in self.children():
            full = f"{prefix}{name}"
            yield full, child
            yield from _walk(child, full + ".")

    def named_params(self):
        """``(name, param, grad)`` triples in a fixed order."""
        out = []
        for lname, layer in self.named_layers():
            for k in sorted(layer.params):
                out.append((f"{lname}.{k}", layer.params[k], layer.grads[k]))
        return out

    def named_tensors(self):
        """Parameters then buffers; the checkpoint order."""
        out = [(n, p) for n, p, _ in self.named_params()]
        for lname, layer in self.named_layers():
            for k in sorted(layer.buffers):
                out.append((f"{lname}.{k}", layer.buffers[k]))
        return out

    def set_tensor(self, name, value):
        lname, key = name.rsplit(".", 1)
        layer = dict(self.named_layers())[lname]
        target = layer.params if key in layer.params else layer.buffers
        if target[key].shape != value.shape:
            raise ShapeMismatch(f"{name}: {value.shape} != {target[key].shape}")
        target[key] = value.astype(target[key].dtype)

    def astype(self, dtype) -> "Network":
        net = copy.deepcopy(self)
        for _, layer in net.named_layers():
            for d in (layer.params, layer.grads, layer.buffers):
                for k in d:
                    d[k] = d[k].astype(dtype)
        return net

    @property
    def dtype(self):
        return self.named_params()[0][1].dtype

    def count(self, kind) -> int:
        return sum(isinstance(layer, kind) for _, layer in self.named_layers())


def _walk(layer, prefix):
    for name, child in layer.children():
        full = f"{prefix}{name}"
        yield full, child
        yield from _walk(child, full + ".")


# --------------------------------------------------------------------------
# architectures


def _head(dense):
    # small logit layer: near-uniform initial predictions, loss starts at about ln K
    dense.params["W"] *= dense.params["W"].dtype.type(0.1)
    return dense


def _first(conv):
    conv.input_grad = False
    return conv


def build_classifier(input_side: int, num_classes: int, arch: str = "tiny", depth: int = 10,
                     widen: int = 4, seed: int = 0, dtype=np.float32) -> Network:
    """Wide residual classifier (``arch='wrn'``) or a two-conv ``tiny`` net.

    wrn: initial 16-map conv, then (depth - 4) / 6 pre-activation blocks per
    group at widths 16w/32w/64w with strides 1/2/2, BN-ReLU, global average
    pooling and a K-way affine head. Depth 10 gives 7 main-path convs and 3
    skips.

    tiny: conv(8)-BN-ReLU-conv(16, stride 2)-BN-ReLU, 2x2 average pooling and
    the head. The pooling keeps a coarse spatial grid so position survives.
    """
    if input_side not in SUPPORTED_SIDES:
        raise UnsupportedSide(f"input side {input_side} not in {SUPPORTED_SIDES}")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    if arch == "tiny":
        side = input_side // 4
        layers = [
            _first(Conv2D(1, 8, 3, 1, rng, dtype)), BatchNorm(8, dtype=dtype), ReLU(),
            Conv2D(8, 16, 3, 2, rng, dtype), BatchNorm(16, dtype=dtype), ReLU(),
            AvgPool(2), Flatten(), _head(Dense(16 * side * side, num_classes, rng, dtype)),
        ]
        meta = {"main_convs": 2, "skips": 0}
    elif arch == "wrn":
        if (depth - 4) % 6:
            raise ValueError("wide resnet depth must be 6n + 4")
        n = (depth - 4) // 6
        widths = [16 * widen, 32 * widen, 64 * widen]
        layers = [_first(Conv2D(1, 16, 3, 1, rng, dtype))]
        cin = 16
        for g, (wd, stride) in enumerate(zip(widths, (1, 2, 2))):
            for b in range(n):
                layers.append(PreActBlock(cin, wd, stride if b == 0 else 1, rng, dtype))
                cin = wd
        layers += [BatchNorm(cin, dtype=dtype), ReLU(), GlobalAvgPool(), _head(Dense(cin, num_classes, rng, dtype))]
        meta = {"main_convs": 1 + 6 * n, "skips": 3 * n, "depth": depth, "widen": widen}
    else:
        raise ValueError(f"unknown arch {arch!r}")
    return Network(layers, input_side, num_classes, arch, seed, meta)


def build_mlp(widths, out_activation="sigmoid", seed=0, dtype=np.float32) -> Network:
    """Fully connected net ``widths[0] -> ... -> widths[-1]`` with ReLU between layers."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Dense(a, b, rng, dtype))
        if i < len(widths) - 2:
            layers.append(ReLU())
    if out_activation == "sigmoid":
        layers.append(Sigmoid())
    return Network(layers, arch="mlp", seed=seed, meta={"widths": list(widths)})


# --------------------------------------------------------------------------
# losses and training


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return float(loss), d / n


def mse(pred, target):
    diff = pred - target
    return float((diff**2).mean()), 2.0 * diff / diff.size


LOSSES = {"xent": cross_entropy, "mse": mse}


def l2_penalty(model: Network, l2: float) -> float:
    """Adds ``2 * l2 * W`` to weight gradients; returns ``l2 * sum(W**2)``."""
    if not l2:
        return 0.0
    total = 0.0
    for name, p, g in model.named_params():
        if name.endswith(".W"):
            total += float((p.astype(np.float64) ** 2).sum())
            g += (2.0 * l2 * p).astype(g.dtype)
    return l2 * total


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for _, p, _ in params]
        self.v = [np.zeros_like(p) for _, p, _ in params]
        self.t = 0

    def step(self, params):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for i, (_, p, g) in enumerate(params):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            p -= (self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)).astype(p.dtype)


@dataclass
class History:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    initial_loss: float = float("nan")

    def to_json(self):
        return {"loss": [float(v) for v in self.loss], "accuracy": [float(v) for v in self.accuracy],
                "initial_loss": float(self.initial_loss)}


def _prep_images(model: Network, X):
    X = np.asarray(X)
    if model.input_side is not None:
        if X.ndim == 3:
            X = X[:, None]
        if X.shape[-1] != model.input_side or X.shape[-2] != model.input_side:
            raise ShapeMismatch(f"image side {X.shape[-1]} != model side {model.input_side}")
    return X.astype(model.dtype, copy=False)


def train(model: Network, X, y, cfg: TrainConfig, loss: str = "xent") -> History:
    """Mini-batch Adam. ``X`` is ``(n, d, d)`` images or ``(n, features)``.

    For ``loss='xent'`` ``y`` holds class ids; for ``'mse'`` it is the target
    array. Shuffling uses only ``np.random.default_rng(cfg.seed)``.
    """
    X = _prep_images(model, X)
    if len(X) == 0:
        raise ValueError("empty training set")
    if loss == "xent":
        y = np.asarray(y, dtype=np.int64)
        if model.num_classes is not None and (y.min() < 0 or y.max() >= model.num_classes):
            raise ValueError("labels out of range")
    else:
        y = np.asarray(y, dtype=model.dtype)
    loss_fn = LOSSES[loss]
    rng = np.random.default_rng(cfg.seed)
    params = model.named_params()
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = History()

    probe = rng.permutation(len(X))[:256]
    hist.initial_loss = loss_fn(model.forward(X[probe], BATCH), y[probe])[0]

    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        tot_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            model.zero_grad()
            out = model.forward(xb, TRAIN)
            batch_loss, dout = loss_fn(out, yb)
            model.backward(dout.astype(model.dtype))
            batch_loss += l2_penalty(model, cfg.l2)
            opt.step(params)
            tot_loss += batch_loss * len(idx)
            if loss == "xent":
                correct += int((out.argmax(axis=1) == yb).sum())
        hist.loss.append(tot_loss / n)
        if loss == "xent":
            hist.accuracy.append(correct / n)
        logger.debug("epoch %d loss %.4f", epoch, hist.loss[-1])
    return hist


def predict(model: Network, X, batch_size: int = 512) -> np.ndarray:
    X = _prep_images(model, X)
    outs = [model.forward(X[i:i + batch_size], EVAL) for i in range(0, len(X), batch_size)]
    return np.concatenate(outs, axis=0)


def predict_softmax(model: Network, image, batch_size: int = 512) -> np.ndarray:
    """Softmax over the K transformation classes; accepts one image or a stack."""
    single = np.ndim(image) == 2
    X = np.asarray(image)[None] if single else image
    logits = predict(model, X, batch_size).astype(np.float64)
    p = softmax(logits)
    return p[0] if single else p


def accuracy(model: Network, X, y) -> float:
    return float((predict(model, X).argmax(axis=1) == np.asarray(y)).mean())


# --------------------------------------------------------------------------
# gradient check


def gradient_check(model: Network, X, y, loss: str = "xent", n_params: int = 200, step: float = 1e-5,
                   seed: int = 0, l2: float = 0.0) -> float:
    """Max relative error between backprop and central differences.

    Runs on a float64 copy with batch statistics (running BN statistics are
    not touched). Up to ``n_params`` scalar parameters are drawn with
    ``seed``. Relative error is ``|a - n| / max(|a|, |n|, 1e-6)``; the floor keeps
    gradients that sit at finite-difference noise level (about 1e-12) from
    dominating.

    A central difference straddling a ReLU kink measures a one-sided mix of
    two slopes. When a perturbation flips any ReLU mask the parameter is
    re-measured with a step ten times smaller (up to three times).
    """
    net = model.astype(np.float64)
    Xd = np.asarray(X, dtype=np.float64)
    if net.input_side is not None and Xd.ndim == 3:
        Xd = Xd[:, None]
    yd = np.asarray(y) if loss == "xent" else np.asarray(y, dtype=np.float64)
    loss_fn = LOSSES[loss]

    relus = [layer for _, layer in net.named_layers() if isinstance(layer, ReLU)]

    def objective():
        val = loss_fn(net.forward(Xd, BATCH), yd)[0]
        if l2:
            val += l2 * sum(float((p**2).sum()) for n_, p, _ in net.named_params() if n_.endswith(".W"))
        return val

    def masks():
        return [layer._mask.copy() for layer in relus]

    net.zero_grad()
    out = net.forward(Xd, BATCH)
    base_masks = masks()
    _, dout = loss_fn(out, yd)
    net.backward(dout)
    l2_penalty(net, l2)

    def central(p, idx, h):
        orig = p[idx]
        p[idx] = orig + h
        f_plus = objective()
        smooth = all(np.array_equal(a, b) for a, b in zip(masks(), base_masks))
        p[idx] = orig - h
        f_minus = objective()
        smooth = smooth and all(np.array_equal(a, b) for a, b in zip(masks(), base_masks))
        p[idx] = orig
        return (f_plus - f_minus) / (2 * h), smooth

    params = net.named_params()
    sizes = np.array([p.size for _, p, _ in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(offsets[-1], size=min(n_params, offsets[-1]), replace=False))
    worst = 0.0
    for flat in picks:
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        _, p, g = params[t]
        idx = np.unravel_index(flat - offsets[t], p.shape)
        analytic = float(g[idx])
        h = step
        numeric, smooth = central(p, idx, h)
        for _ in range(3):
            if smooth:
                break
            h /= 10.0
            numeric, smooth = central(p, idx, h)
        if not (np.isfinite(analytic) and np.isfinite(numeric)):
            return float("inf")
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: Network, config: dict | None = None, extra: dict | None = None) -> None:
    """``manifest.json`` + ``weights.bin`` (little-endian float32, manifest order)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = model.named_tensors()
    manifest = {
        "arch": model.arch,
        "input_side": model.input_side,
        "num_classes": model.num_classes,
        "seed": model.seed,
        "meta": model.meta,
        "dtype": "<f4",
        "config": config or {},
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
    }
    if extra:
        manifest.update(extra)
    blob = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for _, t in tensors)
    (path / "weights.bin").write_bytes(blob)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[Network, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest["arch"] == "mlp":
        model = build_mlp(manifest["meta"]["widths"], seed=manifest["seed"])
    else:
        kw = {}
        if manifest["arch"] == "wrn":
            kw = {"depth": manifest["meta"]["depth"], "widen": manifest["meta"]["widen"]}
        model = build_classifier(manifest["input_side"], manifest["num_classes"], manifest["arch"],
                                 seed=manifest["seed"], **kw)
    flat = np.frombuffer((path / "weights.bin").read_bytes(), dtype="<f4")
    pos = 0
    for t in manifest["tensors"]:
        size = int(np.prod(t["shape"])) if t["shape"] else 1
        model.set_tensor(t["name"], flat[pos:pos + size].reshape(t["shape"]).astype(np.float32))
        pos += size
    return model, manifest
