"""Small numpy neural-network core with analytic backprop.

Layers cache what their backward pass needs, so a backward call must follow
the matching forward. Convolutions run as im2col + BLAS matmul; columns are
rebuilt during backward instead of cached to keep peak memory flat. All math
is float64: modest model sizes make this affordable and it keeps the central
finite-difference gradient check tight.

Checkpoints are a 4-byte length prefix, a JSON header (array names, shapes,
plus caller metadata such as seed and architecture), then the arrays as
little-endian float32 in declaration order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InvalidConfigError, InvalidDataError, ShapeError


class Param:
    """A trainable tensor and its gradient accumulator."""

    def __init__(self, value: np.ndarray, name: str):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name


class Layer:
    def params(self) -> list[Param]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Non-trainable state that must survive a save/load round trip."""
        return []

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def zero_grads(params: list[Param]) -> None:
    for p in params:
        p.grad[...] = 0.0


def he_init(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng, name: str = "dense"):
        self.w = Param(he_init(rng, (n_in, n_out), n_in), f"{name}.w")
        self.b = Param(np.zeros(n_out), f"{name}.b")
        self._x = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train: bool = False):
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dout):
        self.w.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value.T


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    oh, ow = _conv_out(h, k, stride, pad), _conv_out(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, oh, ow, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)


def _col2im(dcols, x_shape, k, stride, pad):
    n, c, h, w = x_shape
    oh, ow = _conv_out(h, k, stride, pad), _conv_out(w, k, stride, pad)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    d6 = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += d6[:, :, i, j]
    if pad == 0:
        return dxp
    return dxp[:, :, pad:-pad, pad:-pad]


class Conv2d(Layer):
    """NCHW convolution via im2col."""

    def __init__(self, c_in: int, c_out: int, k: int, stride: int, pad: int,
                 rng, name: str = "conv"):
        fan_in = c_in * k * k
        self.w = Param(he_init(rng, (c_out, c_in, k, k), fan_in), f"{name}.w")
        self.b = Param(np.zeros(c_out), f"{name}.b")
        self.k, self.stride, self.pad = k, stride, pad
        self._x = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.w.value.shape[1]:
            raise ShapeError(
                f"conv expects (n, {self.w.value.shape[1]}, h, w), got {x.shape}"
            )
        self._x = x
        c_out = self.w.value.shape[0]
        cols = _im2col(x, self.k, self.stride, self.pad)
        out = cols @ self.w.value.reshape(c_out, -1).T + self.b.value
        n = x.shape[0]
        oh = _conv_out(x.shape[2], self.k, self.stride, self.pad)
        ow = _conv_out(x.shape[3], self.k, self.stride, self.pad)
        return out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)

    def backward(self, dout):
        x = self._x
        c_out = self.w.value.shape[0]
        dmat = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
        cols = _im2col(x, self.k, self.stride, self.pad)
        self.w.grad += (cols.T @ dmat).T.reshape(self.w.value.shape)
        self.b.grad += dmat.sum(axis=0)
        dcols = dmat @ self.w.value.reshape(c_out, -1)
        return _col2im(dcols, x.shape, self.k, self.stride, self.pad)


class BatchNorm2d(Layer):
    """Per-channel batch norm; inference uses frozen running statistics."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 name: str = "bn"):
        self.gamma = Param(np.ones(channels), f"{name}.gamma")
        self.beta = Param(np.zeros(channels), f"{name}.beta")
        self.eps = eps
        self.momentum = momentum
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._name = name
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [(f"{self._name}.running_mean", self.running_mean),
                (f"{self._name}.running_var", self.running_var)]

    def forward(self, x, train: bool = False):
        axes = (0, 2, 3)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv, x.shape, train)
        return self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]

    def backward(self, dout):
        xhat, inv, shape, train = self._cache
        axes = (0, 2, 3)
        m = shape[0] * shape[2] * shape[3]
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        g = self.gamma.value[None, :, None, None]
        dxhat = dout * g
        if not train:
            return dxhat * inv[None, :, None, None]
        # batch statistics took part in the forward pass, so their gradient
        # terms appear here
        sum_dxhat = dxhat.sum(axis=axes)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes)
        dx = (dxhat - (sum_dxhat[None, :, None, None]
                       + xhat * sum_dxhat_xhat[None, :, None, None]) / m)
        return dx * inv[None, :, None, None]


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train: bool = False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, train: bool = False):
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        self._y = y
        return y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


class GlobalAvgPool2d(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train: bool = False):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None], self._shape) / (h * w)


class AvgPool2d(Layer):
    """Non-overlapping average pooling; spatial dims must divide by k."""

    def __init__(self, k: int):
        self.k = k
        self._shape = None

    def forward(self, x, train: bool = False):
        n, c, h, w = x.shape
        if h % self.k or w % self.k:
            raise ShapeError(f"({h}, {w}) not divisible by pool size {self.k}")
        self._shape = x.shape
        return x.reshape(n, c, h // self.k, self.k, w // self.k, self.k).mean(axis=(3, 5))

    def backward(self, dout):
        n, c, h, w = self._shape
        k = self.k
        up = np.repeat(np.repeat(dout, k, axis=2), k, axis=3)
        return up / (k * k)


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train: bool = False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Standardizer(Layer):
    """Frozen feature-wise affine scaling fit once on training data."""

    def __init__(self, n_features: int, name: str = "scaler"):
        self.mean = np.zeros(n_features)
        self.sd = np.ones(n_features)
        self._name = name

    def buffers(self):
        return [(f"{self._name}.mean", self.mean), (f"{self._name}.sd", self.sd)]

    def fit(self, x) -> None:
        self.mean = x.mean(axis=0)
        self.sd = np.maximum(x.std(axis=0), 1e-8)

    def forward(self, x, train: bool = False):
        return (x - self.mean) / self.sd

    def backward(self, dout):
        return dout / self.sd


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def params(self):
        return [p for l in self.layers for p in l.params()]

    def buffers(self):
        return [b for l in self.layers for b in l.buffers()]

    def forward(self, x, train: bool = False):
        for l in self.layers:
            x = l.forward(x, train)
        return x

    def backward(self, dout):
        for l in reversed(self.layers):
            dout = l.backward(dout)
        return dout


class ResidualBlock(Layer):
    """conv-bn-relu-conv-bn plus skip, ReLU after the add.

    The skip is the identity when shape allows; a stride-matched 1x1
    convolution with batch norm projects it otherwise.
    """

    def __init__(self, c_in: int, c_out: int, stride: int, rng,
                 eps: float = 1e-5, momentum: float = 0.1, name: str = "res"):
        self.conv1 = Conv2d(c_in, c_out, 3, stride, 1, rng, f"{name}.conv1")
        self.bn1 = BatchNorm2d(c_out, eps, momentum, f"{name}.bn1")
        self.relu1 = ReLU()
        self.conv2 = Conv2d(c_out, c_out, 3, 1, 1, rng, f"{name}.conv2")
        self.bn2 = BatchNorm2d(c_out, eps, momentum, f"{name}.bn2")
        self.relu_out = ReLU()
        if stride != 1 or c_in != c_out:
            self.proj_conv = Conv2d(c_in, c_out, 1, stride, 0, rng, f"{name}.proj")
            self.proj_bn = BatchNorm2d(c_out, eps, momentum, f"{name}.proj_bn")
        else:
            self.proj_conv = None
            self.proj_bn = None

    def _sublayers(self):
        layers = [self.conv1, self.bn1, self.conv2, self.bn2]
        if self.proj_conv is not None:
            layers += [self.proj_conv, self.proj_bn]
        return layers

    def params(self):
        return [p for l in self._sublayers() for p in l.params()]

    def buffers(self):
        return [b for l in self._sublayers() for b in l.buffers()]

    def forward(self, x, train: bool = False):
        h = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train)
        main = self.bn2.forward(self.conv2.forward(h, train), train)
        if self.proj_conv is not None:
            skip = self.proj_bn.forward(self.proj_conv.forward(x, train), train)
        else:
            skip = x
        return self.relu_out.forward(main + skip, train)

    def backward(self, dout):
        d = self.relu_out.backward(dout)
        dmain = self.bn2.backward(d)
        dmain = self.conv2.backward(dmain)
        dmain = self.relu1.backward(dmain)
        dmain = self.bn1.backward(dmain)
        dx = self.conv1.backward(dmain)
        if self.proj_conv is not None:
            dx = dx + self.proj_conv.backward(self.proj_bn.backward(d))
        else:
            dx = dx + d
        return dx


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

PROB_CLAMP = 1e-7


def weighted_bce(p, y, w_pos: float = 1.0, w_neg: float = 1.0):
    """Mean weighted binary cross-entropy and its gradient wrt p.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the log.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    w = np.where(y == 1.0, w_pos, w_neg)
    n = p.shape[0]
    loss = float(np.mean(w * -(y * np.log(pc) + (1 - y) * np.log(1 - pc))))
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    grad = w * (-y / pc + (1 - y) / (1 - pc)) / n * inside
    return loss, grad


def focal_loss(p, y, gamma: float = 2.0, alpha_pos: float = 1.0,
               alpha_neg: float = 1.0):
    """Mean focal loss -alpha_y (1 - p_t)^gamma log(p_t) and gradient wrt p.

    With gamma=0 and unit alphas this reduces exactly to plain BCE.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pt = np.where(y == 1.0, pc, 1.0 - pc)
    alpha = np.where(y == 1.0, alpha_pos, alpha_neg)
    n = p.shape[0]
    loss = float(np.mean(-alpha * (1.0 - pt) ** gamma * np.log(pt)))
    # d/dpt of -(1-pt)^g log(pt), then dpt/dp = +1 for positives, -1 otherwise
    if gamma == 0.0:
        dpt = -alpha / pt
    else:
        dpt = alpha * (gamma * (1.0 - pt) ** (gamma - 1.0) * np.log(pt)
                       - (1.0 - pt) ** gamma / pt)
    sign = np.where(y == 1.0, 1.0, -1.0)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    grad = dpt * sign / n * inside
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


class SGD:
    def __init__(self, params: list[Param], lr: float):
        if lr <= 0:
            raise InvalidConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            p.value -= self.lr * p.grad


class Adam:
    def __init__(self, params: list[Param], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise InvalidConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            self.m[i] = b1 * self.m[i] + (1 - b1) * p.grad
            self.v[i] = b2 * self.v[i] + (1 - b2) * p.grad ** 2
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def finite_difference_check(compute_loss, run_backprop, params: list[Param],
                            h: float = 1e-4, refine_above: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    run_backprop() must zero the grads, run forward + backward, and return
    the loss; compute_loss() must run the forward pass alone on the same
    inputs. Every parameter element is perturbed, so keep the model tiny.

    An element whose error at step h exceeds refine_above is re-measured at
    h/8 and h/64 and the smallest error wins: a rectifier kink lying between
    the two evaluation points stops being straddled once the step shrinks
    below its distance, while a genuinely wrong gradient disagrees at every
    step size.

    Returns the maximum relative error
    |fd - g| / max(|fd|, |g|, 1e-6) over all elements.
    """
    run_backprop()
    worst = 0.0
    for p in params:
        flat = p.value.ravel()
        gflat = p.grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            err = np.inf
            for step in (h, h / 8.0, h / 64.0):
                flat[i] = orig + step
                lp = compute_loss()
                flat[i] = orig - step
                lm = compute_loss()
                flat[i] = orig
                fd = (lp - lm) / (2.0 * step)
                e = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6)
                err = min(err, e)
                if err <= refine_above:
                    break
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint files
# ---------------------------------------------------------------------------


def save_arrays(path: str, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write named arrays with a JSON header and float32 payloads."""
    header = dict(meta)
    header["arrays"] = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_arrays(path: str):
    """Read a checkpoint; returns (meta, {name: float64 array})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise InvalidDataError(f"{path}: truncated checkpoint")
    (hlen,) = struct.unpack_from("<I", blob, 0)
    if len(blob) < 4 + hlen:
        raise InvalidDataError(f"{path}: truncated checkpoint header")
    header = json.loads(blob[4:4 + hlen].decode("utf-8"))
    out = {}
    offset = 4 + hlen
    for item in header.pop("arrays"):
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        if len(blob) - offset < count * 4:
            raise InvalidDataError(f"{path}: array {item['name']} truncated")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        out[item["name"]] = arr.astype(np.float64).reshape(shape)
        offset += count * 4
    return header, out
