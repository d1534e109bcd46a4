"""Minimal dense feed-forward engine with exact analytic gradients.

Backs the GAN generator/discriminator, the MLP detector, and the Q-network.
All math is float64; training mutates a net in place (single owner),
inference on a frozen net is side-effect free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACT_IDENTITY = "identity"
ACT_RELU = "relu"
ACT_LEAKY_RELU = "leaky_relu"
ACT_SIGMOID = "sigmoid"

LOSS_BCE = "bce"
LOSS_MSE = "mse"

_ACT_TAGS = {ACT_IDENTITY: 0, ACT_RELU: 1, ACT_LEAKY_RELU: 2, ACT_SIGMOID: 3}
_ACT_NAMES = {v: k for k, v in _ACT_TAGS.items()}

_MAGIC = b"DNET"
_VERSION = 1


class WidthMismatch(ValueError):
    pass


class NonFiniteLoss(ArithmeticError):
    pass


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: str
    alpha: float = 0.01  # leaky-relu slope


@dataclass
class DenseNet:
    layers: list[Layer]
    input_width: int

    @property
    def output_width(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            layers=[
                Layer(l.weights.copy(), l.biases.copy(), l.activation, l.alpha)
                for l in self.layers
            ],
            input_width=self.input_width,
        )


@dataclass
class TrainBatch:
    inputs: np.ndarray  # (batch, in_width)
    targets: np.ndarray  # (batch, out_width)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise WidthMismatch("inputs and targets disagree on batch size")


def init_dense(
    widths: list[int], activations: list[str], seed: int, alpha: float = 0.01
) -> DenseNet:
    """Glorot-uniform initialization: U(+-sqrt(6/(fan_in+fan_out)))."""
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(widths, widths[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append(Layer(w, b, act, alpha))
    return DenseNet(layers=layers, input_width=widths[0])


def _apply_activation(z: np.ndarray, layer: Layer) -> np.ndarray:
    if layer.activation == ACT_IDENTITY:
        return z
    if layer.activation == ACT_RELU:
        return np.maximum(z, 0.0)
    if layer.activation == ACT_LEAKY_RELU:
        return np.where(z >= 0.0, z, layer.alpha * z)
    if layer.activation == ACT_SIGMOID:
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {layer.activation!r}")


def _activation_grad(z: np.ndarray, a: np.ndarray, layer: Layer) -> np.ndarray:
    if layer.activation == ACT_IDENTITY:
        return np.ones_like(z)
    if layer.activation == ACT_RELU:
        return (z >= 0.0).astype(np.float64)
    if layer.activation == ACT_LEAKY_RELU:
        return np.where(z >= 0.0, 1.0, layer.alpha)
    if layer.activation == ACT_SIGMOID:
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {layer.activation!r}")


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Layer-by-layer affine + activation; accepts a vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != net.input_width:
        raise WidthMismatch(f"input width {a.shape[1]}, net expects {net.input_width}")
    for layer in net.layers:
        a = _apply_activation(a @ layer.weights + layer.biases, layer)
    return a[0] if single else a


def forward_cached(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list, list]:
    """Forward pass keeping pre-activations and activations for backprop."""
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != net.input_width:
        raise WidthMismatch(f"input width {a.shape[1]}, net expects {net.input_width}")
    zs, acts = [], [a]
    for layer in net.layers:
        z = a @ layer.weights + layer.biases
        a = _apply_activation(z, layer)
        zs.append(z)
        acts.append(a)
    return a, zs, acts


def backward(
    net: DenseNet, zs: list, acts: list, dL_dy: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate dL/dy through the cached pass.

    Returns ([(dW, db) per layer], dL/dx) so callers can chain nets
    (the GAN trains its generator through a frozen discriminator).
    """
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    delta = dL_dy
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = delta * _activation_grad(zs[i], acts[i + 1], layer)
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        delta = delta @ layer.weights.T
    return grads, delta


def loss_and_grad(
    outputs: np.ndarray, targets: np.ndarray, loss: str
) -> tuple[float, np.ndarray]:
    """Mean loss over every output element plus dL/doutputs."""
    n = outputs.size
    if loss == LOSS_MSE:
        diff = outputs - targets
        return float(np.mean(diff * diff)), 2.0 * diff / n
    if loss == LOSS_BCE:
        y = np.clip(outputs, 1e-12, 1.0 - 1e-12)
        value = float(np.mean(-(targets * np.log(y) + (1.0 - targets) * np.log(1.0 - y))))
        grad = (y - targets) / (y * (1.0 - y)) / n
        return value, grad
    raise ValueError(f"unknown loss {loss!r}")


class SgdMomentum:
    def __init__(self, lr: float = 0.1, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self._velocity):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None
        self._scratch: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
            self._scratch = [np.empty_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        # standard rescaling: p -= lr' * m / (sqrt(v) + eps'), all in place
        lr_t = self.lr * np.sqrt(bc2) / bc1
        eps_t = self.eps * np.sqrt(bc2)
        for p, g, m, v, s in zip(params, grads, self._m, self._v, self._scratch):
            np.multiply(g, 1.0 - self.beta1, out=s)
            m *= self.beta1
            m += s
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v *= self.beta2
            v += s
            np.sqrt(v, out=s)
            s += eps_t
            np.divide(m, s, out=s)
            s *= lr_t
            p -= s


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out


def train_step(net: DenseNet, batch: TrainBatch, loss: str, opt) -> float:
    """One full-batch gradient step; returns the pre-update mean loss."""
    outputs, zs, acts = forward_cached(net, batch.inputs)
    if outputs.shape != batch.targets.shape:
        raise WidthMismatch(
            f"net emits {outputs.shape}, targets are {batch.targets.shape}"
        )
    value, dl_dy = loss_and_grad(outputs, batch.targets, loss)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{loss} loss is {value}")
    grads, _ = backward(net, zs, acts, dl_dy)
    opt.step(net.parameters(), flatten_grads(grads))
    return value


def gradient_check(net: DenseNet, batch: TrainBatch, loss: str, eps: float = 1e-5) -> float:
    """Central finite differences vs analytic gradients over every parameter.

    Returns the maximum relative error; the probe net is a copy so the
    caller's parameters are untouched.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps outside [1e-7, 1e-3]")
    probe = net.copy()
    outputs, zs, acts = forward_cached(probe, batch.inputs)
    _, dl_dy = loss_and_grad(outputs, batch.targets, loss)
    grads, _ = backward(probe, zs, acts, dl_dy)
    analytic = flatten_grads(grads)

    worst = 0.0
    for param, grad in zip(probe.parameters(), analytic):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = loss_and_grad(forward(probe, batch.inputs), batch.targets, loss)
            flat[i] = orig - eps
            down, _ = loss_and_grad(forward(probe, batch.inputs), batch.targets, loss)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            scale = max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / scale)
    return worst


def save_net(net: DenseNet, path) -> None:
    """Versioned binary container: magic, shapes, little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, net.input_width))
        fh.write(struct.pack("<I", len(net.layers)))
        for layer in net.layers:
            fan_in, fan_out = layer.weights.shape
            fh.write(
                struct.pack(
                    "<IIBd", fan_in, fan_out, _ACT_TAGS[layer.activation], layer.alpha
                )
            )
            fh.write(layer.weights.astype("<f8").tobytes())
            fh.write(layer.biases.astype("<f8").tobytes())


def load_net(path) -> DenseNet:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a DenseNet container")
        version, input_width = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported container version {version}")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        layers = []
        header_size = struct.calcsize("<IIBd")
        for _ in range(n_layers):
            fan_in, fan_out, act, alpha = struct.unpack("<IIBd", fh.read(header_size))
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out).copy()
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy()
            layers.append(Layer(w, b, _ACT_NAMES[act], alpha))
    return DenseNet(layers=layers, input_width=input_width)
