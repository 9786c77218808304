"""Minimal fully-connected network with exact gradients.

Small enough to audit, big enough for the desk-scale agent: affine layers
with relu or identity activations, a manual backward pass that also keeps
per-sample pre-activation gradients (the raw material for the per-neuron
learning-capacity metric), and a bias-corrected Adam optimizer.

``forward``/``backward`` accept a single input vector or a (batch, dim)
matrix. ``backward`` returns the gradients of whatever scalar the caller's
``loss_grad`` encodes; the training loop passes the gradient of the
batch-summed loss and divides by the batch size where a mean is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Mlp:
    layers: list[Layer]

    @classmethod
    def init(cls, dims: list[int], rng: np.random.Generator) -> "Mlp":
        """Hidden layers relu, final layer identity; weights and biases
        uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        if len(dims) < 2:
            raise ValueError("need at least an input and an output dimension")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            act = "identity" if i == len(dims) - 2 else "relu"
            layers.append(Layer(w, b, act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(layer.weight, layer.bias) for layer in self.layers]

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def load_from(self, other: "Mlp") -> None:
        """Copy parameter values from another network of identical shape."""
        for mine, theirs in zip(self.layers, other.layers):
            mine.weight[...] = theirs.weight
            mine.bias[...] = theirs.bias


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # per layer, (batch, in)
    preacts: list[np.ndarray]  # per layer, (batch, out)
    squeezed: bool  # True when the caller passed a single vector


@dataclass
class GradientRecord:
    """Exact gradients of a scalar loss.

    param_grads hold the batch-summed (dW, db) per layer; preact_grads hold
    the per-sample gradient w.r.t. each layer's affine output, shape
    (batch, out) per layer.
    """

    param_grads: list[tuple[np.ndarray, np.ndarray]]
    preact_grads: list[np.ndarray]
    batch_size: int

    def preact_magnitudes(self) -> list[np.ndarray]:
        """Per-layer batch-mean |gradient| per neuron."""
        return [np.abs(g).mean(axis=0) for g in self.preact_grads]


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        squeezed = True
    elif x.ndim == 2:
        squeezed = False
    else:
        raise ValueError(f"{what} must be 1-D or 2-D, got shape {x.shape}")
    if x.shape[1] != dim:
        raise ValueError(f"{what} has dimension {x.shape[1]}, expected {dim}")
    return x, squeezed


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Affine + activation composition; the cache holds everything the
    backward pass needs."""
    h, squeezed = _as_batch(x, net.input_dim, "input")
    inputs, preacts = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        preacts.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    out = h[0] if squeezed else h
    return out, ForwardCache(inputs, preacts, squeezed)


def backward(net: Mlp, cache: ForwardCache, loss_grad: np.ndarray) -> GradientRecord:
    """Exact gradients w.r.t. every parameter and every pre-activation of
    the scalar whose output gradient is ``loss_grad``."""
    g, _ = _as_batch(loss_grad, net.output_dim, "loss_grad")
    batch = cache.inputs[0].shape[0]
    if g.shape[0] != batch:
        raise ValueError(f"loss_grad batch {g.shape[0]} does not match cache batch {batch}")
    param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
    preact_grads: list[np.ndarray] = [None] * len(net.layers)  # type: ignore
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            dz = g * (cache.preacts[i] > 0.0)
        else:
            dz = g
        preact_grads[i] = dz
        param_grads[i] = (dz.T @ cache.inputs[i], dz.sum(axis=0))
        g = dz @ layer.weight
    return GradientRecord(param_grads, preact_grads, batch)


@dataclass
class AdamState:
    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    step_count: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        zeros = lambda: [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        return cls(m=zeros(), v=zeros(), step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to the parameter arrays in
    place; the moment accumulators and step count update alongside."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(params, grads, state.m, state.v):
        for p, g, m, v in ((w, gw, mw, vw), (b, gb, mb, vb)):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
