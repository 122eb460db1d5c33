"""Dense feed-forward networks and their Jacobian products."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = ("relu", "identity")
MAX_JACOBIAN_ENTRIES = 10**6


@dataclass
class Layer:
    weight: Tensor  # (out, in)
    bias: Tensor  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("layer weight must be (out, in) and bias (out,)")


class Network:
    """Stack of dense layers ``h -> act(W h + b)``.

    Parameters are leaf tensors with ``requires_grad=True``; the flat
    parameter vector orders them as ``W_1, b_1, W_2, b_2, ...`` with each
    weight matrix in row-major order.
    """

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError(
                    f"layer widths do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        for layer in layers:
            layer.weight.requires_grad = True
            layer.bias.requires_grad = True
        self.layers = layers

    @classmethod
    def from_sizes(cls, sizes, activations=None, rng=None):
        """He-initialised network with layer widths ``sizes[0] -> ... -> sizes[-1]``.

        By default every layer except the last is ReLU.
        """
        rng = np.random.default_rng(rng)
        n = len(sizes) - 1
        if n < 1:
            raise ValueError("sizes must list at least input and output width")
        if activations is None:
            activations = ["relu"] * (n - 1) + ["identity"]
        if len(activations) != n:
            raise ValueError("one activation per layer required")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            W = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
            layers.append(Layer(Tensor(W), Tensor(np.zeros(fan_out)), act))
        return cls(layers)

    @classmethod
    def reconstruction(cls, q, p, depth=3, rng=None):
        """Input width ``q`` followed by ``depth`` layers of width ``p``."""
        return cls.from_sizes([q] + [p] * depth, rng=rng)

    @classmethod
    def from_matrices(cls, weights, biases=None, activations=None):
        weights = [np.asarray(W, dtype=np.float64) for W in weights]
        if biases is None:
            biases = [np.zeros(W.shape[0]) for W in weights]
        if activations is None:
            activations = ["identity"] * len(weights)
        return cls(
            Layer(Tensor(W), Tensor(np.asarray(b, dtype=np.float64)), a)
            for W, b, a in zip(weights, biases, activations)
        )

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    @property
    def params(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    @property
    def param_count(self):
        return int(np.sum([p.size for p in self.params]))

    def get_flat(self):
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {theta.shape}")
        pos = 0
        for p in self.params:
            p.data = theta[pos : pos + p.size].reshape(p.shape).copy()
            pos += p.size

    def copy(self):
        return Network.from_matrices(
            [l.weight.data.copy() for l in self.layers],
            [l.bias.data.copy() for l in self.layers],
            [l.activation for l in self.layers],
        )

    def __call__(self, y):
        h = T.as_tensor(y)
        squeeze = h.ndim == 1
        if squeeze:
            h = T.reshape(h, (1, h.shape[0]))
        if h.shape[-1] != self.input_dim:
            raise ValueError(f"input width {h.shape[-1]} != network input {self.input_dim}")
        for layer in self.layers:
            h = T.linear(h, layer.weight, layer.bias)
            if layer.activation == "relu":
                h = T.relu(h)
        if squeeze:
            h = T.reshape(h, (self.output_dim,))
        return h

    def __repr__(self):
        widths = [self.input_dim] + [l.weight.shape[0] for l in self.layers]
        return f"Network({' -> '.join(map(str, widths))}, params={self.param_count})"


def _check(arr, width, what):
    arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype=np.float64)
    if arr.shape[-1] != width:
        raise ValueError(f"{what} has width {arr.shape[-1]}, expected {width}")
    return arr


def forward(net, y):
    """Network prediction for one input (q,) or a batch (B, q)."""
    _check(y, net.input_dim, "y")
    with T.no_grad():
        return net(y).data


def vjp_tensor(net, y, d, create_graph=False):
    """``d^T J(y)`` row-wise for a batch; ``d`` may itself live on the tape."""
    _check(y, net.input_dim, "y")
    _check(d, net.output_dim, "d")
    y_leaf = Tensor(y.data if isinstance(y, Tensor) else y, requires_grad=True)
    with T._recording(True):
        out = net(y_leaf)
    (g,) = T.grad([out], [y_leaf], [T.as_tensor(d)], create_graph=create_graph)
    return g


def jvp_tensor(net, y, v, method="forward", create_graph=False):
    """``J(y) v`` row-wise for a batch.

    ``method="forward"`` propagates tangents through the primitives;
    ``method="double_vjp"`` differentiates a vjp with respect to its
    cotangent argument.
    """
    _check(y, net.input_dim, "y")
    _check(v, net.input_dim, "v")
    ydata = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    if method == "forward":
        y_leaf = Tensor(ydata)
        y_leaf.tangent = T.as_tensor(v)
        with T._recording(create_graph or T._state.record):
            out = net(y_leaf)
        return out.tangent
    if method == "double_vjp":
        out_shape = ydata.shape[:-1] + (net.output_dim,)
        dummy = Tensor(np.zeros(out_shape), requires_grad=True)
        with T._recording(True):
            g = vjp_tensor(net, ydata, dummy, create_graph=True)
        (u,) = T.grad([g], [dummy], [T.as_tensor(v)], create_graph=create_graph)
        return u
    raise ValueError(f"unknown jvp method {method!r}")


def vjp(net, y, d):
    with T.no_grad():
        return vjp_tensor(net, y, d).data


def jvp(net, y, v, method="forward"):
    with T.no_grad():
        return jvp_tensor(net, y, v, method=method).data


def param_grad(scalar, net):
    """Gradient of a recorded scalar w.r.t. all network parameters, flattened."""
    if not isinstance(scalar, Tensor):
        raise TypeError("param_grad expects a Tensor")
    if scalar.size != 1:
        raise ValueError(f"param_grad needs a scalar terminal, got shape {scalar.shape}")
    if not scalar.requires_grad:
        raise ValueError("scalar was not recorded on a tape (computed under no_grad?)")
    grads = T.grad([scalar], net.params)
    return np.concatenate([g.data.ravel() for g in grads])


def explicit_jacobian(net, y, assemble="rows"):
    """Materialise J(y) (p x q) from p vjps (rows) or q jvps (columns)."""
    y = _check(y, net.input_dim, "y")
    if y.ndim != 1:
        raise ValueError("explicit_jacobian takes a single input vector")
    p, q = net.output_dim, net.input_dim
    if p * q > MAX_JACOBIAN_ENTRIES:
        raise MemoryError(f"Jacobian {p}x{q} exceeds the {MAX_JACOBIAN_ENTRIES}-entry guard")
    with T.no_grad():
        if assemble == "rows":
            return vjp_tensor(net, np.tile(y, (p, 1)), np.eye(p)).data
        if assemble == "cols":
            return jvp_tensor(net, np.tile(y, (q, 1)), np.eye(q)).data.T.copy()
    raise ValueError(f"unknown assembly {assemble!r}")
