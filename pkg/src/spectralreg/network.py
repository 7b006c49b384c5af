"""Feed-forward softplus networks and their derivative products.

A ``Network`` is an immutable stack of dense layers with softplus
activations everywhere except the output layer, so the map is smooth and
scalar outputs have symmetric Hessians. The module exposes four batched
derivative products:

``forward``  f(x)                     ``vjp``  u'J  (reverse mode)
``jvp``      Jv   (forward mode)      ``hvp``  Hv   (forward over reverse)

plus ``param_grad`` for gradients of any scalar loss assembled from those
products with respect to the parameters. Quantities that must not carry
gradient (e.g. eigenvector estimates) are passed in as plain arrays and
wrapped as constants, which detaches them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError, NumericError

_CHECKPOINT_MAGIC = b"SPREGNET"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Network:
    """Immutable feed-forward network f(x; theta) with softplus activations."""

    layer_dims: tuple
    weights: tuple
    biases: tuple
    activation_beta: float = 8.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(_frozen(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(_frozen(b) for b in self.biases))
        if len(dims) < 2:
            raise ContractError("a network needs at least input and output dims")
        if self.activation_beta <= 0:
            raise ContractError("activation_beta must be positive")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("one weight and bias per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]):
                raise DimensionError(
                    f"layer {i} weight shape {w.shape} != {(dims[i], dims[i + 1])}"
                )
            if b.shape != (dims[i + 1],):
                raise DimensionError(
                    f"layer {i} bias shape {b.shape} != {(dims[i + 1],)}"
                )

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @classmethod
    def init(cls, layer_dims, activation_beta: float = 8.0, seed=0) -> "Network":
        """He-scaled Gaussian weights, zero biases."""
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in layer_dims)
        weights = []
        biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, tuple(weights), tuple(biases), activation_beta)

    @classmethod
    def linear(cls, weight, bias=None, activation_beta: float = 8.0) -> "Network":
        """Single linear layer y = x @ W + b (no activation)."""
        weight = np.asarray(weight, dtype=np.float64)
        if bias is None:
            bias = np.zeros(weight.shape[1])
        return cls(
            (weight.shape[0], weight.shape[1]), (weight,), (np.asarray(bias),),
            activation_beta,
        )

    @classmethod
    def identity(cls, dim: int) -> "Network":
        return cls.linear(np.eye(dim))

    def param_arrays(self) -> list:
        """Parameters in a fixed flat order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def with_params(self, arrays) -> "Network":
        """Rebuild the network from arrays in ``param_arrays`` order."""
        arrays = list(arrays)
        n = len(self.weights)
        if len(arrays) != 2 * n:
            raise DimensionError(f"expected {2 * n} parameter arrays, got {len(arrays)}")
        return Network(
            self.layer_dims,
            tuple(arrays[2 * i] for i in range(n)),
            tuple(arrays[2 * i + 1] for i in range(n)),
            self.activation_beta,
        )

    def num_params(self) -> int:
        return sum(a.size for a in self.param_arrays())


# --------------------------------------------------------------------------
# node-level network evaluation
# --------------------------------------------------------------------------


def forward_nodes(weights, biases, beta: float, x: ad.Node) -> ad.Node:
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = ad.softplus(h, beta)
    return h


def _check_batch(x, dim, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(f"{name} must have shape [batch, {dim}], got {x.shape}")
    return x


class TapedNetwork:
    """A network with parameters lifted to gradient leaves.

    Used inside ``param_grad`` builders: the derivative products below
    return nodes that stay differentiable with respect to the parameters.
    ``x``, ``u`` and ``v`` arguments are treated as constants.
    """

    def __init__(self, net: Network, trainable: bool = True):
        make = ad.leaf if trainable else ad.constant
        self.net = net
        self.beta = net.activation_beta
        self.weight_nodes = [make(w) for w in net.weights]
        self.bias_nodes = [make(b) for b in net.biases]

    @property
    def param_nodes(self) -> list:
        out = []
        for w, b in zip(self.weight_nodes, self.bias_nodes):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x) -> ad.Node:
        x = ad.constant(_check_batch(x, self.net.in_dim))
        return forward_nodes(self.weight_nodes, self.bias_nodes, self.beta, x)

    def vjp(self, x, u) -> ad.Node:
        x_node = ad.leaf(_check_batch(x, self.net.in_dim))
        u = _check_batch(np.asarray(u, dtype=np.float64), self.net.out_dim, "u")
        y = forward_nodes(self.weight_nodes, self.bias_nodes, self.beta, x_node)
        return ad.grad(y, [x_node], seed=u)[0]

    def jvp(self, x, v) -> ad.Node:
        x_node = ad.constant(_check_batch(x, self.net.in_dim))
        v = _check_batch(np.asarray(v, dtype=np.float64), self.net.in_dim, "v")
        y = forward_nodes(self.weight_nodes, self.bias_nodes, self.beta, x_node)
        return ad.pushforward([y], [(x_node, v)])[0]

    def hvp(self, x, v) -> ad.Node:
        if self.net.out_dim != 1:
            raise ContractError(
                f"hvp requires a scalar-output network, got out_dim={self.net.out_dim}"
            )
        x_node = ad.leaf(_check_batch(x, self.net.in_dim))
        v = _check_batch(np.asarray(v, dtype=np.float64), self.net.in_dim, "v")
        y = forward_nodes(self.weight_nodes, self.bias_nodes, self.beta, x_node)
        g = ad.grad(y, [x_node])[0]
        return ad.pushforward([g], [(x_node, v)])[0]


def forward(net: Network, x) -> np.ndarray:
    """Batched evaluation f(x); row i depends only on row i of x."""
    return TapedNetwork(net, trainable=False).forward(x).value


def vjp(net: Network, x, u) -> np.ndarray:
    """u'J_f(x) per batch row."""
    return TapedNetwork(net, trainable=False).vjp(x, u).value


def jvp(net: Network, x, v) -> np.ndarray:
    """J_f(x) v per batch row."""
    return TapedNetwork(net, trainable=False).jvp(x, v).value


def hvp(net: Network, x, v) -> np.ndarray:
    """H_f(x) v per batch row for a scalar-output network."""
    return TapedNetwork(net, trainable=False).hvp(x, v).value


def param_grad(net: Network, build) -> list:
    """Gradients of a built scalar loss with respect to every parameter.

    ``build(tn)`` receives a :class:`TapedNetwork` and must return a
    scalar node; it may call ``tn.forward/vjp/jvp/hvp`` any number of
    times. Returns arrays in ``Network.param_arrays`` order.
    """
    return value_and_param_grad(net, build)[1]


def value_and_param_grad(net: Network, build):
    tn = TapedNetwork(net)
    loss = build(tn)
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.value).all():
        raise NumericError("loss is not finite", value=float(loss.value))
    grads = ad.grad(loss, tn.param_nodes)
    return float(loss.value), [g.value for g in grads]


# --------------------------------------------------------------------------
# checkpoints
#
# Byte layout (all integers little-endian unsigned 64-bit):
#   magic "SPREGNET" | header_len u64 | header JSON (UTF-8) | tensor bytes
# The header holds layer_dims, activation_beta and an ordered tensor list
# of {"name", "shape"}; tensor bytes follow in that order, each row-major
# float64 little-endian. Floats in the header use repr round-tripping, so
# a save/load cycle is bit-exact.
# --------------------------------------------------------------------------


def save_checkpoint(net: Network, path) -> None:
    names = []
    for i in range(len(net.weights)):
        names.append((f"w{i}", net.weights[i]))
        names.append((f"b{i}", net.biases[i]))
    header = {
        "format": 1,
        "layer_dims": list(net.layer_dims),
        "activation_beta": net.activation_beta,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in names:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ContractError(f"not a network checkpoint: {path!r}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for t in header["tensors"]:
            shape = tuple(t["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            arrays[t["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape)
    n_layers = len(header["layer_dims"]) - 1
    return Network(
        tuple(header["layer_dims"]),
        tuple(arrays[f"w{i}"] for i in range(n_layers)),
        tuple(arrays[f"b{i}"] for i in range(n_layers)),
        header["activation_beta"],
    )
