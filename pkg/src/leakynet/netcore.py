"""Network representation for leaky-ReLU feed-forward networks.

A network is a nonempty sequence of layers ``x -> act(W x + b)`` where every
unit carries its own leaky slope ``alpha``: ``alpha = 1`` is the identity,
``alpha = 0`` is the ReLU and ``0 < alpha < 1`` is a true leaky ReLU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


def leaky_relu(x, alpha):
    """sigma_alpha(x) = alpha*x for x < 0 and x otherwise (elementwise)."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, alpha * x, x)


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, ndmin=ndim)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map followed by unit-wise leaky ReLUs."""

    weight: np.ndarray
    bias: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weight, 2)
        b = _frozen(self.bias, 1)
        a = _frozen(self.alphas, 1)
        if not (len(b) == len(a) == w.shape[0]):
            raise ValueError(
                f"layer shape mismatch: weight {w.shape}, bias {len(b)}, alphas {len(a)}"
            )
        if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
            raise ValueError("activation slopes must lie in [0, 1]")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "alphas", a)

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = self.pre_activation(x)
        return np.where(z < 0.0, self.alphas * z, z)

    def equals(self, other: "Layer") -> bool:
        return (
            self.weight.shape == other.weight.shape
            and np.array_equal(self.weight, other.weight)
            and np.array_equal(self.bias, other.bias)
            and np.array_equal(self.alphas, other.alphas)
        )


def layer(weight, bias=None, alphas=1.0) -> Layer:
    """Convenience constructor; scalar ``alphas`` is broadcast over the units."""
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=float).reshape(-1)
    a = np.broadcast_to(np.asarray(alphas, dtype=float), (w.shape[0],)).copy()
    return Layer(w, b, a)


@dataclass(frozen=True)
class NetworkStats:
    w_max: int
    d_min: int
    depth: int


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        if int(self.input_dim) < 1:
            raise ValueError("input_dim must be positive")
        d = int(self.input_dim)
        for i, lay in enumerate(layers):
            if lay.d_in != d:
                raise ValueError(f"layer {i} expects input dim {lay.d_in}, got {d}")
            d = lay.d_out
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", int(self.input_dim))

    @property
    def output_dim(self) -> int:
        return self.layers[-1].d_out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [lay.d_out for lay in self.layers]

    @cached_property
    def packed(self):
        return _kernels.pack_layers(
            [l.weight for l in self.layers],
            [l.bias for l in self.layers],
            [l.alphas for l in self.layers],
        )

    def alphas(self) -> np.ndarray:
        return np.concatenate([l.alphas for l in self.layers])

    def forward(self, x: np.ndarray, backend: str | None = None) -> np.ndarray:
        """Evaluate on a batch ``x`` of shape (n, input_dim)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected points of dimension {self.input_dim}, got shape {x.shape}")
        backend = backend or _kernels.backend_name()
        if backend == "numba":
            return _kernels.forward_packed(self.packed, x)
        if backend == "numpy":
            return _kernels.forward_numpy(
                [l.weight for l in self.layers],
                [l.bias for l in self.layers],
                [l.alphas for l in self.layers],
                x,
            )
        raise ValueError(f"unknown backend {backend!r}")

    def __call__(self, x) -> np.ndarray:
        """Evaluate on one point (shape (d,)) or a batch (shape (n, d))."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 0 and self.input_dim == 1:
            return self.forward(arr.reshape(1, 1))[0]
        if arr.ndim == 1:
            if self.input_dim == 1 and arr.shape[0] != 1:
                return self.forward(arr.reshape(-1, 1))
            return self.forward(arr.reshape(1, -1))[0]
        return self.forward(arr)

    def trace(self, x: np.ndarray) -> list[np.ndarray]:
        """Pre-activations of every layer for a batch of points."""
        h = np.asarray(x, dtype=np.float64)
        out = []
        for lay in self.layers:
            z = lay.pre_activation(h)
            out.append(z)
            h = np.where(z < 0.0, lay.alphas * z, z)
        return out

    def equals(self, other: "Network") -> bool:
        return (
            self.input_dim == other.input_dim
            and self.depth == other.depth
            and all(a.equals(b) for a, b in zip(self.layers, other.layers))
        )


def network(layers: Iterable[Layer], input_dim: int | None = None) -> Network:
    layers = tuple(layers)
    if input_dim is None:
        input_dim = layers[0].d_in
    return Network(layers, input_dim)


def eval_network(net: Network, x: Sequence[float]) -> list[float]:
    """Evaluate ``net`` at a single point given as a list of reals."""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {arr.shape[0]}")
    return net.forward(arr.reshape(1, -1))[0].tolist()


def identity_network(d: int) -> Network:
    return network([layer(np.eye(d), np.zeros(d), 1.0)])


def affine_network(weight, bias=None) -> Network:
    """A single layer with identity activations, i.e. a plain affine map."""
    return network([layer(weight, bias, 1.0)])


def compose(first: Network, second: Network) -> Network:
    """Network for ``second(first(x))``; the layer lists are concatenated."""
    if first.output_dim != second.input_dim:
        raise ValueError(
            f"cannot compose: first outputs {first.output_dim}, second expects {second.input_dim}"
        )
    return Network(first.layers + second.layers, first.input_dim)


def compose_all(*nets: Network) -> Network:
    out = nets[0]
    for n in nets[1:]:
        out = compose(out, n)
    return out


def _block_diag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _pad_front(net: Network, depth: int) -> list[Layer]:
    """Prepend identity layers so that ``net`` reaches the requested depth.

    Padding goes in front so the carried values are the raw inputs; in every
    construction of this package those are nonnegative, which keeps the
    identity units harmless when they are later turned into leaky units.
    """
    d = net.input_dim
    pad = [layer(np.eye(d), np.zeros(d), 1.0) for _ in range(depth - net.depth)]
    return pad + list(net.layers)


def parallel(nets: Sequence[Network]) -> Network:
    """Block-diagonal stack: input is the concatenation of the nets' inputs."""
    if not nets:
        raise ValueError("need at least one network")
    depth = max(n.depth for n in nets)
    padded = [_pad_front(n, depth) for n in nets]
    layers = []
    for i in range(depth):
        parts = [p[i] for p in padded]
        layers.append(
            Layer(
                _block_diag([l.weight for l in parts]),
                np.concatenate([l.bias for l in parts]),
                np.concatenate([l.alphas for l in parts]),
            )
        )
    return Network(tuple(layers), sum(n.input_dim for n in nets))


def fan_parallel(chains: Sequence[Network]) -> Network:
    """Run width-1 scalar chains side by side on one shared scalar input."""
    if not chains:
        raise ValueError("fan_parallel needs at least one chain")
    for c in chains:
        if c.input_dim != 1 or any(l.d_out != 1 for l in c.layers):
            raise ValueError("fan_parallel expects width-1 scalar chains")
    stacked = parallel(chains)
    first = stacked.layers[0]
    fan = Layer(first.weight.sum(axis=1, keepdims=True), first.bias, first.alphas)
    return Network((fan,) + stacked.layers[1:], 1)


def width_stats(net: Network) -> NetworkStats:
    dims = net.dims
    if net.depth == 1:
        return NetworkStats(max(dims[0], dims[1]), min(dims[0], dims[1]), 1)
    hidden = dims[1:-1]
    return NetworkStats(max(hidden), min(hidden), net.depth)


def substitute_identity(net: Network, alpha: float = 1.0 - 2.0**-20) -> Network:
    """Replace every identity unit (slope 1) with a leaky unit of slope ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    layers = []
    for lay in net.layers:
        a = np.where(lay.alphas == 1.0, alpha, lay.alphas)
        layers.append(Layer(lay.weight, lay.bias, a))
    return Network(tuple(layers), net.input_dim)


def map_alphas(net: Network, fn) -> Network:
    """Apply ``fn(layer_index, alphas) -> alphas`` to every layer."""
    layers = [Layer(l.weight, l.bias, fn(i, l.alphas)) for i, l in enumerate(net.layers)]
    return Network(tuple(layers), net.input_dim)


# ---------------------------------------------------------------------------
# serialization


class NetworkFormatError(ValueError):
    """Raised for malformed network documents."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def serialize(net: Network) -> str:
    """JSON text with every number written to 17 significant digits."""
    parts = []
    for lay in net.layers:
        rows = ",".join("[" + ",".join(_fmt(v) for v in row) + "]" for row in lay.weight)
        bias = ",".join(_fmt(v) for v in lay.bias)
        alphas = ",".join(_fmt(v) for v in lay.alphas)
        parts.append('{"weight":[' + rows + '],"bias":[' + bias + '],"alphas":[' + alphas + "]}")
    return '{"input_dim":' + str(net.input_dim) + ',"layers":[\n' + ",\n".join(parts) + "\n]}\n"


def from_dict(doc) -> Network:
    if not isinstance(doc, dict) or "input_dim" not in doc or "layers" not in doc:
        raise NetworkFormatError("document must be an object with 'input_dim' and 'layers'")
    if not isinstance(doc["layers"], list) or not doc["layers"]:
        raise NetworkFormatError("'layers' must be a nonempty list")
    layers = []
    for i, ld in enumerate(doc["layers"]):
        try:
            w = np.array(ld["weight"], dtype=float)
            b = np.array(ld["bias"], dtype=float)
            a = np.array(ld["alphas"], dtype=float)
            layers.append(Layer(w, b, a))
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {i}: {exc}") from exc
    try:
        return Network(tuple(layers), int(doc["input_dim"]))
    except (TypeError, ValueError) as exc:
        raise NetworkFormatError(str(exc)) from exc


def deserialize(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(
            f"parse error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}"
        ) from exc
    return from_dict(doc)
