"""Small feed-forward networks with hand-written backpropagation.

Parameters live in a :class:`LayerKeyedVector`: one flat float64 buffer per
logical layer, weights first and bias after.  Every other part of the
simulator (client training, LUAR aggregation, accounting) works on that
layer-keyed representation, so a layer here is the unit that gets scored,
recycled and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class LayerSpec:
    """Shape metadata for one logical layer.

    ``dense`` layers map ``fan_in -> fan_out``.  ``conv2d`` layers take an
    input of shape ``in_shape = (C, H, W)`` and apply ``fan_out`` filters of
    size ``kernel`` with stride 1 and no padding; the output is flattened in
    (channel, row, col) order before the next layer.
    """

    layer_id: int
    kind: str
    fan_in: int
    fan_out: int
    kernel: tuple[int, int] = (1, 1)
    in_shape: tuple[int, int, int] | None = None
    bias: bool = True
    activation: str = "relu"

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.fan_in, self.fan_out)
        c = self.in_shape[0]
        return (self.fan_out, c, self.kernel[0], self.kernel[1])

    @property
    def out_spatial(self) -> tuple[int, int]:
        _, h, w = self.in_shape
        return (h - self.kernel[0] + 1, w - self.kernel[1] + 1)

    @property
    def output_dim(self) -> int:
        if self.kind == "dense":
            return self.fan_out
        oh, ow = self.out_spatial
        return self.fan_out * oh * ow

    @property
    def n_weights(self) -> int:
        return int(np.prod(self.weight_shape))

    @property
    def param_count(self) -> int:
        return self.n_weights + (self.fan_out if self.bias else 0)


def dense(layer_id: int, fan_in: int, fan_out: int, *, bias: bool = True,
          activation: str = "relu") -> LayerSpec:
    return LayerSpec(layer_id, "dense", fan_in, fan_out, bias=bias, activation=activation)


def conv2d(layer_id: int, in_shape: tuple[int, int, int], out_channels: int,
           kernel: tuple[int, int], *, bias: bool = True, activation: str = "relu") -> LayerSpec:
    c, h, w = in_shape
    if kernel[0] > h or kernel[1] > w:
        raise ConfigurationError(f"kernel {kernel} larger than input {in_shape}")
    return LayerSpec(layer_id, "conv2d", c * h * w, out_channels, kernel=tuple(kernel),
                     in_shape=tuple(in_shape), bias=bias, activation=activation)


@dataclass
class LayerKeyedVector:
    """Per-layer flat buffers addressed by layer id."""

    entries: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, other: LayerKeyedVector) -> LayerKeyedVector:
        return cls({l: np.zeros_like(b) for l, b in other.entries.items()})

    @classmethod
    def zeros(cls, specs: Sequence[LayerSpec]) -> LayerKeyedVector:
        return cls({s.layer_id: np.zeros(s.param_count) for s in specs})

    def __getitem__(self, layer_id: int) -> np.ndarray:
        return self.entries[layer_id]

    def __setitem__(self, layer_id: int, buf: np.ndarray) -> None:
        self.entries[layer_id] = buf

    def __contains__(self, layer_id: int) -> bool:
        return layer_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def layer_ids(self) -> list[int]:
        return sorted(self.entries)

    @property
    def total_dim(self) -> int:
        return sum(b.size for b in self.entries.values())

    def copy(self) -> LayerKeyedVector:
        return LayerKeyedVector({l: b.copy() for l, b in self.entries.items()})

    def restrict(self, keep: Iterable[int]) -> LayerKeyedVector:
        return LayerKeyedVector({l: self.entries[l] for l in sorted(keep)})

    def same_structure(self, other: LayerKeyedVector) -> bool:
        if self.layer_ids != other.layer_ids:
            return False
        return all(self.entries[l].shape == other.entries[l].shape for l in self.entries)

    def __add__(self, other: LayerKeyedVector) -> LayerKeyedVector:
        return LayerKeyedVector({l: self.entries[l] + other.entries[l] for l in self.layer_ids})

    def __sub__(self, other: LayerKeyedVector) -> LayerKeyedVector:
        return LayerKeyedVector({l: self.entries[l] - other.entries[l] for l in self.layer_ids})

    def scale(self, c: float) -> LayerKeyedVector:
        return LayerKeyedVector({l: c * b for l, b in self.entries.items()})

    def flat(self) -> np.ndarray:
        if not self.entries:
            return np.zeros(0)
        return np.concatenate([self.entries[l] for l in self.layer_ids])

    def equal(self, other: LayerKeyedVector) -> bool:
        """Bitwise equality of structure and contents."""
        if not self.same_structure(other):
            return False
        return all(self.entries[l].tobytes() == other.entries[l].tobytes() for l in self.entries)


def layer_norms(v: LayerKeyedVector) -> np.ndarray:
    """Euclidean norm of every buffer, in ascending layer order."""
    return np.array([float(np.sqrt(np.dot(v[l], v[l]))) for l in v.layer_ids])


@dataclass
class ForwardCache:
    network: "Network"
    params: LayerKeyedVector
    inputs: list[np.ndarray]   # input to each layer (columns for conv layers)
    preacts: list[np.ndarray]
    logits: np.ndarray


class Network:
    """A stack of dense / conv2d layers; ReLU between layers, raw logits out."""

    def __init__(self, specs: Sequence[LayerSpec]):
        specs = list(specs)
        if not specs:
            raise ConfigurationError("network needs at least one layer")
        if [s.layer_id for s in specs] != list(range(len(specs))):
            raise ConfigurationError("layer ids must be contiguous 0..L-1")
        for prev, nxt in zip(specs, specs[1:]):
            if prev.output_dim != nxt.fan_in:
                raise ConfigurationError(
                    f"layer {nxt.layer_id} expects {nxt.fan_in} inputs, "
                    f"layer {prev.layer_id} produces {prev.output_dim}")
        self.specs = specs

    @property
    def n_layers(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].fan_in

    @property
    def n_classes(self) -> int:
        return self.specs[-1].output_dim

    @property
    def layer_sizes(self) -> list[int]:
        return [s.param_count for s in self.specs]

    @property
    def total_dim(self) -> int:
        return sum(self.layer_sizes)

    def init_params(self, rng: np.random.Generator | int) -> LayerKeyedVector:
        """Uniform He-style init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
        rng = np.random.default_rng(rng)
        params = LayerKeyedVector()
        for s in self.specs:
            fan_in = s.fan_in if s.kind == "dense" else s.in_shape[0] * s.kernel[0] * s.kernel[1]
            limit = np.sqrt(6.0 / fan_in)
            buf = np.zeros(s.param_count)
            buf[: s.n_weights] = rng.uniform(-limit, limit, size=s.n_weights)
            params[s.layer_id] = buf
        return params

    def check_params(self, params: LayerKeyedVector) -> None:
        if params.layer_ids != list(range(self.n_layers)):
            raise ConfigurationError("parameter layers do not match the network")
        for s in self.specs:
            if params[s.layer_id].shape != (s.param_count,):
                raise ConfigurationError(
                    f"layer {s.layer_id}: expected {s.param_count} params, "
                    f"got {params[s.layer_id].size}")

    def _unpack(self, spec: LayerSpec, buf: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        w = buf[: spec.n_weights].reshape(spec.weight_shape)
        b = buf[spec.n_weights:] if spec.bias else None
        return w, b

    def forward(self, params: LayerKeyedVector, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"input has shape {x.shape}, network expects (batch, {self.input_dim})")
        self.check_params(params)
        inputs, preacts = [], []
        h = x
        for i, s in enumerate(self.specs):
            w, b = self._unpack(s, params[s.layer_id])
            if s.kind == "dense":
                inputs.append(h)
                z = h @ w
                if b is not None:
                    z = z + b
            else:
                cols = _im2col(h, s)
                inputs.append(cols)
                # cols: (batch, P, C*kh*kw); w2: (C*kh*kw, out)
                z = cols @ w.reshape(s.fan_out, -1).T
                if b is not None:
                    z = z + b
                # -> (batch, out, P) flattened channel-major
                z = z.transpose(0, 2, 1).reshape(x.shape[0], -1)
            preacts.append(z)
            last = i == len(self.specs) - 1
            h = z if (last or s.activation == "none") else np.maximum(z, 0.0)
        cache = ForwardCache(self, params, inputs, preacts, h)
        return h, cache

    def backward(self, cache: ForwardCache, labels: np.ndarray) -> tuple[float, LayerKeyedVector]:
        return backward(cache, labels)

    def loss_and_grad(self, params: LayerKeyedVector, x: np.ndarray,
                      labels: np.ndarray) -> tuple[float, LayerKeyedVector]:
        _, cache = self.forward(params, x)
        return backward(cache, labels)


def forward(network: Network, params: LayerKeyedVector,
            x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    return network.forward(params, x)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    rows = np.arange(n)
    loss = float(-logp[rows, labels].sum() / n)
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / n


def backward(cache: ForwardCache, labels: np.ndarray) -> tuple[float, LayerKeyedVector]:
    net = cache.network
    loss, dz = softmax_cross_entropy(cache.logits, labels)
    grads = LayerKeyedVector()
    for i in range(net.n_layers - 1, -1, -1):
        s = net.specs[i]
        last = i == net.n_layers - 1
        if not last and s.activation != "none":
            dz = dz * (cache.preacts[i] > 0)
        w, _ = net._unpack(s, cache.params[s.layer_id])
        inp = cache.inputs[i]
        g = np.empty(s.param_count)
        if s.kind == "dense":
            g[: s.n_weights] = (inp.T @ dz).ravel()
            if s.bias:
                g[s.n_weights:] = dz.sum(axis=0)
            dh = dz @ w.T if i > 0 else None
        else:
            n = dz.shape[0]
            oh, ow = s.out_spatial
            dzc = dz.reshape(n, s.fan_out, oh * ow).transpose(0, 2, 1)  # (n, P, out)
            w2 = w.reshape(s.fan_out, -1)
            gw = np.einsum("npo,npk->ok", dzc, inp)
            g[: s.n_weights] = gw.ravel()
            if s.bias:
                g[s.n_weights:] = dzc.sum(axis=(0, 1))
            dh = _col2im(dzc @ w2, s) if i > 0 else None
        grads[s.layer_id] = g
        dz = dh
    grads.entries = dict(sorted(grads.entries.items()))
    return loss, grads


def _patch_index(spec: LayerSpec) -> np.ndarray:
    c, h, w = spec.in_shape
    kh, kw = spec.kernel
    oh, ow = spec.out_spatial
    ch = np.arange(c)[:, None, None]
    di = np.arange(kh)[None, :, None]
    dj = np.arange(kw)[None, None, :]
    offsets = (ch * h * w + di * w + dj).ravel()           # (C*kh*kw,)
    base = (np.arange(oh)[:, None] * w + np.arange(ow)[None, :]).ravel()  # (P,)
    return base[:, None] + offsets[None, :]                # (P, C*kh*kw)


def _im2col(h: np.ndarray, spec: LayerSpec) -> np.ndarray:
    return h[:, _patch_index(spec)]


def _col2im(dcols: np.ndarray, spec: LayerSpec) -> np.ndarray:
    n = dcols.shape[0]
    idx = _patch_index(spec)
    out = np.zeros((n, spec.fan_in))
    # np.add.at accumulates overlapping patches in index order
    np.add.at(out, (slice(None), idx), dcols)
    return out


def mlp_specs(sizes: Sequence[int]) -> list[LayerSpec]:
    """Dense stack for layer widths ``[in, h1, ..., out]``."""
    if len(sizes) < 2:
        raise ConfigurationError("an MLP needs at least input and output sizes")
    return [dense(i, a, b) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
