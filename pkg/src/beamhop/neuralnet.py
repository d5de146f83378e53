"""Small dense networks with hand-written backprop, Adam and checkpoints.

Everything is float64. Inputs may be a single vector or a (batch, features)
matrix; weights are stored as (fan_in, fan_out).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "identity", "softmax")
CHECKPOINT_VERSION = 1


class DimensionError(ValueError):
    pass


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"
    groups: tuple[int, ...] | None = None  # softmax group widths

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "softmax":
            if self.groups is None:
                self.groups = (self.W.shape[1],)
            if sum(self.groups) != self.W.shape[1]:
                raise DimensionError("softmax groups must cover the layer width")


@dataclass
class DenseNet:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self) -> None:
        for a, b in zip(self.layers, self.layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise DimensionError(f"layer widths disagree: {a.W.shape} -> {b.W.shape}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def orthogonal_init(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Matrix with orthonormal rows (rows <= cols) or columns (rows > cols), times ``gain``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    if rows < cols:
        q = q.T
    return gain * q


def build_mlp(sizes: list[int], rng: np.random.Generator, hidden_act: str = "tanh",
              out_act: str = "identity", hidden_gain: float = np.sqrt(2.0), out_gain: float = 1.0,
              groups: tuple[int, ...] | None = None) -> DenseNet:
    layers = []
    for idx, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        last = idx == len(sizes) - 2
        W = orthogonal_init(fan_in, fan_out, out_gain if last else hidden_gain, rng)
        layers.append(Layer(W, np.zeros(fan_out), out_act if last else hidden_act,
                            groups if last and out_act == "softmax" else None))
    return DenseNet(layers)


def _softmax_groups(z: np.ndarray, groups: tuple[int, ...]) -> np.ndarray:
    out = np.empty_like(z)
    start = 0
    for g in groups:
        seg = z[..., start:start + g]
        e = np.exp(seg - seg.max(axis=-1, keepdims=True))
        out[..., start:start + g] = e / e.sum(axis=-1, keepdims=True)
        start += g
    return out


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Apply the network; the cache holds each layer's input and output."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.in_dim:
        raise DimensionError(f"expected input width {net.in_dim}, got {x.shape[-1]}")
    cache = []
    h = x
    for layer in net.layers:
        z = h @ layer.W + layer.b
        if layer.activation == "tanh":
            a = np.tanh(z)
        elif layer.activation == "softmax":
            a = _softmax_groups(z, layer.groups)
        else:
            a = z
        cache.append((h, a))
        h = a
    return h, cache


def backward(net: DenseNet, cache: list, output_grad: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode gradients for a scalar loss whose gradient w.r.t. the output is ``output_grad``.

    Returns parameter gradients in ``net.params()`` order and the input gradient.
    """
    g = np.asarray(output_grad, dtype=float)
    grads: list[np.ndarray] = []
    for layer, (h_in, a) in zip(reversed(net.layers), reversed(cache)):
        if layer.activation == "tanh":
            gz = g * (1.0 - a * a)
        elif layer.activation == "softmax":
            gz = np.empty_like(g)
            start = 0
            for w in layer.groups:
                sl = slice(start, start + w)
                s = a[..., sl]
                gz[..., sl] = s * (g[..., sl] - (g[..., sl] * s).sum(axis=-1, keepdims=True))
                start += w
        else:
            gz = g
        if gz.ndim == 1:
            gW = np.outer(h_in, gz)
            gb = gz.copy()
        else:
            gW = h_in.T @ gz
            gb = gz.sum(axis=0)
        grads.append(gb)
        grads.append(gW)
        g = gz @ layer.W.T
    grads.reverse()
    return grads, g


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], st: AdamState) -> list[np.ndarray]:
    """Bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(st.m):
        raise DimensionError("params, grads and optimizer state disagree")
    st.step += 1
    c1 = 1.0 - st.beta1**st.step
    c2 = 1.0 - st.beta2**st.step
    for p, g, m, v in zip(params, grads, st.m, st.v):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * g * g
        p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
    return params


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# ---------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is a numpy .npz archive. Every array is stored little-endian
# ("<f8" for parameters and moments, "<i8" for counters); the "__meta__" entry
# is a UTF-8 JSON document with the format version, layer shapes, activations
# and any caller metadata.

def net_to_arrays(prefix: str, net: DenseNet) -> tuple[dict, list]:
    arrays, spec = {}, []
    for idx, layer in enumerate(net.layers):
        arrays[f"{prefix}.{idx}.W"] = layer.W
        arrays[f"{prefix}.{idx}.b"] = layer.b
        spec.append({"shape": list(layer.W.shape), "activation": layer.activation,
                     "groups": list(layer.groups) if layer.groups else None})
    return arrays, spec


def net_from_arrays(prefix: str, arrays: dict, spec: list) -> DenseNet:
    layers = []
    for idx, ls in enumerate(spec):
        W = np.array(arrays[f"{prefix}.{idx}.W"], dtype=float)
        if list(W.shape) != ls["shape"]:
            raise DimensionError(f"{prefix}.{idx}: stored shape {W.shape} != {ls['shape']}")
        layers.append(Layer(W, np.array(arrays[f"{prefix}.{idx}.b"], dtype=float), ls["activation"],
                            tuple(ls["groups"]) if ls["groups"] else None))
    return DenseNet(layers)


def adam_to_arrays(prefix: str, st: AdamState) -> dict:
    out = {f"{prefix}.step": np.array(st.step, dtype="<i8"),
           f"{prefix}.hyper": np.array([st.lr, st.beta1, st.beta2, st.eps], dtype="<f8")}
    for i, (m, v) in enumerate(zip(st.m, st.v)):
        out[f"{prefix}.m.{i}"] = m
        out[f"{prefix}.v.{i}"] = v
    return out


def adam_from_arrays(prefix: str, arrays: dict, n: int) -> AdamState:
    lr, b1, b2, eps = (float(x) for x in arrays[f"{prefix}.hyper"])
    return AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps,
                     m=[np.array(arrays[f"{prefix}.m.{i}"]) for i in range(n)],
                     v=[np.array(arrays[f"{prefix}.v.{i}"]) for i in range(n)],
                     step=int(arrays[f"{prefix}.step"]))


def save_checkpoint(path: str | Path, arrays: dict, meta: dict) -> None:
    payload = {}
    for k, v in arrays.items():
        v = np.asarray(v)
        payload[k] = v.astype("<i8" if v.dtype.kind in "iu" else "<f8")
    meta = dict(meta, version=CHECKPOINT_VERSION)
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    return arrays, meta
