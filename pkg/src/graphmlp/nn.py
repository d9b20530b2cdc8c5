"""Layers with hand-written backward passes, the Graph-MLP model and a 2-layer GCN.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``grads`` (overwritten, not summed,
on every backward call).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from math import sqrt

import numpy as np
from scipy.special import erf as _erf

from .tensor import DTYPE, Rng, ShapeError, glorot_uniform

_INV_SQRT2 = 1.0 / sqrt(2.0)
_INV_SQRT_2PI = 1.0 / sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the erf-based normal CDF."""
    return x * 0.5 * (1.0 + _erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """Elementwise derivative ``Phi(x) + x * phi(x)``."""
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


class Linear:
    def __init__(self, fan_in: int, fan_out: int, bias: bool = True):
        self.W = np.zeros((fan_in, fan_out), dtype=DTYPE)
        self.b = np.zeros(fan_out, dtype=DTYPE) if bias else None
        self.grads: dict[str, np.ndarray] = {}
        self._x = None

    def params(self) -> dict[str, np.ndarray]:
        p = {"W": self.W}
        if self.b is not None:
            p["b"] = self.b
        return p

    def init(self, rng: Rng) -> None:
        self.W[...] = glorot_uniform(*self.W.shape, rng)
        if self.b is not None:
            self.b[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.W.shape[0]:
            raise ShapeError(f"linear layer expects {self.W.shape[0]} inputs, got {x.shape[1]}")
        self._x = x
        out = x @ self.W
        if self.b is not None:
            out += self.b
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        self.grads["W"] = self._x.T @ g
        if self.b is not None:
            self.grads["b"] = g.sum(axis=0)
        return g @ self.W.T


class GELU:
    def __init__(self):
        self._x = None

    def params(self):
        return {}

    def forward(self, x):
        self._x = x
        return gelu(x)

    def backward(self, g):
        return g * gelu_grad(self._x)


class LayerNorm:
    """Per-row standardization followed by a learned affine map."""

    def __init__(self, dim: int, eps: float = 1e-5):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.gamma = np.ones(dim, dtype=DTYPE)
        self.beta = np.zeros(dim, dtype=DTYPE)
        self.eps = eps
        self.grads: dict[str, np.ndarray] = {}

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def init(self, rng: Rng | None = None) -> None:
        self.gamma[...] = 1.0
        self.beta[...] = 0.0

    def forward(self, x):
        if x.shape[1] != self.gamma.shape[0]:
            raise ShapeError(f"layer norm expects {self.gamma.shape[0]} columns, got {x.shape[1]}")
        mu = x.mean(axis=1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=1, keepdims=True)
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = xc * self._inv_std
        return self._xhat * self.gamma + self.beta

    def backward(self, g):
        xhat = self._xhat
        self.grads["gamma"] = (g * xhat).sum(axis=0)
        self.grads["beta"] = g.sum(axis=0)
        gx = g * self.gamma
        dim = xhat.shape[1]
        return (self._inv_std / dim) * (
            dim * gx - gx.sum(axis=1, keepdims=True) - xhat * (gx * xhat).sum(axis=1, keepdims=True)
        )


class Dropout:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` in training."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.mask = None

    def params(self):
        return {}

    def forward(self, x, training: bool, rng: Rng | None):
        if not training or self.rate == 0.0:
            self.mask = None
            return x
        keep = 1.0 - self.rate
        self.mask = (rng.random(x.shape) < keep) / keep
        return x * self.mask

    def backward(self, g):
        return g if self.mask is None else g * self.mask


class _Model:
    """Shared parameter bookkeeping for both model kinds."""

    kind = ""

    def layers(self) -> dict:
        raise NotImplementedError

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers().items():
            for pname, arr in layer.params().items():
                out[f"{lname}.{pname}"] = arr
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers().items():
            for pname in layer.params():
                out[f"{lname}.{pname}"] = layer.grads[pname]
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params().items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        if set(own) != set(params):
            raise KeyError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for k, v in params.items():
            if own[k].shape != v.shape:
                raise ShapeError(f"{k}: expected {own[k].shape}, got {v.shape}")
            own[k][...] = v

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self


class GraphMlpModel(_Model):
    """Linear-GELU-LayerNorm-Dropout block feeding two linear heads.

    ``forward`` returns ``(z, y)``: ``z`` is the embedding the contrastive
    loss sees and ``y = head_y(z)`` are the class logits. The forward pass
    takes node features only; there is no adjacency argument.
    """

    kind = "graphmlp"

    def __init__(self, d: int, hidden: int, num_classes: int, dropout: float = 0.6,
                 bias: bool = True, ln_eps: float = 1e-5):
        self.dims = {"d": d, "hidden": hidden, "num_classes": num_classes}
        self.dropout_rate = dropout
        self.bias = bias
        self.lin0 = Linear(d, hidden, bias)
        self.act = GELU()
        self.norm = LayerNorm(hidden, ln_eps)
        self.drop = Dropout(dropout)
        self.head_z = Linear(hidden, hidden, bias)
        self.head_y = Linear(hidden, num_classes, bias)
        self.training = True

    def layers(self):
        return {"lin0": self.lin0, "norm": self.norm, "head_z": self.head_z, "head_y": self.head_y}

    def forward(self, x: np.ndarray, rng: Rng | None = None):
        h = self.lin0.forward(x)
        h = self.act.forward(h)
        h = self.norm.forward(h)
        h = self.drop.forward(h, self.training, rng)
        z = self.head_z.forward(h)
        y = self.head_y.forward(z)
        return z, y

    def backward(self, grad_z: np.ndarray | None, grad_y: np.ndarray | None) -> np.ndarray:
        """Backpropagate loss gradients wrt ``z`` and ``y``; returns grad wrt ``x``."""
        if grad_y is None:
            grad_y = np.zeros((self.head_z._x.shape[0], self.head_y.W.shape[1]), dtype=DTYPE)
        g = self.head_y.backward(grad_y)
        if grad_z is not None:
            g = g + grad_z
        g = self.head_z.backward(g)
        g = self.drop.backward(g)
        g = self.norm.backward(g)
        g = self.act.backward(g)
        return self.lin0.backward(g)


def _propagate(a_hat, h):
    if a_hat is None:
        return h
    return np.asarray(a_hat @ h)


class GcnModel(_Model):
    """Two graph-convolution layers: ``A (dropout(gelu(A X W1 + b1))) W2 + b2``.

    Passing ``a_hat=None`` drops the propagation step, which turns the model
    into the plain two-layer MLP with the same weights.
    """

    kind = "gcn"

    def __init__(self, d: int, hidden: int, num_classes: int, dropout: float = 0.6,
                 bias: bool = True):
        self.dims = {"d": d, "hidden": hidden, "num_classes": num_classes}
        self.dropout_rate = dropout
        self.bias = bias
        self.layer1 = Linear(d, hidden, bias)
        self.act = GELU()
        self.drop = Dropout(dropout)
        self.layer2 = Linear(hidden, num_classes, bias)
        self.training = True

    def layers(self):
        return {"layer1": self.layer1, "layer2": self.layer2}

    def forward(self, a_hat, x: np.ndarray, rng: Rng | None = None) -> np.ndarray:
        if a_hat is not None and a_hat.shape != (x.shape[0], x.shape[0]):
            raise ShapeError(f"adjacency {a_hat.shape} does not match {x.shape[0]} nodes")
        self._a_hat = a_hat
        # A (X W) + b == (A X) W + b; the right-hand grouping keeps d-wide products sparse-free
        if x.shape[1] != self.layer1.W.shape[0]:
            raise ShapeError(f"GCN expects {self.layer1.W.shape[0]} features, got {x.shape[1]}")
        self._x = x
        xw = x @ self.layer1.W
        h = _propagate(a_hat, xw)
        if self.layer1.b is not None:
            h = h + self.layer1.b
        h = self.act.forward(h)
        h = self.drop.forward(h, self.training, rng)
        h = _propagate(a_hat, h)
        return self.layer2.forward(h)

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        a = self._a_hat
        g = self.layer2.backward(grad_logits)
        g = _propagate(a, g)  # symmetric A: d(A H)/dH applied to G is A^T G = A G
        g = self.drop.backward(g)
        g = self.act.backward(g)
        if self.layer1.b is not None:
            self.layer1.grads["b"] = g.sum(axis=0)
        g_xw = _propagate(a, g)
        self.layer1.grads["W"] = self._x.T @ g_xw
        return g_xw @ self.layer1.W.T


def init_params(model: _Model, rng: Rng) -> None:
    """Glorot-uniform weights, zero biases, unit LayerNorm scale."""
    for layer in model.layers().values():
        layer.init(rng)


def build_model(kind: str, d: int, hidden: int, num_classes: int, dropout: float = 0.6,
                bias: bool = True) -> _Model:
    if kind in ("graphmlp", "mlp"):
        model = GraphMlpModel(d, hidden, num_classes, dropout, bias)
        model.kind = kind
        return model
    if kind == "gcn":
        return GcnModel(d, hidden, num_classes, dropout, bias)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# checkpoint file
#
#   magic "GMLPCKPT" | u32 version | u64 header length | header JSON (utf-8)
#   | little-endian float64 blobs in header order | sha256 of all prior bytes
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"GMLPCKPT"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    names = list(arrays)
    header = {
        "format_version": CKPT_VERSION,
        "meta": meta,
        "arrays": [{"name": k, "shape": list(arrays[k].shape)} for k in names],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<IQ", CKPT_VERSION, len(hbytes)))
    buf.write(hbytes)
    for k in names:
        buf.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(blob) < len(CKPT_MAGIC) + 12 + 32 or not blob.startswith(CKPT_MAGIC):
        raise CheckpointError("not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    off = len(CKPT_MAGIC)
    version, hlen = struct.unpack_from("<IQ", body, off)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += 12
    header = json.loads(body[off:off + hlen].decode("utf-8"))
    off += hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(DTYPE).reshape(shape)
        arrays[spec["name"]] = arr
        off += 8 * count
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint body")
    return header["meta"], arrays


def save_checkpoint(path, model: _Model, params: dict[str, np.ndarray] | None = None,
                    optimizer=None, extra: dict | None = None) -> None:
    """Write model parameters (and optionally Adam state) to ``path``."""
    params = model.named_params() if params is None else params
    meta = {
        "kind": model.kind,
        "dims": model.dims,
        "dropout": model.dropout_rate,
        "bias": model.bias,
        "params": list(params),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in params.items()}
    if optimizer is not None:
        meta["optimizer"] = optimizer.config()
        for k, (m, v) in optimizer.moments().items():
            arrays[f"adam_m/{k}"] = m
            arrays[f"adam_v/{k}"] = v
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(meta, arrays))


def load_checkpoint(path):
    """Return ``(model, meta, arrays)``; ``model`` holds the stored parameters."""
    with open(path, "rb") as fh:
        meta, arrays = decode_checkpoint(fh.read())
    dims = meta["dims"]
    model = build_model(meta["kind"], dims["d"], dims["hidden"], dims["num_classes"],
                        meta["dropout"], meta["bias"])
    model.load_params({k: arrays[f"param/{k}"] for k in meta["params"]})
    return model, meta, arrays
