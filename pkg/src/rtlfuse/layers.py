"""Neural building blocks on the autodiff core, plus checkpoint I/O and AdamW."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import IoError


class ParamStore:
    """Named parameter registry; creation order is the rng consumption order,
    so models built in a fixed order are reproducible per seed."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, shape: tuple, init: str = "linear",
              fan_in: int | None = None) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "embedding":
            data = self.rng.normal(0.0, 0.02, size=shape)
        else:  # linear: scaled gaussian
            fin = fan_in if fan_in is not None else shape[0]
            data = self.rng.normal(0.0, 1.0 / math.sqrt(max(fin, 1)), size=shape)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def subset(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


class Linear:
    def __init__(self, store: ParamStore, prefix: str, d_in: int, d_out: int):
        self.w = store.param(f"{prefix}.w", (d_in, d_out), fan_in=d_in)
        self.b = store.param(f"{prefix}.b", (d_out,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            return ad.add(ad.matmul(x.reshape(1, -1), self.w), self.b)[0]
        return ad.add(ad.matmul(x, self.w), self.b)


class Embedding:
    def __init__(self, store: ParamStore, name: str, size: int, dim: int):
        self.table = store.param(name, (size, dim), init="embedding")

    def __call__(self, idx) -> Tensor:
        return ad.take_rows(self.table, idx)


class LayerNorm:
    def __init__(self, store: ParamStore, prefix: str, dim: int, eps: float = 1e-5):
        self.g = store.param(f"{prefix}.g", (dim,), init="ones")
        self.b = store.param(f"{prefix}.b", (dim,), init="zeros")
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered * ad.power(var + self.eps, -0.5)
        return normed * self.g + self.b


class MultiHeadAttention:
    """Scaled dot-product attention with optional per-head additive bias and
    key validity mask (invalid keys get -inf logits, hence exactly zero
    weight)."""

    def __init__(self, store: ParamStore, prefix: str, d_model: int, heads: int):
        if d_model % heads:
            raise ValueError("d_model must be divisible by heads")
        self.h = heads
        self.dk = d_model // heads
        self.wq = Linear(store, f"{prefix}.q", d_model, d_model)
        self.wk = Linear(store, f"{prefix}.k", d_model, d_model)
        self.wv = Linear(store, f"{prefix}.v", d_model, d_model)
        self.wo = Linear(store, f"{prefix}.o", d_model, d_model)

    def __call__(self, q_in: Tensor, kv_in: Tensor,
                 bias: Tensor | None = None,
                 key_valid: np.ndarray | None = None) -> Tensor:
        lq, d = q_in.shape
        lk = kv_in.shape[0]
        q = self.wq(q_in).reshape(lq, self.h, self.dk).transpose(1, 0, 2)
        k = self.wk(kv_in).reshape(lk, self.h, self.dk).transpose(1, 0, 2)
        v = self.wv(kv_in).reshape(lk, self.h, self.dk).transpose(1, 0, 2)
        scores = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.dk))
        if bias is not None:
            scores = scores + bias
        if key_valid is not None:
            mask = np.where(np.asarray(key_valid, dtype=bool), 0.0, -np.inf)
            scores = scores + Tensor(mask[None, None, :])
        attn = ad.softmax(scores, axis=-1)
        out = ad.matmul(attn, v).transpose(1, 0, 2).reshape(lq, d)
        return self.wo(out)


class FeedForward:
    def __init__(self, store: ParamStore, prefix: str, d_model: int, d_ff: int):
        self.w1 = Linear(store, f"{prefix}.w1", d_model, d_ff)
        self.w2 = Linear(store, f"{prefix}.w2", d_ff, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(ad.gelu(self.w1(x)))


class TransformerLayer:
    """Pre-norm block: self-attention, optional cross-attention, feed-forward."""

    def __init__(self, store: ParamStore, prefix: str, d_model: int, heads: int,
                 d_ff: int, cross: bool = False):
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", d_model)
        self.attn = MultiHeadAttention(store, f"{prefix}.attn", d_model, heads)
        self.cross = None
        if cross:
            self.lnc = LayerNorm(store, f"{prefix}.lnc", d_model)
            self.cross = MultiHeadAttention(store, f"{prefix}.xattn", d_model, heads)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", d_model)
        self.ffn = FeedForward(store, f"{prefix}.ffn", d_model, d_ff)

    def __call__(self, x: Tensor, self_bias=None, self_valid=None,
                 cross_kv: Tensor | None = None, cross_valid=None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, bias=self_bias, key_valid=self_valid)
        if self.cross is not None and cross_kv is not None:
            x = x + self.cross(self.lnc(x), cross_kv, key_valid=cross_valid)
        x = x + self.ffn(self.ln2(x))
        return x


class Mlp:
    """Plain perceptron stack with GELU between layers."""

    def __init__(self, store: ParamStore, prefix: str, dims: list[int]):
        self.layers = [
            Linear(store, f"{prefix}.l{i}", dims[i], dims[i + 1])
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.gelu(x)
        return x


# --- checkpoints -----------------------------------------------------------------

def save_checkpoint(params: dict[str, Tensor], path_prefix: str) -> dict:
    """Flat name -> row-major float32 blob with a JSON manifest."""
    names = sorted(params)
    blob = bytearray()
    entries = []
    for name in names:
        arr = np.ascontiguousarray(params[name].data, dtype=np.float32)
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": len(blob),
            "nbytes": arr.nbytes,
        })
        blob.extend(arr.tobytes())
    digest = hashlib.sha256(bytes(blob)).hexdigest()
    manifest = {"tensors": entries, "blob_sha256": digest}
    with open(f"{path_prefix}.bin", "wb") as fh:
        fh.write(bytes(blob))
    with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_checkpoint(path_prefix: str) -> dict[str, np.ndarray]:
    try:
        with open(f"{path_prefix}.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(f"{path_prefix}.bin", "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise IoError(f"checkpoint blob does not match manifest at {path_prefix}")
    out = {}
    for e in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype=np.float32, count=e["nbytes"] // 4,
                            offset=e["offset"]).reshape(e["shape"])
        out[e["name"]] = arr.astype(np.float64)
    return out


def assign_checkpoint(params: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    missing = set(params) ^ set(loaded)
    if missing:
        raise IoError(f"checkpoint/model parameter mismatch: {sorted(missing)[:5]}")
    for name, tensor in params.items():
        if tuple(tensor.data.shape) != tuple(loaded[name].shape):
            raise IoError(f"shape mismatch for {name}")
        tensor.data = loaded[name].astype(np.float64)


def params_checksum(params: dict[str, Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


# --- optimizer ---------------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in self.params.items()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            v = self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - lr * (update + self.wd * p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
