"""Transformer building blocks: attention, encoder/decoder blocks, positions.

All blocks are parameter-owning callables over 2D ``Tensor`` inputs of shape
(sequence, model_dim). Parameters are exposed as flat name -> Tensor dicts so
optimizers and checkpoints can address them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, UsageError
from .tensor import (
    Tensor,
    add,
    dropout,
    layernorm,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    transpose,
)


@dataclass(frozen=True)
class BlockConfig:
    """Shared shape hyperparameters for one attention/FFN block."""

    model_dim: int
    num_heads: int
    ffn_dim: int
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.model_dim <= 0 or self.num_heads <= 0 or self.ffn_dim <= 0:
            raise ConfigError(f"block dimensions must be positive, got {self}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    """Affine map x @ W + b with Xavier-uniform W and zero b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = Tensor(xavier_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def named_params(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class LayerNorm:
    """Learnable gain/bias normalization over the last axis."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layernorm(x, self.gain, self.bias, eps=self.eps)

    def named_params(self) -> dict[str, Tensor]:
        return {"gain": self.gain, "bias": self.bias}


def _prefixed(prefix: str, modules: dict[str, object]) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for name, module in modules.items():
        for key, tensor in module.named_params().items():
            out[f"{prefix}{name}.{key}"] = tensor
    return out


class MultiHeadAttention:
    """Scaled dot-product attention with per-head splits of one projection."""

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        d = config.model_dim
        self.config = config
        self.q_proj = Linear(d, d, rng)
        self.k_proj = Linear(d, d, rng)
        self.v_proj = Linear(d, d, rng)
        self.out_proj = Linear(d, d, rng)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        d, h = self.config.model_dim, self.config.num_heads
        dh = d // h
        if q.shape[-1] != d or k.shape[-1] != d or v.shape[-1] != d:
            raise DimensionError(
                f"attention inputs must have model_dim {d}, got "
                f"{q.shape}, {k.shape}, {v.shape}"
            )
        if q.ndim not in (2, 3) or k.ndim != q.ndim or v.ndim != q.ndim:
            raise DimensionError(
                f"attention inputs must share rank 2 or 3, got "
                f"{q.shape}, {k.shape}, {v.shape}"
            )
        batched = q.ndim == 3
        if not batched:
            q = reshape(q, (1,) + q.shape)
            k = reshape(k, (1,) + k.shape)
            v = reshape(v, (1,) + v.shape)
        b, l_q, l_k = q.shape[0], q.shape[1], k.shape[1]
        if l_k == 0:
            raise UsageError("attention over an empty key/value sequence")
        if v.shape[1] != l_k or k.shape[0] != b or v.shape[0] != b:
            raise DimensionError(
                f"key/value shapes disagree: {k.shape} vs {v.shape} for batch {b}"
            )

        def split(x, length):
            return transpose(reshape(x, (b, length, h, dh)), (0, 2, 1, 3))

        qh = split(self.q_proj(q), l_q)
        kh = split(self.k_proj(k), l_k)
        vh = split(self.v_proj(v), l_k)
        scores = mul(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        weights = softmax(scores, axis=-1)
        context = matmul(weights, vh)
        merged = reshape(transpose(context, (0, 2, 1, 3)), (b, l_q, d))
        out = self.out_proj(merged)
        return out if batched else reshape(out, (l_q, d))

    def named_params(self) -> dict[str, Tensor]:
        return _prefixed("", {
            "q": self.q_proj, "k": self.k_proj,
            "v": self.v_proj, "out": self.out_proj,
        })


class FeedForward:
    """Two-layer position-wise MLP with ReLU."""

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        self.inner = Linear(config.model_dim, config.ffn_dim, rng)
        self.outer = Linear(config.ffn_dim, config.model_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(relu(self.inner(x)))

    def named_params(self) -> dict[str, Tensor]:
        return _prefixed("", {"inner": self.inner, "outer": self.outer})


def _sublayer(x: Tensor, out: Tensor, norm: LayerNorm, p: float,
              train: bool, rng) -> Tensor:
    if train and p > 0.0:
        out = dropout(out, p, rng)
    return norm(add(x, out))


class EncoderBlock:
    """Self-attention then FFN, each with residual + post-layernorm."""

    def __init__(self, config: BlockConfig, rng: np.random.Generator):
        self.config = config
        self.attn = MultiHeadAttention(config, rng)
        self.ffn = FeedForward(config, rng)
        self.norm_attn = LayerNorm(config.model_dim)
        self.norm_ffn = LayerNorm(config.model_dim)

    def __call__(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        p = self.config.dropout_p
        x = _sublayer(x, self.attn(x, x, x), self.norm_attn, p, train, rng)
        x = _sublayer(x, self.ffn(x), self.norm_ffn, p, train, rng)
        return x

    def named_params(self) -> dict[str, Tensor]:
        return _prefixed("", {
            "attn": self.attn, "ffn": self.ffn,
            "norm_attn": self.norm_attn, "norm_ffn": self.norm_ffn,
        })


class DecoderBlock:
    """Query self-attention, cross-attention over segment memory, then over
    video memory, then FFN; residual + post-layernorm after each stage.

    ``use_segment_memory=False`` builds a block without the segment
    cross-attention stage (and without its parameters), for ablations.
    """

    def __init__(self, config: BlockConfig, rng: np.random.Generator,
                 use_segment_memory: bool = True):
        self.config = config
        self.use_segment_memory = use_segment_memory
        self.self_attn = MultiHeadAttention(config, rng)
        self.cross_seg = MultiHeadAttention(config, rng) if use_segment_memory else None
        self.cross_vid = MultiHeadAttention(config, rng)
        self.ffn = FeedForward(config, rng)
        self.norm_self = LayerNorm(config.model_dim)
        self.norm_seg = LayerNorm(config.model_dim) if use_segment_memory else None
        self.norm_vid = LayerNorm(config.model_dim)
        self.norm_ffn = LayerNorm(config.model_dim)

    def __call__(self, queries: Tensor, seg_mem, vid_mem: Tensor,
                 train: bool = False, rng=None) -> Tensor:
        if vid_mem.shape[0] == 0:
            raise UsageError("decoder block requires a nonempty video memory")
        if self.use_segment_memory:
            if seg_mem is None:
                raise UsageError("this decoder block requires a segment memory")
            if seg_mem.shape[0] != vid_mem.shape[0]:
                raise DimensionError(
                    f"segment and video memories must have equal length, got "
                    f"{seg_mem.shape[0]} vs {vid_mem.shape[0]}"
                )
        p = self.config.dropout_p
        x = _sublayer(queries, self.self_attn(queries, queries, queries),
                      self.norm_self, p, train, rng)
        if self.use_segment_memory:
            x = _sublayer(x, self.cross_seg(x, seg_mem, seg_mem),
                          self.norm_seg, p, train, rng)
        x = _sublayer(x, self.cross_vid(x, vid_mem, vid_mem),
                      self.norm_vid, p, train, rng)
        x = _sublayer(x, self.ffn(x), self.norm_ffn, p, train, rng)
        return x

    def named_params(self) -> dict[str, Tensor]:
        modules = {"self_attn": self.self_attn, "cross_vid": self.cross_vid,
                   "ffn": self.ffn, "norm_self": self.norm_self,
                   "norm_vid": self.norm_vid, "norm_ffn": self.norm_ffn}
        if self.use_segment_memory:
            modules["cross_seg"] = self.cross_seg
            modules["norm_seg"] = self.norm_seg
        return _prefixed("", modules)


def sinusoidal_pe(length: int, dim: int) -> np.ndarray:
    """Fixed sine/cosine position table of shape (length, dim).

    pe[t, 2i] = sin(t / 10000^(2i/dim)), pe[t, 2i+1] = cos of the same angle,
    with 0-based positions.
    """
    if dim % 2 != 0:
        raise ConfigError(f"positional encoding dim must be even, got {dim}")
    if length < 0:
        raise UsageError(f"positional encoding length must be >= 0, got {length}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    freqs = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)
    angles = positions * freqs[None, :]
    pe = np.empty((length, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe
