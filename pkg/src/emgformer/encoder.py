"""Pre-norm transformer encoder stack.

Each layer applies multi-head self-attention and a two-layer MLP, both fed
by layer normalization and wrapped in residual additions:

    z' = msa(ln1(z)) + z
    z  = mlp(ln2(z')) + z'

The packed query/key/value projection is a single bias-free D x 3D matrix;
each head reads its own d_h = D / h slice.  The attention output projection
and both MLP layers carry biases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .tensor import Tensor, default_dtype, gelu, layer_norm, matmul, softmax_lastdim

__all__ = [
    "EncoderLayerParams",
    "init_encoder_layer",
    "self_attention",
    "attention_probs",
    "msa",
    "mlp",
    "encoder_forward",
]


@dataclass
class EncoderLayerParams:
    """Weights of one encoder layer."""

    ln1_scale: Tensor
    ln1_shift: Tensor
    w_qkv: Tensor       # D x 3D, no bias
    w_proj: Tensor      # D x D
    b_proj: Tensor      # D
    ln2_scale: Tensor
    ln2_shift: Tensor
    fc1_w: Tensor       # D x MLP
    fc1_b: Tensor       # MLP
    fc2_w: Tensor       # MLP x D
    fc2_b: Tensor       # D
    heads: int

    def __post_init__(self):
        d = self.w_qkv.shape[0]
        if d % self.heads:
            raise ValueError(f"model dim {d} not divisible by {self.heads} heads")

    @property
    def dim(self) -> int:
        return self.w_qkv.shape[0]

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def init_encoder_layer(dim: int, mlp_dim: int, heads: int,
                       rng: np.random.Generator) -> EncoderLayerParams:
    dt = default_dtype()

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, shape).astype(dt), requires_grad=True)

    ones = lambda n: Tensor(np.ones(n, dtype=dt), requires_grad=True)
    zeros = lambda n: Tensor(np.zeros(n, dtype=dt), requires_grad=True)
    return EncoderLayerParams(
        ln1_scale=ones(dim), ln1_shift=zeros(dim),
        w_qkv=uniform(dim, (dim, 3 * dim)),
        w_proj=uniform(dim, (dim, dim)), b_proj=uniform(dim, dim),
        ln2_scale=ones(dim), ln2_shift=zeros(dim),
        fc1_w=uniform(dim, (dim, mlp_dim)), fc1_b=uniform(dim, mlp_dim),
        fc2_w=uniform(mlp_dim, (mlp_dim, dim)), fc2_b=uniform(mlp_dim, dim),
        heads=heads,
    )


def _swap_last(t: Tensor) -> Tensor:
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return t.transpose(*axes)


def self_attention(z: Tensor, layer: EncoderLayerParams, head: int) -> Tensor:
    """Scaled dot-product attention for one head: softmax(Q K^T / sqrt(d_h)) V."""
    if not 0 <= head < layer.heads:
        raise ValueError(f"head {head} out of range for {layer.heads} heads")
    d, dh = layer.dim, layer.head_dim
    qkv = matmul(z, layer.w_qkv)
    q = qkv[..., head * dh:(head + 1) * dh]
    k = qkv[..., d + head * dh:d + (head + 1) * dh]
    v = qkv[..., 2 * d + head * dh:2 * d + (head + 1) * dh]
    p = softmax_lastdim(matmul(q, _swap_last(k)) * (1.0 / math.sqrt(dh)))
    return matmul(p, v)


def attention_probs(z: Tensor, layer: EncoderLayerParams, head: int) -> np.ndarray:
    """The attention probability matrix P of one head (for inspection/tests)."""
    d, dh = layer.dim, layer.head_dim
    qkv = matmul(z, layer.w_qkv)
    q = qkv[..., head * dh:(head + 1) * dh]
    k = qkv[..., d + head * dh:d + (head + 1) * dh]
    return softmax_lastdim(matmul(q, _swap_last(k)) * (1.0 / math.sqrt(dh))).data


def msa(z: Tensor, layer: EncoderLayerParams) -> Tensor:
    """All heads at once: concatenated per-head attention, then projection.

    Equivalent to stacking ``self_attention`` over heads; computed batched
    for speed (one packed QKV matmul, heads as an array axis).
    """
    squeeze = z.ndim == 2
    if squeeze:
        z = z.reshape(1, *z.shape)
    b, t, d = z.shape
    h, dh = layer.heads, layer.head_dim
    qkv = matmul(z, layer.w_qkv).reshape(b, t, 3, h, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]                       # each B x h x T x d_h
    p = softmax_lastdim(matmul(q, _swap_last(k)) * (1.0 / math.sqrt(dh)))
    heads_out = matmul(p, v).transpose(0, 2, 1, 3).reshape(b, t, d)
    out = matmul(heads_out, layer.w_proj) + layer.b_proj
    return out.reshape(t, d) if squeeze else out


def mlp(z: Tensor, layer: EncoderLayerParams) -> Tensor:
    return matmul(gelu(matmul(z, layer.fc1_w) + layer.fc1_b), layer.fc2_w) + layer.fc2_b


def encoder_forward(z0: Tensor, layers: Sequence[EncoderLayerParams]) -> Tensor:
    """Run the full pre-norm stack; with zero-initialized blocks this is identity."""
    z = z0
    for layer in layers:
        z = msa(layer_norm(z, layer.ln1_scale, layer.ln1_shift), layer) + z
        z = mlp(layer_norm(z, layer.ln2_scale, layer.ln2_shift), layer) + z
    return z
