"""Window-to-token-sequence frontend: patching, projection, class token, positions.

A preprocessed window (sensors x samples x channels) becomes a sequence of
flattened patches in one of two layouts:

* temporal: one patch per sensor, covering that sensor's whole window, so
  the sequence has 12 tokens carrying purely temporal content;
* featural: one patch per 12-sample time slab across all 12 sensors, mixing
  spatial and temporal content, with floor(W/12) tokens.

Windows whose sample count is not a multiple of 12 are truncated at the tail
(396/300/192 usable samples for the 200/150/100 ms windows); both layouts
consume exactly the same truncated samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .preprocess import N_SENSORS
from .tensor import Tensor, concat, default_dtype, matmul

__all__ = ["PatchScheme", "EmbeddingParams", "make_patches", "embed", "init_embedding"]

N_CHANNELS = 3
PATCH_KINDS = ("temporal", "featural")


@dataclass(frozen=True)
class PatchScheme:
    """Geometry of one patch layout for a given window length."""

    kind: str
    p1: int
    p2: int
    n_patches: int
    patch_dim: int
    window: int   # samples offered (W)
    usable: int   # samples consumed (largest multiple of 12 <= W)

    @classmethod
    def make(cls, kind: str, window_samples: int) -> "PatchScheme":
        if window_samples < N_SENSORS:
            raise ValueError(f"window of {window_samples} samples is shorter than "
                             f"{N_SENSORS} (one patch row)")
        usable = N_SENSORS * (window_samples // N_SENSORS)
        if kind == "temporal":
            return cls(kind, 1, usable, N_SENSORS, usable * N_CHANNELS,
                       window_samples, usable)
        if kind == "featural":
            n = window_samples // N_SENSORS
            return cls(kind, N_SENSORS, N_SENSORS, n,
                       N_SENSORS * N_SENSORS * N_CHANNELS, window_samples, usable)
        raise ValueError(f"unknown patch kind {kind!r}; choose from {PATCH_KINDS}")


def make_patches(x: np.ndarray, scheme: PatchScheme) -> np.ndarray:
    """Flatten a window (or batch of windows) into an N x patch_dim matrix.

    Flattening order inside a patch is sensor-major, then time, then channel;
    any fixed order would do, this one is the documented contract.
    """
    x = np.asarray(x)
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    b, s, w, c = x.shape
    if s != N_SENSORS or c != N_CHANNELS:
        raise ValueError(f"expected (..., {N_SENSORS}, W, {N_CHANNELS}) windows, got {x.shape}")
    if w < N_SENSORS:
        raise ValueError(f"window has {w} samples, need at least {N_SENSORS}")
    x = x[:, :, :scheme.usable, :]
    if scheme.kind == "temporal":
        out = x.reshape(b, s, scheme.usable * c)
    else:
        n = scheme.usable // N_SENSORS
        out = (x.reshape(b, s, n, N_SENSORS, c)
                .transpose(0, 2, 1, 3, 4)
                .reshape(b, n, scheme.patch_dim))
    out = np.ascontiguousarray(out)
    return out if batched else out[0]


@dataclass
class EmbeddingParams:
    """Trainable frontend: projection, class token, positional table."""

    proj: Tensor        # patch_dim x D
    bias: Tensor        # D
    class_token: Tensor  # D
    pos: Tensor         # (N+1) x D

    @property
    def dim(self) -> int:
        return self.proj.shape[1]


def init_embedding(scheme: PatchScheme, dim: int, rng: np.random.Generator) -> EmbeddingParams:
    dt = default_dtype()
    bound = 1.0 / np.sqrt(scheme.patch_dim)
    return EmbeddingParams(
        proj=Tensor(rng.uniform(-bound, bound, (scheme.patch_dim, dim)).astype(dt),
                    requires_grad=True),
        bias=Tensor(rng.uniform(-bound, bound, dim).astype(dt), requires_grad=True),
        class_token=Tensor((0.02 * rng.standard_normal(dim)).astype(dt), requires_grad=True),
        pos=Tensor((0.02 * rng.standard_normal((scheme.n_patches + 1, dim))).astype(dt),
                   requires_grad=True),
    )


def embed(patches, params: EmbeddingParams) -> Tensor:
    """Project patches to model width, prepend the class token, add positions.

    Row 0 of the output is class_token + pos[0]; row i >= 1 is
    patches[i-1] @ proj + bias + pos[i].  Accepts N x patch_dim or batched
    B x N x patch_dim input.
    """
    t = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches, dtype=params.proj.dtype))
    squeeze = t.ndim == 2
    if squeeze:
        t = t.reshape(1, *t.shape)
    n_tokens = params.pos.shape[0]
    if t.shape[1] != n_tokens - 1 or t.shape[2] != params.proj.shape[0]:
        raise ValueError(f"patches {t.shape} do not match projection "
                         f"{params.proj.shape} with {n_tokens - 1} positions")
    projected = matmul(t, params.proj) + params.bias              # B x N x D
    anchor = Tensor(np.zeros((t.shape[0], 1, params.dim), dtype=params.proj.dtype))
    cls_row = anchor + params.class_token.reshape(1, 1, params.dim)
    z = concat([cls_row, projected], axis=1) + params.pos
    return z.reshape(z.shape[1], z.shape[2]) if squeeze else z
