"""Model assembly: single-path and dual-path classifiers over the encoder.

A model owns one or two encoder paths (temporal and/or featural patching).
Every path ends in its own head (layer norm + linear) applied to the final
class-token state; dual-path models additionally sum the two class-token
states and feed a third fusion head, whose logits are the reported output.
Training uses the sum of the available heads' cross-entropies, so gradients
reach both paths directly as well as through the fusion head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .embedding import EmbeddingParams, PatchScheme, embed, init_embedding, make_patches
from .encoder import EncoderLayerParams, encoder_forward, init_encoder_layer
from .preprocess import Segment
from .tensor import Tensor, cross_entropy, default_dtype, layer_norm, matmul

__all__ = [
    "ConfigError",
    "ModelConfig",
    "VARIANTS",
    "HeadParams",
    "PathParams",
    "ModelParams",
    "ModelOutput",
    "LossBundle",
    "init_params",
    "params_from_arrays",
    "forward",
    "count_parameters",
    "loss",
    "stack_segments",
]

FS_KHZ = 2  # samples per millisecond


class ConfigError(ValueError):
    """Model configuration and data disagree."""


VARIANTS: Dict[str, dict] = {
    "base": dict(layers=1, dim=32, mlp_dim=128, heads=4, paths=("temporal", "featural")),
    "large": dict(layers=2, dim=64, mlp_dim=256, heads=4, paths=("temporal", "featural")),
    "huge": dict(layers=1, dim=144, mlp_dim=720, heads=8, paths=("temporal", "featural")),
    "tnet": dict(layers=1, dim=144, mlp_dim=720, heads=8, paths=("temporal",)),
    "fnet": dict(layers=1, dim=144, mlp_dim=720, heads=8, paths=("featural",)),
}


@dataclass(frozen=True)
class ModelConfig:
    """One catalog row pinned to a window length and class count."""

    variant: str
    layers: int
    dim: int
    mlp_dim: int
    heads: int
    window_ms: int
    n_classes: int
    paths: Tuple[str, ...]

    @classmethod
    def from_variant(cls, variant: str, window_ms: int, n_classes: int) -> "ModelConfig":
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        return cls(variant=variant, window_ms=window_ms, n_classes=n_classes,
                   **VARIANTS[variant])

    @property
    def window_samples(self) -> int:
        return self.window_ms * FS_KHZ

    @property
    def is_hybrid(self) -> bool:
        return len(self.paths) == 2

    def scheme(self, kind: str) -> PatchScheme:
        return PatchScheme.make(kind, self.window_samples)


@dataclass
class HeadParams:
    """Final layer norm plus linear classifier."""

    ln_scale: Tensor
    ln_shift: Tensor
    w: Tensor  # D x K
    b: Tensor  # K


@dataclass
class PathParams:
    embedding: EmbeddingParams
    layers: List[EncoderLayerParams]
    head: HeadParams


@dataclass
class ModelParams:
    config: ModelConfig
    paths: Dict[str, PathParams]
    fusion: Optional[HeadParams]

    def named(self) -> Dict[str, Tensor]:
        """Flat name -> tensor view (checkpoint/optimizer order is fixed)."""
        out: Dict[str, Tensor] = {}
        for kind, pp in self.paths.items():
            e = pp.embedding
            out[f"{kind}.embed.proj"] = e.proj
            out[f"{kind}.embed.bias"] = e.bias
            out[f"{kind}.embed.cls"] = e.class_token
            out[f"{kind}.embed.pos"] = e.pos
            for i, lay in enumerate(pp.layers):
                p = f"{kind}.enc{i}"
                out[f"{p}.ln1.scale"] = lay.ln1_scale
                out[f"{p}.ln1.shift"] = lay.ln1_shift
                out[f"{p}.qkv"] = lay.w_qkv
                out[f"{p}.proj.w"] = lay.w_proj
                out[f"{p}.proj.b"] = lay.b_proj
                out[f"{p}.ln2.scale"] = lay.ln2_scale
                out[f"{p}.ln2.shift"] = lay.ln2_shift
                out[f"{p}.fc1.w"] = lay.fc1_w
                out[f"{p}.fc1.b"] = lay.fc1_b
                out[f"{p}.fc2.w"] = lay.fc2_w
                out[f"{p}.fc2.b"] = lay.fc2_b
            for name, t in _head_named(pp.head, f"{kind}.head").items():
                out[name] = t
        if self.fusion is not None:
            out.update(_head_named(self.fusion, "fusion"))
        return out


def _head_named(head: HeadParams, prefix: str) -> Dict[str, Tensor]:
    return {f"{prefix}.ln.scale": head.ln_scale, f"{prefix}.ln.shift": head.ln_shift,
            f"{prefix}.w": head.w, f"{prefix}.b": head.b}


def _init_head(dim: int, k: int, rng: np.random.Generator) -> HeadParams:
    dt = default_dtype()
    bound = 1.0 / math.sqrt(dim)
    return HeadParams(
        ln_scale=Tensor(np.ones(dim, dtype=dt), requires_grad=True),
        ln_shift=Tensor(np.zeros(dim, dtype=dt), requires_grad=True),
        w=Tensor(rng.uniform(-bound, bound, (dim, k)).astype(dt), requires_grad=True),
        b=Tensor(rng.uniform(-bound, bound, k).astype(dt), requires_grad=True),
    )


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded initialization: uniform(+-1/sqrt(fan_in)) linears, N(0, 0.02^2)
    class token and positional table, identity layer norms."""
    rng = np.random.default_rng(np.random.SeedSequence([0x7A11, seed]))
    paths: Dict[str, PathParams] = {}
    for kind in config.paths:
        scheme = config.scheme(kind)
        paths[kind] = PathParams(
            embedding=init_embedding(scheme, config.dim, rng),
            layers=[init_encoder_layer(config.dim, config.mlp_dim, config.heads, rng)
                    for _ in range(config.layers)],
            head=_init_head(config.dim, config.n_classes, rng),
        )
    fusion = _init_head(config.dim, config.n_classes, rng) if config.is_hybrid else None
    return ModelParams(config=config, paths=paths, fusion=fusion)


def params_from_arrays(config: ModelConfig, arrays: Dict[str, np.ndarray]) -> ModelParams:
    """Rebuild a parameter set from checkpoint arrays (shapes must match)."""
    params = init_params(config, seed=0)
    named = params.named()
    missing = set(named) - set(arrays)
    extra = set(arrays) - set(named)
    if missing or extra:
        raise ConfigError(f"checkpoint does not match config: missing {sorted(missing)}, "
                          f"unexpected {sorted(extra)}")
    dt = default_dtype()
    for name, tensor in named.items():
        arr = np.asarray(arrays[name], dtype=dt)
        if arr.shape != tensor.shape:
            raise ConfigError(f"parameter {name}: checkpoint shape {arr.shape} "
                              f"!= config shape {tensor.shape}")
        tensor.data = np.ascontiguousarray(arr)
    return params


@dataclass
class ModelOutput:
    """Logit sets produced by one forward pass (None when a path is absent)."""

    fused: Optional[Tensor]
    temporal: Optional[Tensor]
    featural: Optional[Tensor]

    def available(self) -> Dict[str, Tensor]:
        out = {}
        for name in ("fused", "temporal", "featural"):
            t = getattr(self, name)
            if t is not None:
                out[name] = t
        return out

    def primary(self) -> Tensor:
        """The logits accuracy is reported on: fused if present, else the path's."""
        return self.fused if self.fused is not None else next(iter(self.available().values()))


def _apply_head(z0: Tensor, head: HeadParams) -> Tensor:
    return matmul(layer_norm(z0, head.ln_scale, head.ln_shift), head.w) + head.b


def forward(batch: np.ndarray, params: ModelParams) -> ModelOutput:
    """Run every active path on a batch of windows (B x S x W x C).

    Each path: patches -> embedding -> encoder -> class-token state -> head.
    Dual-path models also sum the class-token states for the fusion head.
    """
    config = params.config
    x = np.asarray(batch)
    if x.ndim == 3:
        x = x[None]
    if x.shape[2] != config.window_samples:
        raise ConfigError(f"batch windows have {x.shape[2]} samples but config "
                          f"{config.variant}/{config.window_ms}ms expects {config.window_samples}")
    states: Dict[str, Tensor] = {}
    logits: Dict[str, Optional[Tensor]] = {"temporal": None, "featural": None}
    for kind, pp in params.paths.items():
        patches = make_patches(x, config.scheme(kind))
        z = embed(patches, pp.embedding)
        z = encoder_forward(z, pp.layers)
        z0 = z[:, 0, :]
        states[kind] = z0
        logits[kind] = _apply_head(z0, pp.head)
    fused = None
    if params.fusion is not None:
        fused = _apply_head(states["temporal"] + states["featural"], params.fusion)
    return ModelOutput(fused=fused, temporal=logits["temporal"], featural=logits["featural"])


def count_parameters(config: ModelConfig) -> int:
    """Exact trainable-scalar count, by arithmetic (cross-checked in tests
    against the materialized parameter set)."""
    d, k = config.dim, config.n_classes
    head = 2 * d + d * k + k
    per_layer = (2 * d                      # ln1
                 + d * 3 * d                # packed qkv, bias-free
                 + d * d + d                # attention projection
                 + 2 * d                    # ln2
                 + d * config.mlp_dim + config.mlp_dim
                 + config.mlp_dim * d + d)
    total = 0
    for kind in config.paths:
        scheme = config.scheme(kind)
        total += scheme.patch_dim * d + d        # projection + bias
        total += d                               # class token
        total += (scheme.n_patches + 1) * d      # positional table
        total += config.layers * per_layer
        total += head
    if config.is_hybrid:
        total += head
    return total


@dataclass
class LossBundle:
    """Per-head cross-entropies plus the training total."""

    total: Tensor
    parts: Dict[str, Tensor] = field(default_factory=dict)
    mode: str = "three-term"

    @property
    def value(self) -> float:
        return self.total.item()

    def part_values(self) -> Dict[str, float]:
        return {k: t.item() for k, t in self.parts.items()}


def loss(output: ModelOutput, labels, mode: str = "three-term") -> LossBundle:
    """Cross-entropy over the available heads.

    three-term sums every available head's loss (three on dual-path models,
    one on single-path); fused-only trains on the fusion logits alone and
    needs a dual-path model, though the per-path terms are still reported.
    """
    if mode not in ("three-term", "fused-only"):
        raise ConfigError(f"unknown loss mode {mode!r}")
    available = output.available()
    if mode == "fused-only" and output.fused is None:
        raise ConfigError("fused-only loss needs a dual-path model")
    parts = {name: cross_entropy(logits, labels) for name, logits in available.items()}
    if mode == "fused-only":
        total = parts["fused"]
    else:
        total = None
        for name in ("temporal", "featural", "fused"):  # fixed summation order
            if name in parts:
                total = parts[name] if total is None else total + parts[name]
    return LossBundle(total=total, parts=parts, mode=mode)


def stack_segments(segments: Sequence[Segment]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack segment windows into a batch array plus its label vector."""
    x = np.stack([s.x for s in segments]).astype(default_dtype(), copy=False)
    y = np.array([s.label for s in segments], dtype=np.int64)
    return x, y
