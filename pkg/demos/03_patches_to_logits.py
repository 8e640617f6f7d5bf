"""From a preprocessed window to logits, and the size of each catalog model.

Walks one window through both patch layouts, the embedding, the encoder and
the heads, then prints the full parameter-count catalog.
"""

import numpy as np

from emgformer.embedding import PatchScheme, make_patches
from emgformer.model import ModelConfig, VARIANTS, count_parameters, forward, init_params

print("== patch layouts for a 200 ms window (400 samples, 12 sensors, 3 channels) ==")
rng = np.random.default_rng(1)
window = rng.uniform(-1, 1, (12, 400, 3)).astype(np.float32)
for kind in ("temporal", "featural"):
    scheme = PatchScheme.make(kind, 400)
    patches = make_patches(window, scheme)
    print(f"{kind:8s}: {scheme.n_patches:2d} patches x {scheme.patch_dim:4d} values "
          f"(uses the first {scheme.usable} samples)  -> tokens incl. class: "
          f"{scheme.n_patches + 1}")

print()
print("== one forward pass, dual-path 'huge' row ==")
config = ModelConfig.from_variant("huge", 200, n_classes=49)
params = init_params(config, seed=0)
out = forward(window[None], params)
print(f"fused logits    {out.fused.shape}")
print(f"temporal logits {out.temporal.shape}")
print(f"featural logits {out.featural.shape}")
pred = int(out.fused.data[0].argmax())
print(f"untrained prediction: class {pred} (meaningless until trained)")

print()
print("== parameter-count catalog (49 classes) ==")
print(f"{'model':8s} {'L':>2s} {'D':>4s} {'MLP':>4s} {'h':>2s} "
      f"{'200 ms':>9s} {'150 ms':>9s} {'100 ms':>9s}")
for name, spec in VARIANTS.items():
    counts = [count_parameters(ModelConfig.from_variant(name, w, 49))
              for w in (200, 150, 100)]
    print(f"{name:8s} {spec['layers']:2d} {spec['dim']:4d} {spec['mlp_dim']:4d} "
          f"{spec['heads']:2d} {counts[0]:9,d} {counts[1]:9,d} {counts[2]:9,d}")

d, k = 144, 49
print(f"\ndual-path 'huge' minus its two single paths leaves exactly the fusion "
      f"head: 2D + DK + K = {2 * d + d * k + k:,d} parameters at every window size")
