"""Projector numerics: forward pass, gradient check, checkpointing.

Initializes a toy three-layer GELU projector, compares the analytic
backward pass with central finite differences, and round-trips the
parameters through the binary checkpoint format.
"""

import tempfile

import numpy as np

from gestura.projector import (
    init_params,
    load_checkpoint,
    projector_backward,
    projector_forward,
    save_checkpoint,
)

rng = np.random.default_rng(0)
params = init_params(d_v=16, d_h=24, d_z=8, seed=0)
v = rng.normal(size=16)
z = projector_forward(v, params)
print(f"projection: d_v=16 -> d_z={z.shape[0]}, |z| = {np.linalg.norm(z):.4f}")

upstream = rng.normal(size=8)
grads, dv = projector_backward(v, params, upstream)

h = 1e-5
worst = 0.0
for bi, block in enumerate(params.blocks()):
    fd = np.zeros_like(block)
    it = np.nditer(block, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus, minus = params.copy(), params.copy()
        plus.blocks()[bi][idx] += h
        minus.blocks()[bi][idx] -= h
        fd[idx] = (upstream @ projector_forward(v, plus)
                   - upstream @ projector_forward(v, minus)) / (2 * h)
        it.iternext()
    scale = max(np.max(np.abs(fd)), 1.0)
    worst = max(worst, float(np.max(np.abs(grads.blocks()[bi] - fd)) / scale))
print(f"worst relative gradient error vs finite differences: {worst:.2e}")

with tempfile.NamedTemporaryFile(suffix=".ckpt") as tmp:
    save_checkpoint(params, tmp.name, seed=0)
    loaded, seed = load_checkpoint(tmp.name)
    print(f"checkpoint round trip bit-exact: {loaded.tobytes() == params.tobytes()} "
          f"(seed {seed})")
