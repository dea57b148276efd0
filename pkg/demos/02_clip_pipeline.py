"""Clip preprocessing: frame sampling, crop geometry, token assembly.

Shows the midpoint-rule sampling of 8 frames from clips of various
lengths, the resize-then-center-crop geometry for a few aspect ratios,
and the 257 -> 258 token assembly that appends the landmark row.
"""

import numpy as np

from gestura.clips import (
    assemble_frame_tokens,
    center_crop_geometry,
    sample_frame_indices,
)
from gestura.landmarks import HandLandmarkFrame, encode_landmarks

for n in (8, 16, 30, 90, 3):
    print(f"n_frames={n:3d} -> sampled indices {sample_frame_indices(n)}")

print()
for w, h in ((1920, 1080), (1080, 1920), (640, 480), (224, 224)):
    geo = center_crop_geometry(w, h)
    print(f"{w}x{h}: scale {geo.scale:.4f}, crop origin ({geo.x}, {geo.y}), side {geo.side}")

rng = np.random.default_rng(0)
vision_tokens = rng.normal(size=(257, 1024))
frame = HandLandmarkFrame(points=rng.uniform(0, 1, size=(21, 3)))
tokens = assemble_frame_tokens(vision_tokens, encode_landmarks(frame))
print(f"\nper-frame token block: {tokens.shape} (last row is the landmark encoding)")
print(f"vision rows preserved byte-exactly: "
      f"{tokens[:257].tobytes() == vision_tokens.tobytes()}")
