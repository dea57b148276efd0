"""Relative landmark encoding walkthrough.

Builds a random 21-keypoint hand frame, encodes it into the 1024-vector
of triplet-angle cosines, and demonstrates the similarity invariance:
rotating, translating, and scaling the hand leaves the encoding
untouched.
"""

import numpy as np

from gestura.landmarks import (
    HandLandmarkFrame,
    encode_landmarks,
    encode_points,
    enumerate_triplets,
)

rng = np.random.default_rng(0)

trips = enumerate_triplets(21)
print(f"C(21,3) index triplets: {len(trips)} (encoder keeps the first 1024)")
print(f"first three: {[(t.i, t.j, t.k) for t in trips[:3]]}")

frame = HandLandmarkFrame(points=rng.uniform(0, 1, size=(21, 3)), handedness="right")
encoding = encode_landmarks(frame)
print(f"\nencoding shape: {encoding.values.shape}, "
      f"range [{encoding.values.min():.3f}, {encoding.values.max():.3f}], "
      f"degenerate triplets: {encoding.degenerate_count}")

# similarity transform: random rotation + scale + translation
q, r = np.linalg.qr(rng.normal(size=(3, 3)))
q *= np.sign(np.diag(r))
moved = 2.5 * (frame.points @ q.T) + np.array([10.0, -4.0, 7.0])
moved_values, _ = encode_points(moved)
drift = np.max(np.abs(moved_values - encoding.values))
print(f"max drift after rotate+scale+translate: {drift:.2e}")

# a frame with no detected hand encodes to the zero vector
missing = HandLandmarkFrame(points=np.zeros((21, 3)), valid=False)
zero = encode_landmarks(missing)
print(f"\ninvalid frame -> all-zero encoding: {not zero.valid and not zero.values.any()}")
