"""Hand landmark geometry.

Distances, triplet angle cosines, and the 1024-dimensional relative
landmark encoding used as the per-frame ground feature. All geometry is
done in double precision; the encoding is invariant to rotation,
translation, and uniform scaling of the input points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

NUM_LANDMARKS = 21
ENCODING_DIM = 1024
DEGENERATE_EPS = 1e-8

HANDEDNESS_VALUES = ("left", "right", "unknown")


@dataclass(frozen=True)
class Triplet:
    """Ordered landmark index triple with i < j < k."""

    i: int
    j: int
    k: int

    def __post_init__(self):
        if not (0 <= self.i < self.j < self.k):
            raise ValueError(f"triplet indices must satisfy 0 <= i < j < k, got {(self.i, self.j, self.k)}")


@dataclass
class HandLandmarkFrame:
    """21 named 3-D keypoints for one hand in one frame.

    ``valid`` is False when no hand was detected; the points array is
    still carried (conventionally zeros) so downstream shapes stay fixed.
    """

    points: np.ndarray
    handedness: str = "unknown"
    valid: bool = True
    frame_index: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (NUM_LANDMARKS, 3):
            raise ValueError(f"expected ({NUM_LANDMARKS}, 3) points, got {self.points.shape}")
        if self.handedness not in HANDEDNESS_VALUES:
            raise ValueError(f"handedness must be one of {HANDEDNESS_VALUES}, got {self.handedness!r}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if self.valid and not np.all(np.isfinite(self.points)):
            raise ValueError("valid frame contains non-finite coordinates")


@dataclass
class LandmarkFeatureVector:
    """1024 triplet cosines for one frame.

    ``valid`` mirrors the source frame; an invalid frame encodes to the
    all-zero vector. ``degenerate_count`` counts triplets whose angle was
    undefined (coincident points); those entries are 0.
    """

    values: np.ndarray
    valid: bool = True
    degenerate_count: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (ENCODING_DIM,):
            raise ValueError(f"expected {ENCODING_DIM} values, got shape {self.values.shape}")
        if np.any(np.abs(self.values) > 1.0):
            raise ValueError("encoding values must lie in [-1, 1]")
        if not self.valid and np.any(self.values != 0.0):
            raise ValueError("invalid frame must carry an all-zero encoding")


def pairwise_distance(p_i, p_j) -> float:
    """Euclidean distance between two 3-D points."""
    a = np.asarray(p_i, dtype=np.float64)
    b = np.asarray(p_j, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("points must be finite")
    return float(np.linalg.norm(a - b))


def triplet_cosine(p_i, p_j, p_k) -> float:
    """Cosine of the angle at vertex p_i formed by rays to p_j and p_k.

    Degenerate triplets (either ray shorter than DEGENERATE_EPS) return
    0.0, the neutral value. The result is clamped to [-1, 1].
    """
    value, _ = _cosine_with_flag(p_i, p_j, p_k)
    return value


def _cosine_with_flag(p_i, p_j, p_k):
    a = np.asarray(p_i, dtype=np.float64)
    b = np.asarray(p_j, dtype=np.float64)
    c = np.asarray(p_k, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("points must be finite")
    u = b - a
    v = c - a
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < DEGENERATE_EPS or nv < DEGENERATE_EPS:
        return 0.0, True
    value = float(np.dot(u, v) / (nu * nv))
    return max(-1.0, min(1.0, value)), False


def enumerate_triplets(n: int) -> list[Triplet]:
    """All C(n, 3) index triplets in lexicographic order."""
    if n < 3:
        raise ValueError(f"need at least 3 landmarks, got {n}")
    return [Triplet(i, j, k) for i, j, k in combinations(range(n), 3)]


def _encoding_index_arrays():
    trips = list(combinations(range(NUM_LANDMARKS), 3))[:ENCODING_DIM]
    arr = np.array(trips, dtype=np.intp)
    return arr[:, 0], arr[:, 1], arr[:, 2]


# Lexicographic prefix of length 1024 out of the C(21,3) = 1330 triplets.
_IDX_I, _IDX_J, _IDX_K = _encoding_index_arrays()


def encode_points(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized triplet-cosine encoding.

    ``points`` has shape (..., 21, 3); returns (values, degenerate_counts)
    with values of shape (..., 1024). Vertex of each angle is the first
    index of the triplet.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-2:] != (NUM_LANDMARKS, 3):
        raise ValueError(f"expected trailing shape ({NUM_LANDMARKS}, 3), got {pts.shape}")
    u = pts[..., _IDX_J, :] - pts[..., _IDX_I, :]
    v = pts[..., _IDX_K, :] - pts[..., _IDX_I, :]
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    degenerate = (nu < DEGENERATE_EPS) | (nv < DEGENERATE_EPS)
    denom = np.where(degenerate, 1.0, nu * nv)
    values = np.einsum("...d,...d->...", u, v) / denom
    values = np.where(degenerate, 0.0, np.clip(values, -1.0, 1.0))
    return values, degenerate.sum(axis=-1)


def encode_landmarks(frame: HandLandmarkFrame) -> LandmarkFeatureVector:
    """Encode one frame into its 1024-vector of triplet cosines.

    An invalid frame (no hand detected) yields the all-zero vector with
    valid=False so downstream token shapes stay fixed.
    """
    if not frame.valid:
        return LandmarkFeatureVector(np.zeros(ENCODING_DIM), valid=False)
    values, n_degenerate = encode_points(frame.points)
    return LandmarkFeatureVector(values, valid=True, degenerate_count=int(n_degenerate))


@dataclass
class LandmarkClip:
    """Parsed landmark file: one document per clip."""

    clip_id: str
    fps: float
    frames: list[HandLandmarkFrame] = field(default_factory=list)


def parse_landmark_document(text: str) -> LandmarkClip:
    """Parse the landmark interchange document (UTF-8 JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"landmark document is not valid JSON: {exc}") from exc
    for key in ("clip_id", "fps", "frames"):
        if key not in doc:
            raise ValueError(f"landmark document missing field {key!r}")
    frames = []
    for rec in doc["frames"]:
        for key in ("frame_index", "handedness", "valid", "points"):
            if key not in rec:
                raise ValueError(f"landmark frame record missing field {key!r}")
        frames.append(
            HandLandmarkFrame(
                points=np.asarray(rec["points"], dtype=np.float64),
                handedness=rec["handedness"],
                valid=bool(rec["valid"]),
                frame_index=int(rec["frame_index"]),
            )
        )
    return LandmarkClip(clip_id=str(doc["clip_id"]), fps=float(doc["fps"]), frames=frames)


def load_landmark_file(path) -> LandmarkClip:
    with open(path, encoding="utf-8") as fh:
        return parse_landmark_document(fh.read())


def dump_landmark_document(clip: LandmarkClip) -> str:
    doc = {
        "clip_id": clip.clip_id,
        "fps": clip.fps,
        "frames": [
            {
                "frame_index": f.frame_index,
                "handedness": f.handedness,
                "valid": f.valid,
                "points": f.points.tolist(),
            }
            for f in clip.frames
        ],
    }
    return json.dumps(doc)
