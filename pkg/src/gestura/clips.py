"""Clip-level preprocessing geometry and token assembly.

Uniform 8-frame sampling, 224x224 center-crop geometry (no pixel work),
and the 257 -> 258 per-frame token assembly that appends the landmark
feature vector as the last token row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .landmarks import ENCODING_DIM, LandmarkFeatureVector

VISION_TOKENS_PER_FRAME = 257
TOKENS_PER_FRAME = VISION_TOKENS_PER_FRAME + 1
FRAMES_PER_CLIP = 8
CROP_SIDE = 224

VIEWS = ("egocentric", "exocentric")


@dataclass
class ClipMeta:
    clip_id: str
    n_frames: int
    width: int
    height: int
    view: str
    fps: float = 30.0
    class_label: str | None = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}, got {self.view!r}")


@dataclass(frozen=True)
class CropGeometry:
    """Scale factor plus the centered square crop in scaled coordinates."""

    scale: float
    x: int
    y: int
    side: int


def sample_frame_indices(n_frames: int, k: int = FRAMES_PER_CLIP) -> list[int]:
    """Midpoint-rule uniform sampling: index i = floor((i + 0.5) * n / k).

    Short clips repeat frames; indices are always valid and non-decreasing.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    return [int((i + 0.5) * n_frames // k) for i in range(k)]


def center_crop_geometry(width: int, height: int, side: int = CROP_SIDE) -> CropGeometry:
    """Resize so the short edge equals ``side``, then take the centered square.

    Offsets are rounded to the nearest integer pixel so fixtures stay stable.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    scale = side / min(width, height)
    scaled_w = width * scale
    scaled_h = height * scale
    x = round((scaled_w - side) / 2)
    y = round((scaled_h - side) / 2)
    return CropGeometry(scale=scale, x=x, y=y, side=side)


def assemble_frame_tokens(vision_tokens: np.ndarray, landmarks: LandmarkFeatureVector) -> np.ndarray:
    """Stack the 257 vision token rows with the landmark row as row 257."""
    vt = np.asarray(vision_tokens, dtype=np.float64)
    if vt.shape != (VISION_TOKENS_PER_FRAME, ENCODING_DIM):
        raise ValueError(
            f"vision tokens must have shape ({VISION_TOKENS_PER_FRAME}, {ENCODING_DIM}), got {vt.shape}"
        )
    return np.vstack([vt, landmarks.values[np.newaxis, :]])


def parse_clip_manifest(text: str) -> ClipMeta:
    """Parse the clip manifest document (UTF-8 JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"clip manifest is not valid JSON: {exc}") from exc
    for key in ("clip_id", "n_frames", "width", "height", "fps", "view"):
        if key not in doc:
            raise ValueError(f"clip manifest missing field {key!r}")
    return ClipMeta(
        clip_id=str(doc["clip_id"]),
        n_frames=int(doc["n_frames"]),
        width=int(doc["width"]),
        height=int(doc["height"]),
        fps=float(doc["fps"]),
        view=doc["view"],
        class_label=doc.get("class_label"),
    )


def load_clip_manifest(path) -> ClipMeta:
    with open(path, encoding="utf-8") as fh:
        return parse_clip_manifest(fh.read())
