"""Gesture-understanding infrastructure toolkit.

Landmark geometry and encoding, clip preprocessing, projector numerics,
a toy two-stage training harness, dataset formats and splits, the
evaluation-metric suite, a pluggable semantic judge, and an edge-cloud
serving harness.
"""

from .clips import (
    ClipMeta,
    assemble_frame_tokens,
    center_crop_geometry,
    sample_frame_indices,
)
from .landmarks import (
    HandLandmarkFrame,
    LandmarkFeatureVector,
    Triplet,
    encode_landmarks,
    enumerate_triplets,
    pairwise_distance,
    triplet_cosine,
)
from .projector import (
    ProjectorParams,
    concat_ground,
    gelu,
    init_params,
    projector_backward,
    projector_forward,
)

__version__ = "0.1.0"
