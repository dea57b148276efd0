"""Three-layer GELU projector: forward pass, exact analytic gradient,
ground-feature concatenation, and a small binary checkpoint format.

The network is z = W3 @ gelu(W2 @ gelu(W1 @ v + b1) + b2) + b3 with
configurable (toy-scale) dimensions. GELU uses the exact erf form.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

CHECKPOINT_HEADER = struct.Struct("<4q")  # d_v, d_h, d_z, seed


def gelu(x):
    """Exact GELU: x * Phi(x) with Phi the standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    """d/dx gelu(x) = Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def identity(x):
    """Activation test hook: reduces the projector to a plain affine map."""
    return np.asarray(x, dtype=np.float64)


def identity_grad(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


@dataclass
class ProjectorParams:
    """The six parameter blocks of the projector."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d_h, d_v = self.W1.shape
        if self.b1.shape != (d_h,):
            raise ValueError("b1 dimension inconsistent with W1")
        if self.W2.shape != (d_h, d_h):
            raise ValueError("W2 must be square with the hidden dimension")
        if self.b2.shape != (d_h,):
            raise ValueError("b2 dimension inconsistent with W2")
        d_z = self.W3.shape[0]
        if self.W3.shape != (d_z, d_h):
            raise ValueError("W3 columns must match the hidden dimension")
        if self.b3.shape != (d_z,):
            raise ValueError("b3 dimension inconsistent with W3")
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def d_v(self) -> int:
        return self.W1.shape[1]

    @property
    def d_h(self) -> int:
        return self.W1.shape[0]

    @property
    def d_z(self) -> int:
        return self.W3.shape[0]

    def blocks(self):
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def copy(self) -> "ProjectorParams":
        return ProjectorParams(*(b.copy() for b in self.blocks()))

    def tobytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(b).tobytes() for b in self.blocks())


def init_params(d_v: int, d_h: int, d_z: int, seed: int = 0) -> ProjectorParams:
    """Seeded uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)

    def layer(fan_out, fan_in):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    return ProjectorParams(
        W1=layer(d_h, d_v),
        b1=np.zeros(d_h),
        W2=layer(d_h, d_h),
        b2=np.zeros(d_h),
        W3=layer(d_z, d_h),
        b3=np.zeros(d_z),
    )


def projector_forward(v, params: ProjectorParams, activation=gelu) -> np.ndarray:
    """z = W3 @ act(W2 @ act(W1 @ v + b1) + b2) + b3."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.d_v,):
        raise ValueError(f"expected input of shape ({params.d_v},), got {v.shape}")
    h1 = activation(params.W1 @ v + params.b1)
    h2 = activation(params.W2 @ h1 + params.b2)
    return params.W3 @ h2 + params.b3


def projector_backward(
    v,
    params: ProjectorParams,
    upstream_gradient,
    activation=gelu,
    activation_grad=gelu_grad,
):
    """Exact gradients of projector_forward.

    Returns (grads, dv) where grads is a ProjectorParams holding the
    gradient of each block and dv is the gradient with respect to the input.
    """
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream_gradient, dtype=np.float64)
    if v.shape != (params.d_v,):
        raise ValueError(f"expected input of shape ({params.d_v},), got {v.shape}")
    if g.shape != (params.d_z,):
        raise ValueError(f"expected upstream gradient of shape ({params.d_z},), got {g.shape}")

    a1 = params.W1 @ v + params.b1
    h1 = activation(a1)
    a2 = params.W2 @ h1 + params.b2
    h2 = activation(a2)

    dW3 = np.outer(g, h2)
    db3 = g.copy()
    dh2 = params.W3.T @ g
    da2 = dh2 * activation_grad(a2)
    dW2 = np.outer(da2, h1)
    db2 = da2
    dh1 = params.W2.T @ da2
    da1 = dh1 * activation_grad(a1)
    dW1 = np.outer(da1, v)
    db1 = da1
    dv = params.W1.T @ da1
    grads = ProjectorParams(W1=dW1, b1=db1, W2=dW2, b2=db2, W3=dW3, b3=db3)
    return grads, dv


def concat_ground(ground, video_features) -> np.ndarray:
    """[G; v_feat] with the ground feature first."""
    g = np.asarray(ground, dtype=np.float64)
    v = np.asarray(video_features, dtype=np.float64)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(v))):
        raise ValueError("features must be finite")
    return np.concatenate([g, v])


def save_checkpoint(params: ProjectorParams, path, seed: int = 0) -> None:
    """Header (d_v, d_h, d_z, seed) as little-endian int64, then the six
    blocks as little-endian float64, row-major, in order W1,b1,W2,b2,W3,b3."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_HEADER.pack(params.d_v, params.d_h, params.d_z, seed))
        for block in params.blocks():
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ProjectorParams, int]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < CHECKPOINT_HEADER.size:
        raise ValueError("checkpoint file truncated")
    d_v, d_h, d_z, seed = CHECKPOINT_HEADER.unpack_from(data)
    shapes = [(d_h, d_v), (d_h,), (d_h, d_h), (d_h,), (d_z, d_h), (d_z,)]
    offset = CHECKPOINT_HEADER.size
    blocks = []
    for shape in shapes:
        n = int(np.prod(shape))
        end = offset + 8 * n
        if end > len(data):
            raise ValueError("checkpoint file truncated")
        blocks.append(np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy())
        offset = end
    if offset != len(data):
        raise ValueError("checkpoint file has trailing bytes")
    return ProjectorParams(*blocks), int(seed)
