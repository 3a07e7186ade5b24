"""Domain types for keypoint streams.

A keypoint is a location plus scale and orientation; a feature adds the
descriptor used for matching.  Frame-to-frame motion is modelled by a
2x3 affine transform, handled either as matrix entries or decomposed
into two scale factors, a shear and a clockwise rotation angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .errors import KpcodecError

TWO_PI = 2.0 * math.pi

# Canonical orientation interval [-1.5*pi, 0.5*pi).  The orientation
# quantizer maps this interval onto [0, 1) with a fixed 0.75 offset, so
# every wrapped angle yields an in-range code.
THETA_LO = -1.5 * math.pi
THETA_HI = 0.5 * math.pi


def wrap_theta(theta: float) -> float:
    """Wrap an angle into [-1.5*pi, 0.5*pi).

    Values already inside the interval are returned unchanged, which makes
    the wrap exactly idempotent under floating point.
    """
    if THETA_LO <= theta < THETA_HI:
        return theta
    return (theta - THETA_LO) % TWO_PI + THETA_LO


def wrap_theta_array(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap_theta."""
    theta = np.asarray(theta, dtype=float)
    out = (theta - THETA_LO) % TWO_PI + THETA_LO
    inside = (theta >= THETA_LO) & (theta < THETA_HI)
    return np.where(inside, theta, out)


class FrameType(IntEnum):
    """Committed frame types and their 2-bit stream codes."""

    D = 0  # intra: full keypoint set coded standalone
    S = 1  # skip: 48-bit affine only, keypoints estimated from the buffer
    U = 2  # update: affine + per-keypoint skip/inter/drop modes + new intra
    N = 3  # fallback: content unstable, nothing coded


@dataclass(frozen=True)
class Keypoint:
    """Location, scale and orientation of a single keypoint."""

    x: float
    y: float
    sigma: float
    theta: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Feature:
    """A keypoint with its descriptor vector (None for decoded-only data)."""

    keypoint: Keypoint
    descriptor: Optional[np.ndarray] = None


@dataclass
class FrameFeatures:
    """All features detected in one frame."""

    frame_index: int
    width: int
    height: int
    features: list[Feature] = field(default_factory=list)

    def descriptor_matrix(self) -> np.ndarray:
        """Stack descriptors into an (n, dim) array."""
        from .errors import MissingDescriptors

        if any(f.descriptor is None for f in self.features):
            raise MissingDescriptors(
                f"frame {self.frame_index} has features without descriptors"
            )
        if not self.features:
            return np.zeros((0, 0))
        return np.stack([f.descriptor for f in self.features])

    def keypoints(self) -> list[Keypoint]:
        return [f.keypoint for f in self.features]


@dataclass(frozen=True)
class AffineTransform:
    """Row-major 2x2 linear part plus translation: x' = a x + b y + tx."""

    a: float
    b: float
    c: float
    d: float
    tx: float
    ty: float

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (
            self.a * x + self.b * y + self.tx,
            self.c * x + self.d * y + self.ty,
        )

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        """Apply to an (n, 2) array of points."""
        pts = np.asarray(pts, dtype=float)
        lin = np.array([[self.a, self.b], [self.c, self.d]])
        return pts @ lin.T + np.array([self.tx, self.ty])


@dataclass(frozen=True)
class DecomposedAffine:
    """Affine motion split into scales r1, r2, shear q and clockwise rotation phi."""

    r1: float
    r2: float
    q: float
    phi: float
    tx: float
    ty: float


# Encoder baselines: the full adaptive scheme, intra-only coding, and
# intra plus update frames without skip frames.
SCHEMES = ("full", "all_d", "d_plus_u")


@dataclass(frozen=True)
class StreamConfig:
    """Every knob that shapes an encoded stream.

    Values that affect decodability (f, theta_bits, t_max, the scale
    codebook) are written into the stream header; epsilon and ns ride
    along informatively.
    """

    epsilon: float = 0.80          # S-frame decision: matches >= epsilon * anchor size
    ns: int = 4                    # successors that must be S before a D/U commits
    nndr_threshold: float = 0.8    # nearest/second-nearest distance ratio cutoff
    f: float = 1.0                 # location grid cell size in pixels
    theta_bits: int = 6            # orientation code width
    t_max: int = 64                # translation clamp for the 48-bit affine code
    max_features: int = 200
    seed: int = 0
    ransac_tol: float = 3.0        # inlier reprojection radius, px
    ransac_max_iters: int = 1000
    ransac_min_inliers: int = 8
    ransac_confidence: float = 0.99
    sigma0: float = 2.0159         # base of the octave/intra-scale lattice
    context_range: int = 49        # occupancy coder contexts / causal window length
    block_width: int = 1
    scheme: str = "full"

    def validate(self) -> None:
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.ns < 0:
            raise ValueError(f"ns must be >= 0, got {self.ns}")
        if not (0.0 < self.nndr_threshold < 1.0):
            raise ValueError(
                f"nndr threshold must lie in (0, 1), got {self.nndr_threshold}"
            )
        if not self.f > 0:
            raise ValueError(f"location factor f must be positive, got {self.f}")
        if not (1 <= self.theta_bits <= 16):
            raise ValueError(f"theta_bits must lie in [1, 16], got {self.theta_bits}")
        if not (1 <= self.t_max <= 65535):
            raise ValueError(f"t_max must lie in [1, 65535], got {self.t_max}")
        if not (1 <= self.max_features <= 65535):
            raise ValueError(
                f"max_features must lie in [1, 65535], got {self.max_features}"
            )
        if self.ransac_min_inliers < 3:
            raise ValueError("ransac_min_inliers must be >= 3")
        if not (0.0 < self.ransac_confidence < 1.0):
            raise ValueError("ransac_confidence must lie in (0, 1)")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.context_range < 1:
            raise ValueError("context_range must be >= 1")
        if self.block_width != 1:
            raise ValueError("only block_width 1 is supported")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


def validate_frames(frames: Sequence[FrameFeatures], config: StreamConfig) -> None:
    """Check encoder input against stream preconditions."""
    from .errors import EncodeError

    if not frames:
        raise EncodeError("stream must contain at least one frame")
    width, height = frames[0].width, frames[0].height
    if width < 1 or height < 1:
        raise EncodeError("frame dimensions must be positive", frames[0].frame_index)
    prev_index = None
    for fr in frames:
        if (fr.width, fr.height) != (width, height):
            raise EncodeError("frame dimensions differ from stream header", fr.frame_index)
        if prev_index is not None and fr.frame_index <= prev_index:
            raise EncodeError("frame indices must strictly increase", fr.frame_index)
        prev_index = fr.frame_index
        if len(fr.features) > config.max_features:
            raise EncodeError(
                f"{len(fr.features)} features exceed max_features={config.max_features}",
                fr.frame_index,
            )
        for ft in fr.features:
            kp = ft.keypoint
            if not (0.0 <= kp.x < width and 0.0 <= kp.y < height):
                raise EncodeError(
                    f"keypoint ({kp.x}, {kp.y}) outside {width}x{height}", fr.frame_index
                )
