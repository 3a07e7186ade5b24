"""Synthetic feature sequences with exact ground truth.

A scene seeds a set of world keypoints, moves them with a constant
per-frame affine, and emits what an idealized detector would report:
the surviving keypoints plus optional jitter, dropout, and spurious
detections.  Ground truth (the noiseless keypoints) comes along for
evaluation.

With snap_motion on, the per-frame transform is first passed through
the 48-bit affine quantizer, so the coded motion can represent it
exactly and measured errors isolate the keypoint quantizers.  Turn it
off to study drift from accumulated motion quantization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import dequantize_affine, estimate_keypoint, quantize_affine, recompose
from ..kpquant import SIGMA0, lattice_sigma
from ..model import (
    DecomposedAffine,
    Feature,
    FrameFeatures,
    Keypoint,
    THETA_HI,
    THETA_LO,
    wrap_theta,
)


@dataclass
class SyntheticScene:
    width: int = 160
    height: int = 120
    n_frames: int = 50
    n_features: int = 60
    seed: int = 7

    # Constant per-frame motion; rotation is about the frame center.
    dx: float = 0.15
    dy: float = -0.1
    rotation: float = 0.002
    zoom: float = 1.0
    shear: float = 0.0
    snap_motion: bool = True
    t_max: int = 64               # translation range used when snapping

    # Detector imperfections, all off by default.
    loc_jitter: float = 0.0       # px, stddev per axis
    sigma_jitter: float = 0.0     # relative stddev
    theta_jitter: float = 0.0     # radians, stddev
    desc_noise: float = 0.0       # descriptor perturbation per frame
    dropout: float = 0.0          # chance a keypoint goes undetected
    distractor_rate: float = 0.0  # spurious detections, fraction of n_features
    cut_every: int = 0            # reseed the world every k frames (0 = never)

    # World geometry.
    min_separation: float = 4.0   # px between seeded points
    margin: float = 16.0          # keep-out border, px
    octave_range: tuple[int, int] = (0, 3)
    offset_range: float = 0.03    # relative sigma offset from the lattice
    descriptor_dim: int = 32
    sigma0: float = SIGMA0

    def generate(self) -> "GeneratedSequence":
        return _generate(self)


@dataclass
class GeneratedSequence:
    scene: SyntheticScene
    frames: list[FrameFeatures]
    truth: list[list[Keypoint]]               # noiseless in-frame keypoints
    transforms: list[DecomposedAffine | None]  # world motion into each frame

    def __iter__(self):
        return iter(self.frames)


def frame_motion(scene: SyntheticScene) -> DecomposedAffine:
    """The constant per-frame transform, snapped when configured."""
    cx = (scene.width - 1) / 2.0
    cy = (scene.height - 1) / 2.0
    linear = recompose(
        DecomposedAffine(
            r1=scene.zoom, r2=scene.zoom, q=scene.shear, phi=scene.rotation,
            tx=0.0, ty=0.0,
        )
    )
    d = DecomposedAffine(
        r1=scene.zoom,
        r2=scene.zoom,
        q=scene.shear,
        phi=scene.rotation,
        tx=cx - (linear.a * cx + linear.b * cy) + scene.dx,
        ty=cy - (linear.c * cx + linear.d * cy) + scene.dy,
    )
    if scene.snap_motion:
        d = dequantize_affine(quantize_affine(d, scene.t_max), scene.t_max)
    return d


def _seed_points(rng, scene: SyntheticScene) -> np.ndarray:
    lo = np.array([scene.margin, scene.margin])
    hi = np.array([scene.width - scene.margin, scene.height - scene.margin])
    if np.any(hi <= lo):
        raise ValueError("margin leaves no room to place keypoints")
    pts: list[np.ndarray] = []
    sep2 = scene.min_separation**2
    for _ in range(scene.n_features * 200):
        p = rng.uniform(lo, hi)
        if all(float(np.dot(p - q, p - q)) >= sep2 for q in pts):
            pts.append(p)
            if len(pts) == scene.n_features:
                return np.array(pts)
    raise ValueError(
        "could not place keypoints; lower min_separation or n_features"
    )


@dataclass
class _World:
    keypoints: list[Keypoint]
    descriptors: np.ndarray       # (n, dim), L2-normalized bases


def _seed_world(rng, scene: SyntheticScene) -> _World:
    pts = _seed_points(rng, scene)
    o_lo, o_hi = scene.octave_range
    kps = []
    for x, y in pts:
        octave = int(rng.integers(o_lo, o_hi + 1))
        intra = int(rng.integers(0, 3))
        offset = rng.uniform(-scene.offset_range, scene.offset_range)
        sigma = lattice_sigma(octave, intra, scene.sigma0) * (1.0 + offset)
        theta = float(rng.uniform(THETA_LO, THETA_HI))
        kps.append(Keypoint(x=float(x), y=float(y), sigma=sigma, theta=theta))
    desc = rng.standard_normal((scene.n_features, scene.descriptor_dim))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return _World(keypoints=kps, descriptors=desc)


def _in_bounds(kp: Keypoint, scene: SyntheticScene) -> bool:
    return 0.0 <= kp.x < scene.width and 0.0 <= kp.y < scene.height


def _detect(rng, world: _World, scene: SyntheticScene, frame_index: int):
    """One frame of detections plus the matching ground truth."""
    truth = []
    features = []
    for kp, base in zip(world.keypoints, world.descriptors):
        if not _in_bounds(kp, scene):
            continue
        truth.append(kp)
        if scene.dropout > 0 and rng.random() < scene.dropout:
            continue
        x, y, sigma, theta = kp.x, kp.y, kp.sigma, kp.theta
        if scene.loc_jitter > 0:
            x += scene.loc_jitter * rng.standard_normal()
            y += scene.loc_jitter * rng.standard_normal()
            x = min(max(x, 0.0), scene.width - 1e-9)
            y = min(max(y, 0.0), scene.height - 1e-9)
        if scene.sigma_jitter > 0:
            sigma *= max(1.0 + scene.sigma_jitter * rng.standard_normal(), 0.05)
        if scene.theta_jitter > 0:
            theta = wrap_theta(theta + scene.theta_jitter * rng.standard_normal())
        desc = base
        if scene.desc_noise > 0:
            desc = base + scene.desc_noise * rng.standard_normal(base.shape)
            desc = desc / np.linalg.norm(desc)
        features.append(
            Feature(keypoint=Keypoint(x=x, y=y, sigma=sigma, theta=theta),
                    descriptor=np.asarray(desc, dtype=float))
        )
    n_spurious = round(scene.distractor_rate * scene.n_features)
    for _ in range(n_spurious):
        kp = Keypoint(
            x=float(rng.uniform(0, scene.width - 1e-9)),
            y=float(rng.uniform(0, scene.height - 1e-9)),
            sigma=lattice_sigma(int(rng.integers(0, 4)), int(rng.integers(0, 3)),
                                scene.sigma0),
            theta=float(rng.uniform(THETA_LO, THETA_HI)),
        )
        desc = rng.standard_normal(scene.descriptor_dim)
        features.append(
            Feature(keypoint=kp, descriptor=desc / np.linalg.norm(desc))
        )
    return truth, FrameFeatures(
        frame_index=frame_index,
        width=scene.width,
        height=scene.height,
        features=features,
    )


def _generate(scene: SyntheticScene) -> GeneratedSequence:
    rng = np.random.default_rng(scene.seed)
    motion = frame_motion(scene)
    world = _seed_world(rng, scene)

    frames: list[FrameFeatures] = []
    truth: list[list[Keypoint]] = []
    transforms: list[DecomposedAffine | None] = [None]

    for t in range(scene.n_frames):
        if t > 0:
            if scene.cut_every > 0 and t % scene.cut_every == 0:
                world = _seed_world(rng, scene)
                transforms.append(None)
            else:
                world.keypoints = [
                    estimate_keypoint(kp, motion) for kp in world.keypoints
                ]
                transforms.append(motion)
        frame_truth, frame = _detect(rng, world, scene, t)
        truth.append(frame_truth)
        frames.append(frame)
    return GeneratedSequence(
        scene=scene, frames=frames, truth=truth, transforms=transforms[: scene.n_frames]
    )
