"""Affine decomposition and the 48-bit transform code.

The 2x2 linear part of a frame-to-frame affine is factored as

    [[a, b], [c, d]] = diag(r1, r2) * [[1, 0], [q, 1]] * R(phi)

with R(phi) = [[cos phi, sin phi], [-sin phi, cos phi]] a clockwise
rotation.  The six parameters (r1, r2, q, phi, tx, ty) are what the
stream carries for S- and U-frames, uniformly quantized to
7/7/7/9/9/9 bits over fixed ranges.  Keypoints are carried along by
the transform: location affinely, scale by sqrt(r1*r2), orientation
by subtracting phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateTransform, InvalidDecomposition
from .model import AffineTransform, DecomposedAffine, Keypoint, wrap_theta

DET_EPS = 1e-6

# Quantizer ranges for the linear part.  Consecutive frames of slow
# video stay well inside these; values outside are clamped (and the
# encoder counts the clamps).
R_RANGE = (0.9, 1.1)
Q_RANGE = (-0.05, 0.05)
PHI_RANGE = (-0.15, 0.15)

R_BITS = 7
Q_BITS = 7
PHI_BITS = 9
T_BITS = 9

AFFINE_CODE_BITS = 2 * R_BITS + Q_BITS + PHI_BITS + 2 * T_BITS  # 48


@dataclass(frozen=True)
class QuantizedAffine:
    """Quantizer indices for one coded transform."""

    r1: int
    r2: int
    q: int
    phi: int
    tx: int
    ty: int

    def __post_init__(self):
        for name, value, bits in (
            ("r1", self.r1, R_BITS),
            ("r2", self.r2, R_BITS),
            ("q", self.q, Q_BITS),
            ("phi", self.phi, PHI_BITS),
            ("tx", self.tx, T_BITS),
            ("ty", self.ty, T_BITS),
        ):
            if not (0 <= value < (1 << bits)):
                raise ValueError(f"{name} index {value} outside {bits}-bit range")


def decompose(t: AffineTransform) -> DecomposedAffine:
    """Split a transform into (r1, r2, q, phi, tx, ty).

    Raises DegenerateTransform when |det| < 1e-6 or the first row is
    (0, 0), where the factorization is undefined.
    """
    det = t.det()
    if abs(det) < DET_EPS:
        raise DegenerateTransform(f"determinant {det} too small")
    r1 = math.hypot(t.a, t.b)
    if r1 < DET_EPS:
        raise DegenerateTransform("first row of the linear part is zero")
    return DecomposedAffine(
        r1=r1,
        r2=det / r1,
        q=(t.a * t.c + t.b * t.d) / det,
        phi=math.atan2(t.b, t.a),
        tx=t.tx,
        ty=t.ty,
    )


def recompose(d: DecomposedAffine) -> AffineTransform:
    """Rebuild the matrix from decomposed parameters (requires r1 > 0)."""
    if not d.r1 > 0:
        raise InvalidDecomposition(f"r1 must be positive, got {d.r1}")
    cos_p = math.cos(d.phi)
    sin_p = math.sin(d.phi)
    return AffineTransform(
        a=d.r1 * cos_p,
        b=d.r1 * sin_p,
        c=d.r2 * (d.q * cos_p - sin_p),
        d=d.r2 * (d.q * sin_p + cos_p),
        tx=d.tx,
        ty=d.ty,
    )


def scale_factor(d: DecomposedAffine) -> float:
    """Isotropic scale change sqrt(r1*r2) carried by the transform."""
    prod = d.r1 * d.r2
    if not prod > 0:
        raise InvalidDecomposition(f"r1*r2 must be positive, got {prod}")
    return math.sqrt(prod)


def estimate_keypoint(kp: Keypoint, d: DecomposedAffine) -> Keypoint:
    """Carry a keypoint through a transform.

    Location moves affinely, scale is multiplied by sqrt(r1*r2), and the
    clockwise rotation phi is subtracted from the orientation.
    """
    t = recompose(d)
    x, y = t.apply(kp.x, kp.y)
    return Keypoint(
        x=x,
        y=y,
        sigma=scale_factor(d) * kp.sigma,
        theta=wrap_theta(kp.theta - d.phi),
    )


def quantize_uniform(value: float, lo: float, hi: float, bits: int) -> int:
    """Endpoint-inclusive uniform quantizer index; clamps outside [lo, hi]."""
    if value <= lo:
        return 0
    levels = (1 << bits) - 1
    if value >= hi:
        return levels
    return round((value - lo) / (hi - lo) * levels)


def dequantize_uniform(index: int, lo: float, hi: float, bits: int) -> float:
    return lo + index * (hi - lo) / ((1 << bits) - 1)


def quantize_affine(d: DecomposedAffine, t_max: float) -> QuantizedAffine:
    """Quantize decomposed parameters to the 48-bit layout.

    Out-of-range parameters are clamped silently; use clamped_params to
    count them for encoder statistics.
    """
    return QuantizedAffine(
        r1=quantize_uniform(d.r1, *R_RANGE, R_BITS),
        r2=quantize_uniform(d.r2, *R_RANGE, R_BITS),
        q=quantize_uniform(d.q, *Q_RANGE, Q_BITS),
        phi=quantize_uniform(d.phi, *PHI_RANGE, PHI_BITS),
        tx=quantize_uniform(d.tx, -t_max, t_max, T_BITS),
        ty=quantize_uniform(d.ty, -t_max, t_max, T_BITS),
    )


def dequantize_affine(qa: QuantizedAffine, t_max: float) -> DecomposedAffine:
    return DecomposedAffine(
        r1=dequantize_uniform(qa.r1, *R_RANGE, R_BITS),
        r2=dequantize_uniform(qa.r2, *R_RANGE, R_BITS),
        q=dequantize_uniform(qa.q, *Q_RANGE, Q_BITS),
        phi=dequantize_uniform(qa.phi, *PHI_RANGE, PHI_BITS),
        tx=dequantize_uniform(qa.tx, -t_max, t_max, T_BITS),
        ty=dequantize_uniform(qa.ty, -t_max, t_max, T_BITS),
    )


def clamped_params(d: DecomposedAffine, t_max: float) -> tuple[str, ...]:
    """Names of parameters the 48-bit quantizer would clamp."""
    out = []
    for name, value, (lo, hi) in (
        ("r1", d.r1, R_RANGE),
        ("r2", d.r2, R_RANGE),
        ("q", d.q, Q_RANGE),
        ("phi", d.phi, PHI_RANGE),
        ("tx", d.tx, (-t_max, t_max)),
        ("ty", d.ty, (-t_max, t_max)),
    ):
        if value < lo or value > hi:
            out.append(name)
    return tuple(out)
