"""Keypoint component quantizers.

Intra-coded keypoints spend 12 bits beyond their grid location: a
6-bit scale code (3-bit octave, 2-bit intra-scale, 1-bit trained
offset) and a 6-bit orientation code.  Locations snap to a uniform
pixel grid of cell size f and travel separately through the occupancy
coder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, ScaleOutOfRange
from .model import Keypoint

SIGMA0 = 2.0159          # scale of the lattice origin (octave 0, intra-scale 0)
OCTAVES = 8              # 3-bit octave index
INTRA_SCALES = 3         # 2-bit index, only 0..2 used
THETA_BITS = 6

SCALE_CODE_BITS = 6      # octave(3) + intra(2) + offset bit(1)
ORIENT_CODE_BITS = THETA_BITS
INTRA_CODE_BITS = SCALE_CODE_BITS + ORIENT_CODE_BITS  # 12


@dataclass(frozen=True)
class QuantizedLocation:
    gx: int
    gy: int


@dataclass(frozen=True)
class ScaleCode:
    octave: int       # 0..7
    intra: int        # 0..2
    offset_bit: int   # selects one of the two trained offset levels

    def __post_init__(self):
        if not 0 <= self.octave < OCTAVES:
            raise ValueError(f"octave {self.octave} outside 0..{OCTAVES - 1}")
        if not 0 <= self.intra < INTRA_SCALES:
            raise ValueError(f"intra index {self.intra} outside 0..{INTRA_SCALES - 1}")
        if self.offset_bit not in (0, 1):
            raise ValueError(f"offset bit must be 0 or 1, got {self.offset_bit}")


def grid_shape(width: int, height: int, f: float) -> tuple[int, int]:
    """Occupancy grid dimensions (gw, gh) for a frame."""
    return math.ceil(width / f), math.ceil(height / f)


def quantize_location(
    kp: Keypoint, f: float, width: int | None = None, height: int | None = None
) -> QuantizedLocation:
    """Snap a location to the grid: g = round(l / f).

    When frame bounds are given the cell is clamped into the grid, so
    estimated locations that drift past the border stay codable.
    """
    gx = round(kp.x / f)
    gy = round(kp.y / f)
    if width is not None:
        gw, gh = grid_shape(width, height, f)
        gx = min(max(gx, 0), gw - 1)
        gy = min(max(gy, 0), gh - 1)
    return QuantizedLocation(gx=gx, gy=gy)


def dequantize_location(gl: QuantizedLocation, f: float) -> tuple[float, float]:
    return f * gl.gx, f * gl.gy


# ---------------------------------------------------------------------------
# Scale: nearest point of the lattice sigma0 * 2**(o + s/3), then one
# trained bit for the normalized offset that remains.


def lattice_sigma(octave: int, intra: int, sigma0: float = SIGMA0) -> float:
    return sigma0 * 2.0 ** (octave + intra / 3.0)


@dataclass(frozen=True)
class LloydMaxCodebook:
    """Reconstruction levels of a trained scalar quantizer (strictly increasing)."""

    levels: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError("codebook needs at least two levels")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must strictly increase, got {self.levels}")

    def quantize_index(self, value: float) -> int:
        """Index of the nearest level (ties go to the lower index)."""
        best = 0
        best_err = abs(value - self.levels[0])
        for i, lv in enumerate(self.levels[1:], start=1):
            err = abs(value - lv)
            if err < best_err:
                best, best_err = i, err
        return best

    def mse(self, samples: np.ndarray) -> float:
        samples = np.asarray(samples, dtype=float)
        d = np.abs(samples[:, None] - np.asarray(self.levels)[None, :])
        return float(np.mean(np.min(d, axis=1) ** 2))


def _nearest_lattice(sigma: float, sigma0: float) -> tuple[int, float]:
    """Flattened lattice index minimizing the normalized offset |sigma - L| / L.

    The search runs over the 24 representable points plus one virtual
    point on each side; winning a virtual point means the scale is out
    of range.
    """
    n = OCTAVES * INTRA_SCALES
    best_k = 0
    best_err = math.inf
    # In-range points first so boundary ties resolve inside the lattice.
    for k in list(range(n)) + [-1, n]:
        lat = sigma0 * 2.0 ** (k // 3 + (k % 3) / 3.0)
        err = abs(sigma - lat) / lat
        if err < best_err:
            best_k, best_err = k, err
    return best_k, best_err


def code_scale(sigma: float, codebook: LloydMaxCodebook, sigma0: float = SIGMA0) -> ScaleCode:
    """Code a scale as nearest lattice point plus one offset bit.

    Nearest is measured on the normalized offset (sigma - L) / L, found
    by exhaustive search over all 24 lattice points.  Raises
    ScaleOutOfRange when a lattice point outside the index ranges would
    win that search.
    """
    if not sigma > 0:
        raise ScaleOutOfRange(f"sigma must be positive, got {sigma}")
    k, _ = _nearest_lattice(sigma, sigma0)
    if k < 0 or k >= OCTAVES * INTRA_SCALES:
        raise ScaleOutOfRange(f"sigma {sigma} outside the lattice")
    octave, intra = divmod(k, INTRA_SCALES)
    lat = lattice_sigma(octave, intra, sigma0)
    offset = (sigma - lat) / lat
    return ScaleCode(octave=octave, intra=intra, offset_bit=codebook.quantize_index(offset))


def decode_scale(code: ScaleCode, codebook: LloydMaxCodebook, sigma0: float = SIGMA0) -> float:
    lat = lattice_sigma(code.octave, code.intra, sigma0)
    return lat * (1.0 + codebook.levels[code.offset_bit])


def train_lloyd_max(samples, levels: int = 2, tol: float = 1e-8, max_iters: int = 1000):
    """Train a Lloyd-Max scalar quantizer.

    Alternates nearest-level partition and centroid update until the MSE
    improves by less than tol.  Initial levels sit at the samples'
    quantile midpoints, which makes training deterministic.  As a guard
    against a poor local minimum the same iteration is also run from
    uniform (range-split) initial levels and the better codebook wins;
    ties keep the quantile start.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 2 * levels:
        raise InsufficientSamples(
            f"need at least {2 * levels} samples, got {samples.size}"
        )
    if np.unique(samples).size < levels:
        raise InsufficientSamples(
            f"need at least {levels} distinct sample values"
        )

    quantile_init = np.quantile(samples, (np.arange(levels) + 0.5) / levels)
    lo, hi = float(samples.min()), float(samples.max())
    uniform_init = lo + (hi - lo) * (np.arange(levels) + 0.5) / levels

    best = None
    for init in (quantile_init, uniform_init):
        trained, mse = _lloyd_iterate(samples, np.array(init, dtype=float), tol, max_iters)
        if best is None or mse < best[1]:
            best = (trained, mse)
    return LloydMaxCodebook(levels=tuple(float(v) for v in best[0]))


def _lloyd_iterate(samples, levels, tol, max_iters):
    levels = np.sort(levels)
    # Collapse duplicate initial levels by spreading over the sample range.
    if np.any(np.diff(levels) <= 0):
        lo, hi = samples.min(), samples.max()
        levels = lo + (hi - lo) * (np.arange(levels.size) + 0.5) / levels.size
    prev_mse = math.inf
    for _ in range(max_iters):
        bounds = (levels[:-1] + levels[1:]) / 2.0
        cells = np.searchsorted(bounds, samples)
        new_levels = levels.copy()
        for i in range(levels.size):
            members = samples[cells == i]
            if members.size:
                new_levels[i] = members.mean()
        new_levels = np.sort(new_levels)
        d = np.abs(samples[:, None] - new_levels[None, :])
        mse = float(np.mean(np.min(d, axis=1) ** 2))
        levels = new_levels
        if prev_mse - mse < tol:
            break
        prev_mse = mse
    return levels, mse


# ---------------------------------------------------------------------------
# Orientation: uniform code over one full turn with a 0.75 offset so the
# canonical interval [-1.5*pi, 0.5*pi) maps onto [0, 1).


def code_orientation(theta: float, bits: int = THETA_BITS) -> int:
    """E = round((theta / 2pi + 0.75) * (2**bits - 1)); expects wrapped theta."""
    levels = (1 << bits) - 1
    e = round((theta / (2.0 * math.pi) + 0.75) * levels)
    return min(max(e, 0), levels)


def decode_orientation(code: int, bits: int = THETA_BITS) -> float:
    levels = (1 << bits) - 1
    return (code / levels - 0.75) * 2.0 * math.pi


def pack_intra_code(scale: ScaleCode, orient: int) -> int:
    """Pack scale and orientation into the 12-bit intra payload."""
    return (
        (scale.octave << 9)
        | (scale.intra << 7)
        | (scale.offset_bit << 6)
        | orient
    )


def unpack_intra_code(value: int) -> tuple[ScaleCode, int]:
    octave = (value >> 9) & 0x7
    intra = (value >> 7) & 0x3
    offset = (value >> 6) & 0x1
    orient = value & 0x3F
    return ScaleCode(octave=octave, intra=intra, offset_bit=offset), orient
