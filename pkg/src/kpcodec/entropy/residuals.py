"""Coding of U-frame mode symbols and inter residuals.

One mode symbol per buffered keypoint (skip / inter / drop) under an
adaptive 3-symbol model, then for every inter keypoint the residual
quadruple: location deltas in [-16, 16], a 5-level scale-ratio index
and an orientation index delta in [-4, 4].  All models reset per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ResidualOutOfRange
from .arith import AdaptiveModel, ArithDecoder, ArithEncoder
from .bits import BitReader, BitWriter

MODE_SKIP = 0
MODE_INTER = 1
MODE_DROP = 2

DELTA_MAX = 16             # per-axis location delta bound, grid cells
SCALE_LEVELS = 5           # uniform levels over +-0.3 relative scale change
SCALE_REL_MAX = 0.3
SCALE_NEUTRAL_INDEX = 2    # index for "no scale change"
DTHETA_MAX = 4             # orientation index delta bound


@dataclass(frozen=True)
class InterResidual:
    """Quantized corrections applied on top of an estimated keypoint."""

    dx: int
    dy: int
    scale_idx: int
    dtheta_idx: int
    prev_ref: int = 0      # buffer position; implicit in the stream order

    def __post_init__(self):
        if abs(self.dx) > DELTA_MAX or abs(self.dy) > DELTA_MAX:
            raise ResidualOutOfRange(f"location delta ({self.dx}, {self.dy})")
        if not (0 <= self.scale_idx < SCALE_LEVELS):
            raise ResidualOutOfRange(f"scale index {self.scale_idx}")
        if abs(self.dtheta_idx) > DTHETA_MAX:
            raise ResidualOutOfRange(f"orientation delta {self.dtheta_idx}")


def scale_ratio_index(rel_change: float) -> int:
    """Index of the nearest of 5 uniform levels over [-0.3, 0.3]."""
    idx = round((rel_change + SCALE_REL_MAX) / (2 * SCALE_REL_MAX) * (SCALE_LEVELS - 1))
    return min(max(idx, 0), SCALE_LEVELS - 1)


def scale_ratio_level(index: int) -> float:
    return -SCALE_REL_MAX + index * (2 * SCALE_REL_MAX) / (SCALE_LEVELS - 1)


def encode_modes(modes: list[int]) -> BitWriter:
    model = AdaptiveModel(3)
    enc = ArithEncoder()
    for m in modes:
        if m not in (MODE_SKIP, MODE_INTER, MODE_DROP):
            raise ValueError(f"invalid mode symbol {m}")
        enc.encode_symbol(model, m)
    enc.finish()
    return enc.writer


def decode_modes(reader: BitReader, count: int) -> list[int]:
    model = AdaptiveModel(3)
    dec = ArithDecoder(reader)
    return [dec.decode(model) for _ in range(count)]


def _models() -> tuple[AdaptiveModel, ...]:
    return (
        AdaptiveModel(2 * DELTA_MAX + 1),
        AdaptiveModel(2 * DELTA_MAX + 1),
        AdaptiveModel(SCALE_LEVELS),
        AdaptiveModel(2 * DTHETA_MAX + 1),
    )


def encode_inter_residuals(residuals: list[InterResidual]) -> BitWriter:
    mdx, mdy, msc, mth = _models()
    enc = ArithEncoder()
    for r in residuals:
        enc.encode_symbol(mdx, r.dx + DELTA_MAX)
        enc.encode_symbol(mdy, r.dy + DELTA_MAX)
        enc.encode_symbol(msc, r.scale_idx)
        enc.encode_symbol(mth, r.dtheta_idx + DTHETA_MAX)
    enc.finish()
    return enc.writer


def decode_inter_residuals(reader: BitReader, count: int) -> list[InterResidual]:
    # Model alphabets bound every component, so the constructor cannot
    # reject a decoded residual; prev_ref gets filled by the caller.
    mdx, mdy, msc, mth = _models()
    dec = ArithDecoder(reader)
    return [
        InterResidual(
            dx=dec.decode(mdx) - DELTA_MAX,
            dy=dec.decode(mdy) - DELTA_MAX,
            scale_idx=dec.decode(msc),
            dtheta_idx=dec.decode(mth) - DTHETA_MAX,
            prev_ref=i,
        )
        for i in range(count)
    ]
