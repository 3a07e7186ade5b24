"""Context-adaptive coding of quantized keypoint locations.

Locations are coded as a binary occupancy grid scanned in raster order.
The context for each cell is the occupied count over the previous
`context_range` scanned cells (clamped to context_range - 1), so dense
neighborhoods and empty stretches each get sharp statistics.  All
contexts start from uniform counts of 1 and adapt online; a pre-trained
count table may replace the uniform start on both ends.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import LocationOutOfGrid
from .arith import AdaptiveModel, ArithDecoder, ArithEncoder
from .bits import BitReader, BitWriter

CONTEXT_RANGE = 49


def _make_models(context_range: int, table: np.ndarray | None) -> list[AdaptiveModel]:
    if table is None:
        return [AdaptiveModel(2) for _ in range(context_range)]
    table = np.asarray(table)
    if table.shape != (context_range, 2):
        raise ValueError(f"context table must have shape ({context_range}, 2)")
    return [AdaptiveModel(2, counts=[int(c0), int(c1)]) for c0, c1 in table]


def encode_locations(
    cells: list[tuple[int, int]],
    grid_w: int,
    grid_h: int,
    context_range: int = CONTEXT_RANGE,
    table: np.ndarray | None = None,
) -> BitWriter:
    """Arithmetic-code an occupancy grid; cells are unique (gx, gy) pairs.

    Returns the coded segment as a standalone BitWriter.
    """
    occ = np.zeros(grid_w * grid_h, dtype=np.uint8)
    for gx, gy in cells:
        if not (0 <= gx < grid_w and 0 <= gy < grid_h):
            raise LocationOutOfGrid(f"cell ({gx}, {gy}) outside {grid_w}x{grid_h} grid")
        occ[gy * grid_w + gx] = 1

    # Causal window sums are context indices; computable up front on the
    # encoder side since they depend only on already-scanned cells.
    csum = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(occ, dtype=np.int64)])
    upto = np.arange(grid_w * grid_h)
    lo = np.maximum(upto - context_range, 0)
    ctx = np.minimum(csum[upto] - csum[lo], context_range - 1).tolist()

    models = _make_models(context_range, table)
    enc = ArithEncoder()
    encode_symbol = enc.encode_symbol
    for i, bit in enumerate(occ.tolist()):
        encode_symbol(models[ctx[i]], bit)
    enc.finish()
    return enc.writer


def decode_locations(
    reader: BitReader,
    grid_w: int,
    grid_h: int,
    context_range: int = CONTEXT_RANGE,
    table: np.ndarray | None = None,
) -> list[tuple[int, int]]:
    """Decode occupied cells in raster scan order from a coded segment."""
    models = _make_models(context_range, table)
    dec = ArithDecoder(reader)
    window: deque[int] = deque()
    wsum = 0
    cells: list[tuple[int, int]] = []
    for i in range(grid_w * grid_h):
        ctx = wsum if wsum < context_range - 1 else context_range - 1
        bit = dec.decode(models[ctx])
        if bit:
            cells.append((i % grid_w, i // grid_w))
        window.append(bit)
        wsum += bit
        if len(window) > context_range:
            wsum -= window.popleft()
    return cells
