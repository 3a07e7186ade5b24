"""Bit-level I/O and entropy coding for the stream payloads."""

from .bits import BitReader, BitWriter
from .arith import AdaptiveModel, ArithDecoder, ArithEncoder
from .locations import decode_locations, encode_locations
from .residuals import (
    MODE_DROP,
    MODE_INTER,
    MODE_SKIP,
    decode_inter_residuals,
    decode_modes,
    encode_inter_residuals,
    encode_modes,
)

__all__ = [
    "BitReader",
    "BitWriter",
    "AdaptiveModel",
    "ArithEncoder",
    "ArithDecoder",
    "encode_locations",
    "decode_locations",
    "encode_inter_residuals",
    "decode_inter_residuals",
    "encode_modes",
    "decode_modes",
    "MODE_SKIP",
    "MODE_INTER",
    "MODE_DROP",
]
