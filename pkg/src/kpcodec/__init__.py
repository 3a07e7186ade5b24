"""kpcodec: low-bitrate coding of keypoint streams for video features.

Encodes per-frame keypoint sets (location, scale, orientation) as a
compact side-information bitstream: full sets travel rarely, most
frames are represented by a 48-bit global motion code or a couple of
bits, and the decoder reconstructs keypoints by carrying a buffer
through the coded motion.
"""

from .codec import (
    DecodedFrame,
    DecodedStream,
    EncodeReport,
    EncodeResult,
    FrameStats,
    StreamHeader,
    decode_stream,
    default_scale_codebook,
    encode_stream,
    skim_stream,
)
from .errors import (
    CorruptStream,
    DegenerateTransform,
    EncodeError,
    FeatureFileError,
    InsufficientSamples,
    InvalidDecomposition,
    KpcodecError,
    LocationOutOfGrid,
    MissingDescriptors,
    ResidualOutOfRange,
    ScaleOutOfRange,
)
from .model import (
    AffineTransform,
    DecomposedAffine,
    Feature,
    FrameFeatures,
    FrameType,
    Keypoint,
    StreamConfig,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "CorruptStream",
    "DecodedFrame",
    "DecodedStream",
    "DecomposedAffine",
    "DegenerateTransform",
    "EncodeError",
    "EncodeReport",
    "EncodeResult",
    "Feature",
    "FeatureFileError",
    "FrameFeatures",
    "FrameStats",
    "FrameType",
    "InsufficientSamples",
    "InvalidDecomposition",
    "Keypoint",
    "KpcodecError",
    "LocationOutOfGrid",
    "MissingDescriptors",
    "ResidualOutOfRange",
    "ScaleOutOfRange",
    "StreamConfig",
    "StreamHeader",
    "decode_stream",
    "default_scale_codebook",
    "encode_stream",
    "skim_stream",
    "__version__",
]
