"""Exception types shared across the codec."""


class KpcodecError(Exception):
    """Base class for all codec errors."""


class DegenerateTransform(KpcodecError):
    """Affine matrix cannot be decomposed (near-zero determinant or first row)."""


class InvalidDecomposition(KpcodecError):
    """Decomposed parameters violate r1 > 0 or r1*r2 > 0."""


class MissingDescriptors(KpcodecError):
    """Matching was asked to run on features without descriptors."""


class ScaleOutOfRange(KpcodecError):
    """Scale lies outside the representable octave/intra-scale lattice."""


class InsufficientSamples(KpcodecError):
    """Not enough training samples for the requested quantizer."""


class LocationOutOfGrid(KpcodecError):
    """Quantized location falls outside the occupancy grid."""


class ResidualOutOfRange(KpcodecError):
    """Inter residual component outside its coded alphabet."""


class FeatureFileError(KpcodecError):
    """Feature text file does not parse.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EncodeError(KpcodecError):
    """Encoder input violates a stream precondition.

    Carries the failing frame index when one is known.
    """

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


class CorruptStream(KpcodecError):
    """Bitstream cannot be decoded.

    bit_offset locates the failure relative to the start of the stream.
    """

    def __init__(self, message, bit_offset=None):
        if bit_offset is not None:
            message = f"{message} (bit offset {bit_offset})"
        super().__init__(message)
        self.bit_offset = bit_offset
