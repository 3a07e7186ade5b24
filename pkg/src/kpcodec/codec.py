"""Bitstream assembly: stream header, frame records, encoder, decoder.

Layout lives in FORMAT.md.  The header carries every value that affects
decoding; fields with fractional values travel as fixed point (f as
Q8.8, sigma0 and the codebook levels as Q16.16), and the encoder runs
on the roundtripped values so its prediction state matches the
decoder's bit for bit.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .entropy import (
    BitReader,
    BitWriter,
    decode_inter_residuals,
    decode_locations,
    decode_modes,
    encode_inter_residuals,
    encode_locations,
    encode_modes,
    MODE_DROP,
    MODE_INTER,
    MODE_SKIP,
)
from .entropy.residuals import InterResidual
from .errors import CorruptStream, EncodeError
from .framecontrol import (
    BufferEntry,
    CodecState,
    apply_inter_update,
    assign_modes,
    plan_frame_types,
    s_frame_update,
)
from .geometry import (
    AFFINE_CODE_BITS,
    PHI_BITS,
    Q_BITS,
    QuantizedAffine,
    R_BITS,
    T_BITS,
    clamped_params,
    decompose,
    dequantize_affine,
    estimate_keypoint,
    quantize_affine,
)
from .kpquant import (
    LloydMaxCodebook,
    QuantizedLocation,
    ScaleCode,
    code_orientation,
    code_scale,
    decode_orientation,
    decode_scale,
    dequantize_location,
    grid_shape,
    quantize_location,
    train_lloyd_max,
)
from .matching import nndr_match, ransac_affine
from .model import (
    Feature,
    FrameFeatures,
    FrameType,
    Keypoint,
    StreamConfig,
    validate_frames,
    wrap_theta,
)

MAGIC = b"KPC1"
VERSION = 1
HEADER_BITS = 296

_Q8_8 = 256
_Q16_16 = 65536


def _to_q(value: float, scale: int) -> int:
    return round(value * scale)


def _from_q(raw: int, scale: int) -> float:
    return raw / scale


def _signed(raw: int, bits: int) -> int:
    half = 1 << (bits - 1)
    return raw - (1 << bits) if raw >= half else raw


@dataclass(frozen=True)
class StreamHeader:
    """Decoded header; fractional fields already converted from fixed point."""

    width: int
    height: int
    n_frames: int
    max_features: int
    f: float
    theta_bits: int
    t_max: int
    epsilon: float        # informative: encoder's S-frame threshold
    ns: int               # informative: encoder's stability window
    sigma0: float
    codebook: LloydMaxCodebook
    context_range: int
    table_id: int = 0     # 0 = fresh adaptive counts; others reserved

    def to_config(self) -> StreamConfig:
        return StreamConfig(
            epsilon=self.epsilon,
            ns=self.ns,
            f=self.f,
            theta_bits=self.theta_bits,
            t_max=self.t_max,
            max_features=self.max_features,
            sigma0=self.sigma0,
            context_range=self.context_range,
        )


def effective_config(config: StreamConfig) -> StreamConfig:
    """Config with every header-borne value roundtripped through its
    fixed-point representation, so encode-side arithmetic agrees with
    what a decoder reads back."""
    return dataclasses.replace(
        config,
        f=_from_q(_to_q(config.f, _Q8_8), _Q8_8),
        epsilon=_from_q(_to_q(config.epsilon, 10000), 10000),
        sigma0=_from_q(_to_q(config.sigma0, _Q16_16), _Q16_16),
    )


def roundtrip_codebook(codebook: LloydMaxCodebook) -> LloydMaxCodebook:
    levels = tuple(
        _from_q(_to_q(v, _Q16_16), _Q16_16) for v in codebook.levels
    )
    return LloydMaxCodebook(levels=levels)


def write_header(
    w: BitWriter,
    config: StreamConfig,
    codebook: LloydMaxCodebook,
    width: int,
    height: int,
    n_frames: int,
) -> None:
    """Write the 296-bit header; config and codebook must already be
    fixed-point roundtripped (effective_config / roundtrip_codebook)."""
    for byte in MAGIC:
        w.write_bits(byte, 8)
    w.write_bits(VERSION, 8)
    w.write_bits(width, 16)
    w.write_bits(height, 16)
    w.write_bits(n_frames, 32)
    w.write_bits(config.max_features, 16)
    w.write_bits(_to_q(config.f, _Q8_8), 16)
    w.write_bits(config.theta_bits, 8)
    w.write_bits(config.t_max, 16)
    w.write_bits(_to_q(config.epsilon, 10000), 16)
    w.write_bits(config.ns, 8)
    w.write_bits(_to_q(config.sigma0, _Q16_16), 32)
    for level in codebook.levels:
        w.write_bits(_to_q(level, _Q16_16) & 0xFFFFFFFF, 32)
    w.write_bits(config.context_range, 8)
    w.write_bits(0, 8)  # table id: fresh adaptive counts


def read_header(r: BitReader) -> StreamHeader:
    magic = bytes(r.read_bits(8) for _ in range(4))
    if magic != MAGIC:
        raise CorruptStream(f"bad magic {magic!r}", bit_offset=0)
    version = r.read_bits(8)
    if version != VERSION:
        raise CorruptStream(f"unsupported version {version}", bit_offset=32)
    width = r.read_bits(16)
    height = r.read_bits(16)
    n_frames = r.read_bits(32)
    max_features = r.read_bits(16)
    f = _from_q(r.read_bits(16), _Q8_8)
    theta_bits = r.read_bits(8)
    t_max = r.read_bits(16)
    epsilon = _from_q(r.read_bits(16), 10000)
    ns = r.read_bits(8)
    sigma0 = _from_q(r.read_bits(32), _Q16_16)
    levels = tuple(
        _from_q(_signed(r.read_bits(32), 32), _Q16_16) for _ in range(2)
    )
    context_range = r.read_bits(8)
    table_id = r.read_bits(8)
    if width <= 0 or height <= 0:
        raise CorruptStream("frame dimensions must be positive", bit_offset=r.position)
    if f <= 0:
        raise CorruptStream("location factor f must be positive", bit_offset=r.position)
    if not 1 <= theta_bits <= 16:
        raise CorruptStream(f"theta_bits {theta_bits} out of range", bit_offset=r.position)
    if t_max < 1:
        raise CorruptStream("t_max must be >= 1", bit_offset=r.position)
    if context_range < 1:
        raise CorruptStream("context_range must be >= 1", bit_offset=r.position)
    if table_id != 0:
        raise CorruptStream(f"unknown context table id {table_id}", bit_offset=r.position)
    try:
        codebook = LloydMaxCodebook(levels=levels)
    except ValueError as e:
        raise CorruptStream(str(e), bit_offset=r.position) from e
    return StreamHeader(
        width=width,
        height=height,
        n_frames=n_frames,
        max_features=max_features,
        f=f,
        theta_bits=theta_bits,
        t_max=t_max,
        epsilon=epsilon,
        ns=ns,
        sigma0=sigma0,
        codebook=codebook,
        context_range=context_range,
        table_id=table_id,
    )


# ---------------------------------------------------------------------------
# Default offset codebook.  Trained once on a deterministic corpus of
# normalized scale offsets matching what the synthetic harness produces
# (uniform sub-step detector jitter around the lattice).

_CODEBOOK_SEED = 2016
_CODEBOOK_OFFSET_RANGE = 0.03
_CODEBOOK_SAMPLES = 4096


def scale_offset_corpus(
    n: int = _CODEBOOK_SAMPLES,
    offset_range: float = _CODEBOOK_OFFSET_RANGE,
    seed: int = _CODEBOOK_SEED,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-offset_range, offset_range, size=n)


@functools.lru_cache(maxsize=1)
def default_scale_codebook() -> LloydMaxCodebook:
    return train_lloyd_max(scale_offset_corpus(), levels=2)


# ---------------------------------------------------------------------------
# Frame records.


def _write_affine(w: BitWriter, qa: QuantizedAffine) -> None:
    w.write_bits(qa.r1, R_BITS)
    w.write_bits(qa.r2, R_BITS)
    w.write_bits(qa.q, Q_BITS)
    w.write_bits(qa.phi, PHI_BITS)
    w.write_bits(qa.tx, T_BITS)
    w.write_bits(qa.ty, T_BITS)


def _read_affine(r: BitReader) -> QuantizedAffine:
    return QuantizedAffine(
        r1=r.read_bits(R_BITS),
        r2=r.read_bits(R_BITS),
        q=r.read_bits(Q_BITS),
        phi=r.read_bits(PHI_BITS),
        tx=r.read_bits(T_BITS),
        ty=r.read_bits(T_BITS),
    )


def intra_keypoint(
    gx: int,
    gy: int,
    scale: ScaleCode,
    orient: int,
    config: StreamConfig,
    codebook: LloydMaxCodebook,
) -> Keypoint:
    """The keypoint a decoder reconstructs from one intra record."""
    x, y = dequantize_location(QuantizedLocation(gx=gx, gy=gy), config.f)
    return Keypoint(
        x=x,
        y=y,
        sigma=decode_scale(scale, codebook, config.sigma0),
        theta=wrap_theta(decode_orientation(orient, config.theta_bits)),
    )


@dataclass
class _IntraBlock:
    cells: list[tuple[int, int]]
    scales: list[ScaleCode]
    orients: list[int]
    keypoints: list[Keypoint]     # decoded, raster order
    source_idx: list[int]         # input feature index per kept cell


def _build_intra(
    features: list[tuple[int, Feature]],
    config: StreamConfig,
    codebook: LloydMaxCodebook,
    width: int,
    height: int,
) -> _IntraBlock:
    """Quantize features for intra coding.

    Features sharing a grid cell collapse to the first one in input
    order; the survivors come back in raster order, which is also the
    order their 12-bit payloads take in the record.
    """
    gw, _ = grid_shape(width, height, config.f)
    chosen: dict[int, tuple[int, Feature]] = {}
    for idx, feat in features:
        g = quantize_location(feat.keypoint, config.f, width, height)
        key = g.gy * gw + g.gx
        if key not in chosen:
            chosen[key] = (idx, feat)
    block = _IntraBlock([], [], [], [], [])
    for key in sorted(chosen):
        idx, feat = chosen[key]
        gy, gx = divmod(key, gw)
        kp = feat.keypoint
        sc = code_scale(kp.sigma, codebook, config.sigma0)
        e = code_orientation(wrap_theta(kp.theta), config.theta_bits)
        block.cells.append((gx, gy))
        block.scales.append(sc)
        block.orients.append(e)
        block.keypoints.append(intra_keypoint(gx, gy, sc, e, config, codebook))
        block.source_idx.append(idx)
    return block


def _write_segment(w: BitWriter, seg: BitWriter, frame_pos: int, what: str) -> None:
    if seg.bit_count > 0xFFFF:
        raise EncodeError(f"{what} payload exceeds the 16-bit length field", frame_pos)
    w.write_bits(seg.bit_count, 16)
    w.extend(seg)


def _write_intra_payload(w: BitWriter, block: _IntraBlock, config: StreamConfig) -> None:
    for sc, e in zip(block.scales, block.orients):
        w.write_bits(sc.octave, 3)
        w.write_bits(sc.intra, 2)
        w.write_bits(sc.offset_bit, 1)
        w.write_bits(e, config.theta_bits)


def _read_intra_payload(
    r: BitReader, count: int, config: StreamConfig
) -> list[tuple[ScaleCode, int]]:
    out = []
    for _ in range(count):
        sc = ScaleCode(
            octave=r.read_bits(3),
            intra=r.read_bits(2),
            offset_bit=r.read_bits(1),
        )
        out.append((sc, r.read_bits(config.theta_bits)))
    return out


# ---------------------------------------------------------------------------
# Encoder.


@dataclass
class FrameStats:
    """One report row; the data behind per-frame bit budget figures."""

    position: int                 # position in the stream, 0-based
    frame_index: int              # caller-supplied frame id
    frame_type: FrameType
    bits: int
    n_keypoints: int              # decoder buffer size after this frame
    n_matches: int = 0
    n_skip: int = 0
    n_inter: int = 0
    n_drop: int = 0
    n_intra: int = 0
    n_merged: int = 0             # features lost to grid-cell collisions
    n_clamped: int = 0            # affine params clamped by the 48-bit code
    clamped: tuple[str, ...] = ()

    @property
    def type_name(self) -> str:
        return self.frame_type.name


@dataclass
class EncodeReport:
    frames: list[FrameStats] = field(default_factory=list)
    header_bits: int = HEADER_BITS

    @property
    def total_bits(self) -> int:
        return self.header_bits + sum(fs.bits for fs in self.frames)

    @property
    def total_bytes(self) -> int:
        return (self.total_bits + 7) // 8

    def type_counts(self) -> dict[str, int]:
        counts = {t.name: 0 for t in FrameType}
        for fs in self.frames:
            counts[fs.frame_type.name] += 1
        return counts


@dataclass
class EncodeResult:
    data: bytes
    report: EncodeReport


class _MatchCache:
    """NNDR matches between frame pairs, computed once per pair."""

    def __init__(self, frames: Sequence[FrameFeatures], threshold: float):
        self._frames = frames
        self._threshold = threshold
        self._store: dict[tuple[int, int], list] = {}

    def get(self, a: int, b: int) -> list:
        key = (a, b)
        if key not in self._store:
            self._store[key] = nndr_match(
                self._frames[a], self._frames[b], self._threshold
            )
        return self._store[key]


def _consecutive_fits(
    frames: Sequence[FrameFeatures], config: StreamConfig, cache: _MatchCache
) -> list:
    """Robust affine between each consecutive pair; index i maps frame
    i-1 onto frame i.  Entry 0 is always None."""
    fits = [None]
    for i in range(1, len(frames)):
        matches = cache.get(i - 1, i)
        rng = np.random.default_rng((config.seed, i))
        fits.append(
            ransac_affine(
                matches,
                frames[i - 1],
                frames[i],
                rng=rng,
                tol=config.ransac_tol,
                max_iters=config.ransac_max_iters,
                min_inliers=config.ransac_min_inliers,
                confidence=config.ransac_confidence,
            )
        )
    return fits


def _plan_types(
    frames: Sequence[FrameFeatures],
    config: StreamConfig,
    fits: list,
    cache: _MatchCache,
) -> list[FrameType]:
    n = len(frames)
    if config.scheme == "all_d":
        return [FrameType.D] * n
    if config.scheme == "d_plus_u":
        return [FrameType.D] + [
            FrameType.U if fits[i] is not None else FrameType.D for i in range(1, n)
        ]

    def classify(idx: int, anchor_idx: Optional[int]) -> FrameType:
        if anchor_idx is None or not frames[anchor_idx].features:
            return FrameType.D
        if fits[idx] is None:
            return FrameType.D
        n_matches = len(cache.get(anchor_idx, idx))
        if n_matches >= config.epsilon * len(frames[anchor_idx].features):
            return FrameType.S
        return FrameType.U

    return plan_frame_types(n, config.ns, classify)


def encode_stream(
    frames: Sequence[FrameFeatures],
    config: StreamConfig | None = None,
    codebook: LloydMaxCodebook | None = None,
) -> EncodeResult:
    """Encode a feature sequence into a .kpb bitstream.

    Frame types are planned first over the whole sequence (the stability
    window needs up to ns frames of lookahead), then records are coded
    in order against the running prediction state.
    """
    config = config or StreamConfig()
    config.validate()
    frames = list(frames)
    validate_frames(frames, config)

    cfg = effective_config(config)
    codebook = roundtrip_codebook(codebook or default_scale_codebook())

    width, height = frames[0].width, frames[0].height
    if len(frames) > 0xFFFFFFFF:
        raise EncodeError("too many frames for the 32-bit frame count")

    needs_matching = cfg.scheme in ("full", "d_plus_u")
    cache = _MatchCache(frames, cfg.nndr_threshold)
    fits = _consecutive_fits(frames, cfg, cache) if needs_matching else [None] * len(frames)
    plan = _plan_types(frames, cfg, fits, cache)

    w = BitWriter()
    write_header(w, cfg, codebook, width, height, len(frames))
    state = CodecState(config=cfg)
    report = EncodeReport()

    for pos, (frame, ftype) in enumerate(zip(frames, plan)):
        before = w.bit_count
        if ftype == FrameType.D:
            stats = _encode_d(w, pos, frame, state, cfg, codebook)
        elif ftype == FrameType.S:
            stats = _encode_s(w, pos, frame, state, cfg, fits[pos])
        elif ftype == FrameType.U:
            stats = _encode_u(w, pos, frame, state, cfg, codebook, fits[pos])
        else:
            w.write_bits(int(FrameType.N), 2)
            stats = FrameStats(
                position=pos,
                frame_index=frame.frame_index,
                frame_type=FrameType.N,
                bits=0,
                n_keypoints=len(state.buffer),
            )
        stats.bits = w.bit_count - before
        report.frames.append(stats)

    return EncodeResult(data=w.to_bytes(), report=report)


def _encode_d(
    w: BitWriter,
    pos: int,
    frame: FrameFeatures,
    state: CodecState,
    cfg: StreamConfig,
    codebook: LloydMaxCodebook,
) -> FrameStats:
    block = _build_intra(
        list(enumerate(frame.features)), cfg, codebook, frame.width, frame.height
    )
    w.write_bits(int(FrameType.D), 2)
    w.write_bits(len(block.cells), 16)
    gw, gh = grid_shape(frame.width, frame.height, cfg.f)
    seg = encode_locations(block.cells, gw, gh, cfg.context_range)
    _write_segment(w, seg, pos, "location")
    _write_intra_payload(w, block, cfg)

    state.buffer = [
        BufferEntry(kp=kp, anchor_idx=si)
        for kp, si in zip(block.keypoints, block.source_idx)
    ]
    state.anchor = frame
    return FrameStats(
        position=pos,
        frame_index=frame.frame_index,
        frame_type=FrameType.D,
        bits=0,
        n_keypoints=len(state.buffer),
        n_intra=len(block.cells),
        n_merged=len(frame.features) - len(block.cells),
    )


def _encode_s(
    w: BitWriter,
    pos: int,
    frame: FrameFeatures,
    state: CodecState,
    cfg: StreamConfig,
    fit,
) -> FrameStats:
    if fit is None:
        raise EncodeError("S-frame without a motion fit", pos)
    d = decompose(fit.transform)
    qa = quantize_affine(d, cfg.t_max)
    w.write_bits(int(FrameType.S), 2)
    _write_affine(w, qa)
    s_frame_update(state, dequantize_affine(qa, cfg.t_max))
    clamped = clamped_params(d, cfg.t_max)
    return FrameStats(
        position=pos,
        frame_index=frame.frame_index,
        frame_type=FrameType.S,
        bits=0,
        n_keypoints=len(state.buffer),
        n_matches=len(fit.inliers),
        n_clamped=len(clamped),
        clamped=clamped,
    )


def _encode_u(
    w: BitWriter,
    pos: int,
    frame: FrameFeatures,
    state: CodecState,
    cfg: StreamConfig,
    codebook: LloydMaxCodebook,
    fit,
) -> FrameStats:
    if fit is None:
        raise EncodeError("U-frame without a motion fit", pos)
    d = decompose(fit.transform)
    qa = quantize_affine(d, cfg.t_max)
    dq = dequantize_affine(qa, cfg.t_max)
    ma = assign_modes(frame, state, dq)
    block = _build_intra(ma.intra, cfg, codebook, frame.width, frame.height)

    w.write_bits(int(FrameType.U), 2)
    _write_affine(w, qa)
    w.write_bits(len(ma.modes), 16)
    if ma.modes:
        _write_segment(w, encode_modes(ma.modes), pos, "mode")
    w.write_bits(len(ma.residuals), 16)
    if ma.residuals:
        _write_segment(w, encode_inter_residuals(ma.residuals), pos, "residual")
    w.write_bits(len(block.cells), 16)
    if block.cells:
        gw, gh = grid_shape(frame.width, frame.height, cfg.f)
        seg = encode_locations(block.cells, gw, gh, cfg.context_range)
        _write_segment(w, seg, pos, "location")
        _write_intra_payload(w, block, cfg)

    state.buffer = [
        BufferEntry(kp=kp, anchor_idx=ci) for kp, ci in ma.kept
    ] + [
        BufferEntry(kp=kp, anchor_idx=si)
        for kp, si in zip(block.keypoints, block.source_idx)
    ]
    state.anchor = frame
    clamped = clamped_params(d, cfg.t_max)
    return FrameStats(
        position=pos,
        frame_index=frame.frame_index,
        frame_type=FrameType.U,
        bits=0,
        n_keypoints=len(state.buffer),
        n_matches=ma.n_matched,
        n_skip=ma.modes.count(MODE_SKIP),
        n_inter=ma.modes.count(MODE_INTER),
        n_drop=ma.modes.count(MODE_DROP),
        n_intra=len(block.cells),
        n_merged=len(ma.intra) - len(block.cells),
        n_clamped=len(clamped),
        clamped=clamped,
    )


# ---------------------------------------------------------------------------
# Decoder.


@dataclass
class DecodedFrame:
    position: int
    frame_type: FrameType
    keypoints: list[Keypoint]


@dataclass
class DecodedStream:
    header: StreamHeader
    frames: list[DecodedFrame]

    @property
    def width(self) -> int:
        return self.header.width

    @property
    def height(self) -> int:
        return self.header.height


def decode_stream(data: bytes) -> DecodedStream:
    """Decode a .kpb bitstream back into per-frame keypoint sets.

    N-frames decode to empty sets: their content was never coded.  The
    prediction buffer still carries across them so a later S- or U-frame
    stays decodable.
    """
    reader = BitReader(data)
    header = read_header(reader)
    cfg = header.to_config()
    codebook = header.codebook
    gw, gh = grid_shape(header.width, header.height, cfg.f)

    buffer: list[Keypoint] = []
    frames: list[DecodedFrame] = []
    for pos in range(header.n_frames):
        at = reader.position
        raw = reader.read_bits(2)
        ftype = FrameType(raw)
        if ftype == FrameType.D:
            buffer = _decode_d(reader, cfg, codebook, gw, gh)
            frames.append(DecodedFrame(pos, ftype, list(buffer)))
        elif ftype == FrameType.S:
            dq = dequantize_affine(_read_affine(reader), cfg.t_max)
            buffer = [estimate_keypoint(kp, dq) for kp in buffer]
            frames.append(DecodedFrame(pos, ftype, list(buffer)))
        elif ftype == FrameType.U:
            buffer = _decode_u(reader, cfg, codebook, gw, gh, buffer, header, at)
            frames.append(DecodedFrame(pos, ftype, list(buffer)))
        else:
            frames.append(DecodedFrame(pos, ftype, []))
    return DecodedStream(header=header, frames=frames)


def _decode_d(
    reader: BitReader,
    cfg: StreamConfig,
    codebook: LloydMaxCodebook,
    gw: int,
    gh: int,
) -> list[Keypoint]:
    count = reader.read_bits(16)
    loc_len = reader.read_bits(16)
    sub = reader.sub_reader(loc_len)
    cells = decode_locations(sub, gw, gh, cfg.context_range)
    if len(cells) != count:
        raise CorruptStream(
            f"location payload holds {len(cells)} cells, record says {count}",
            bit_offset=reader.position,
        )
    codes = _read_intra_payload(reader, count, cfg)
    return [
        intra_keypoint(gx, gy, sc, e, cfg, codebook)
        for (gx, gy), (sc, e) in zip(cells, codes)
    ]


@dataclass
class RecordInfo:
    """Shape of one frame record, recovered without decoding payloads."""

    position: int
    frame_type: FrameType
    bits: int
    fields: dict[str, int] = field(default_factory=dict)


def skim_stream(data: bytes) -> tuple[StreamHeader, list[RecordInfo]]:
    """Walk the records using only counts and length prefixes.

    Entropy-coded payloads are skipped, not decoded, so this stays fast
    on long streams and works as a structural integrity check.
    """
    reader = BitReader(data)
    header = read_header(reader)
    per_intra = 6 + header.theta_bits
    records = []
    for pos in range(header.n_frames):
        start = reader.position
        ftype = FrameType(reader.read_bits(2))
        fields: dict[str, int] = {}
        if ftype == FrameType.D:
            fields["count"] = reader.read_bits(16)
            fields["loc_len"] = reader.read_bits(16)
            reader.skip(fields["loc_len"] + fields["count"] * per_intra)
        elif ftype == FrameType.S:
            reader.skip(AFFINE_CODE_BITS)
        elif ftype == FrameType.U:
            reader.skip(AFFINE_CODE_BITS)
            fields["modes"] = reader.read_bits(16)
            if fields["modes"]:
                fields["mode_len"] = reader.read_bits(16)
                reader.skip(fields["mode_len"])
            fields["residuals"] = reader.read_bits(16)
            if fields["residuals"]:
                fields["resid_len"] = reader.read_bits(16)
                reader.skip(fields["resid_len"])
            fields["intra"] = reader.read_bits(16)
            if fields["intra"]:
                fields["loc_len"] = reader.read_bits(16)
                reader.skip(fields["loc_len"] + fields["intra"] * per_intra)
        records.append(
            RecordInfo(position=pos, frame_type=ftype,
                       bits=reader.position - start, fields=fields)
        )
    return header, records


def _decode_u(
    reader: BitReader,
    cfg: StreamConfig,
    codebook: LloydMaxCodebook,
    gw: int,
    gh: int,
    buffer: list[Keypoint],
    header: StreamHeader,
    record_start: int,
) -> list[Keypoint]:
    dq = dequantize_affine(_read_affine(reader), cfg.t_max)
    mode_count = reader.read_bits(16)
    if mode_count != len(buffer):
        raise CorruptStream(
            f"mode count {mode_count} does not match buffer size {len(buffer)}",
            bit_offset=record_start,
        )
    modes: list[int] = []
    if mode_count:
        mode_len = reader.read_bits(16)
        modes = decode_modes(reader.sub_reader(mode_len), mode_count)
    resid_count = reader.read_bits(16)
    n_inter = sum(1 for m in modes if m == MODE_INTER)
    if resid_count != n_inter:
        raise CorruptStream(
            f"residual count {resid_count} does not match {n_inter} inter modes",
            bit_offset=record_start,
        )
    residuals: list[InterResidual] = []
    if resid_count:
        resid_len = reader.read_bits(16)
        residuals = decode_inter_residuals(reader.sub_reader(resid_len), resid_count)

    new_buffer: list[Keypoint] = []
    ri = 0
    for kp, mode in zip(buffer, modes):
        est = estimate_keypoint(kp, dq)
        if mode == MODE_SKIP:
            new_buffer.append(est)
        elif mode == MODE_INTER:
            new_buffer.append(
                apply_inter_update(
                    est, residuals[ri], cfg.f, header.width, header.height, cfg.theta_bits
                )
            )
            ri += 1
        # MODE_DROP: the keypoint leaves the buffer.

    intra_count = reader.read_bits(16)
    if intra_count:
        loc_len = reader.read_bits(16)
        cells = decode_locations(reader.sub_reader(loc_len), gw, gh, cfg.context_range)
        if len(cells) != intra_count:
            raise CorruptStream(
                f"location payload holds {len(cells)} cells, record says {intra_count}",
                bit_offset=reader.position,
            )
        codes = _read_intra_payload(reader, intra_count, cfg)
        new_buffer.extend(
            intra_keypoint(gx, gy, sc, e, cfg, codebook)
            for (gx, gy), (sc, e) in zip(cells, codes)
        )
    return new_buffer
