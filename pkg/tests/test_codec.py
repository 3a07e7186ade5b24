import numpy as np
import pytest

from conftest import make_frame
from kpcodec.codec import (
    HEADER_BITS,
    decode_stream,
    default_scale_codebook,
    effective_config,
    encode_stream,
    intra_keypoint,
    read_header,
    roundtrip_codebook,
    scale_offset_corpus,
    skim_stream,
    write_header,
)
from kpcodec.entropy.bits import BitReader, BitWriter
from kpcodec.entropy.locations import encode_locations
from kpcodec.entropy.residuals import MODE_SKIP, encode_modes
from kpcodec.errors import CorruptStream, EncodeError, ScaleOutOfRange
from kpcodec.geometry import (
    estimate_keypoint,
    decompose,
    dequantize_affine,
    quantize_affine,
)
from kpcodec.kpquant import SIGMA0, LloydMaxCodebook, ScaleCode
from kpcodec.model import (
    AffineTransform,
    Feature,
    FrameFeatures,
    FrameType,
    Keypoint,
    StreamConfig,
)

CFG = effective_config(StreamConfig())
CB = roundtrip_codebook(default_scale_codebook())


def assemble_bits(fields):
    """Independent MSB-first assembly: (value, width) pairs to bytes."""
    acc = 0
    total = 0
    for value, width in fields:
        acc = (acc << width) | (value & ((1 << width) - 1))
        total += width
    pad = (-total) % 8
    return ((acc << pad).to_bytes((total + pad) // 8, "big")), total


def header_bytes(width=160, height=120, n_frames=50, cfg=CFG, cb=CB):
    fields = [
        (ord("K"), 8), (ord("P"), 8), (ord("C"), 8), (ord("1"), 8),
        (1, 8),
        (width, 16), (height, 16),
        (n_frames, 32),
        (cfg.max_features, 16),
        (round(cfg.f * 256), 16),
        (cfg.theta_bits, 8),
        (cfg.t_max, 16),
        (round(cfg.epsilon * 10000), 16),
        (cfg.ns, 8),
        (round(cfg.sigma0 * 65536), 32),
        (round(cb.levels[0] * 65536), 32),
        (round(cb.levels[1] * 65536), 32),
        (cfg.context_range, 8),
        (0, 8),
    ]
    data, total = assemble_bits(fields)
    assert total == HEADER_BITS
    return data


# --- header -----------------------------------------------------------------


def test_header_layout_golden():
    w = BitWriter()
    write_header(w, CFG, CB, 160, 120, 50)
    assert w.bit_count == HEADER_BITS == 296
    assert w.to_bytes() == header_bytes()


def test_header_roundtrip():
    cfg = effective_config(StreamConfig(
        f=2.5, theta_bits=8, t_max=120, epsilon=0.75, ns=7,
        max_features=500, sigma0=1.6, context_range=17,
    ))
    cb = roundtrip_codebook(LloydMaxCodebook((-0.022, 0.018)))
    w = BitWriter()
    write_header(w, cfg, cb, 1920, 1080, 123456, )
    h = read_header(BitReader(w.to_bytes()))
    assert (h.width, h.height, h.n_frames) == (1920, 1080, 123456)
    assert h.max_features == 500
    assert h.f == cfg.f
    assert h.theta_bits == 8
    assert h.t_max == 120
    assert h.epsilon == cfg.epsilon
    assert h.ns == 7
    assert h.sigma0 == cfg.sigma0
    assert h.codebook.levels == cb.levels
    assert h.context_range == 17
    assert h.table_id == 0


def test_effective_config_is_a_fixed_point():
    for cfg in (StreamConfig(), StreamConfig(f=3.3, epsilon=0.77, sigma0=1.9)):
        once = effective_config(cfg)
        assert effective_config(once) == once
    assert effective_config(StreamConfig()).sigma0 == 132114 / 65536
    assert effective_config(StreamConfig()).f == 1.0
    assert effective_config(StreamConfig()).epsilon == 0.8


def test_default_codebook_frozen_values():
    raw = default_scale_codebook()
    assert raw.levels == pytest.approx(
        (-0.014880339492806488, 0.015207946267567801), abs=1e-12
    )
    rt = roundtrip_codebook(raw)
    assert rt.levels == (-0.0148773193359375, 0.0152130126953125)
    assert roundtrip_codebook(rt).levels == rt.levels
    # The corpus behind it is deterministic.
    assert np.array_equal(scale_offset_corpus(), scale_offset_corpus())


@pytest.mark.parametrize(
    "mutate,offset_hint",
    [
        (lambda b: b"X" + b[1:], "magic"),
        (lambda b: b[:4] + b"\x02" + b[5:], "version"),
        (lambda b: b[:5] + b"\x00\x00" + b[7:], "width"),
        (lambda b: b[:15] + b"\x00\x00" + b[17:], "f"),
        (lambda b: b[:17] + b"\x00" + b[18:], "theta_bits"),
        (lambda b: b[:18] + b"\x00\x00" + b[20:], "t_max"),
        (lambda b: b[:27] + b[31:35] + b[31:], "codebook order"),
        (lambda b: b[:35] + b"\x00" + b[36:], "context_range"),
        (lambda b: b[:36] + b"\x07", "table_id"),
        (lambda b: b[:20], "truncation"),
    ],
)
def test_corrupt_headers_rejected(mutate, offset_hint):
    data = header_bytes()
    with pytest.raises(CorruptStream) as exc:
        decode_stream(mutate(data))
    assert exc.value.bit_offset is not None


# --- hand-built streams -----------------------------------------------------


def d_record_bits(cells, scale_codes, orients, cfg=CFG, gw=64, gh=48):
    w = BitWriter()
    w.write_bits(int(FrameType.D), 2)
    w.write_bits(len(cells), 16)
    seg = encode_locations(cells, gw, gh, cfg.context_range)
    w.write_bits(seg.bit_count, 16)
    w.extend(seg)
    for sc, e in zip(scale_codes, orients):
        w.write_bits(sc.octave, 3)
        w.write_bits(sc.intra, 2)
        w.write_bits(sc.offset_bit, 1)
        w.write_bits(e, cfg.theta_bits)
    return w


def test_n_frames_decode_to_empty_sets_at_two_bits_each():
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 4)
    d = d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17])
    w.extend(d)
    for _ in range(3):
        w.write_bits(int(FrameType.N), 2)
    total_bits = HEADER_BITS + d.bit_count + 3 * 2
    data = w.to_bytes()
    assert len(data) == (total_bits + 7) // 8

    out = decode_stream(data)
    assert [fr.frame_type for fr in out.frames] == [
        FrameType.D, FrameType.N, FrameType.N, FrameType.N
    ]
    assert out.frames[0].keypoints == [
        intra_keypoint(3, 2, ScaleCode(2, 1, 1), 17, CFG, CB)
    ]
    assert all(fr.keypoints == [] for fr in out.frames[1:])
    assert (out.width, out.height) == (64, 48)

    header, records = skim_stream(data)
    assert [r.frame_type for r in records] == [
        FrameType.D, FrameType.N, FrameType.N, FrameType.N
    ]
    assert [r.bits for r in records[1:]] == [2, 2, 2]
    assert records[0].fields == {"count": 1, "loc_len": d.bit_count - 2 - 16 - 16 - 12}


def test_buffer_survives_n_frames_for_a_later_s():
    # The planner never emits S right after N, but the format allows it
    # and the decoder must carry its buffer across the gap.
    qa = quantize_affine(
        decompose(AffineTransform(a=1, b=0, c=0, d=1, tx=2.0, ty=-1.0)), CFG.t_max
    )
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 3)
    w.extend(d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17]))
    w.write_bits(int(FrameType.N), 2)
    w.write_bits(int(FrameType.S), 2)
    for value, bits in ((qa.r1, 7), (qa.r2, 7), (qa.q, 7),
                        (qa.phi, 9), (qa.tx, 9), (qa.ty, 9)):
        w.write_bits(value, bits)

    out = decode_stream(w.to_bytes())
    assert out.frames[1].keypoints == []
    kp0 = intra_keypoint(3, 2, ScaleCode(2, 1, 1), 17, CFG, CB)
    expected = estimate_keypoint(kp0, dequantize_affine(qa, CFG.t_max))
    assert out.frames[2].keypoints == [expected]


def test_d_count_mismatch_is_corrupt():
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 1)
    bad = d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17])
    # Rewrite the record with an inflated count but the same 1-cell payload.
    w.write_bits(int(FrameType.D), 2)
    w.write_bits(2, 16)
    seg = encode_locations([(3, 2)], 64, 48, CFG.context_range)
    w.write_bits(seg.bit_count, 16)
    w.extend(seg)
    w.write_bits(0, 24)  # stand-in payload bits
    del bad
    with pytest.raises(CorruptStream):
        decode_stream(w.to_bytes())


def test_u_mode_count_mismatch_is_corrupt():
    qa = quantize_affine(
        decompose(AffineTransform(a=1, b=0, c=0, d=1, tx=0, ty=0)), CFG.t_max
    )
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 2)
    w.extend(d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17]))
    w.write_bits(int(FrameType.U), 2)
    for value, bits in ((qa.r1, 7), (qa.r2, 7), (qa.q, 7),
                        (qa.phi, 9), (qa.tx, 9), (qa.ty, 9)):
        w.write_bits(value, bits)
    w.write_bits(5, 16)  # buffer holds exactly one keypoint
    with pytest.raises(CorruptStream, match="mode count"):
        decode_stream(w.to_bytes())


def test_u_residual_count_mismatch_is_corrupt():
    qa = quantize_affine(
        decompose(AffineTransform(a=1, b=0, c=0, d=1, tx=0, ty=0)), CFG.t_max
    )
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 2)
    w.extend(d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17]))
    w.write_bits(int(FrameType.U), 2)
    for value, bits in ((qa.r1, 7), (qa.r2, 7), (qa.q, 7),
                        (qa.phi, 9), (qa.tx, 9), (qa.ty, 9)):
        w.write_bits(value, bits)
    w.write_bits(1, 16)
    seg = encode_modes([MODE_SKIP])
    w.write_bits(seg.bit_count, 16)
    w.extend(seg)
    w.write_bits(1, 16)  # one residual claimed, zero inter modes
    with pytest.raises(CorruptStream, match="residual count"):
        decode_stream(w.to_bytes())


def test_truncated_stream_is_corrupt():
    w = BitWriter()
    write_header(w, CFG, CB, 64, 48, 1)
    w.extend(d_record_bits([(3, 2)], [ScaleCode(2, 1, 1)], [17]))
    data = w.to_bytes()
    with pytest.raises(CorruptStream):
        decode_stream(data[: len(data) - 2])


# --- full encode/decode -----------------------------------------------------


def tracked_sequence():
    """Eight frames exercising all four record types.

    Twenty tracked features pan slowly; frame 3 loses six of them and
    gains six new ones (U); frames 6 and 7 are unrelated scenes, so 6
    cannot gather stable successors and collapses to N.
    """
    rng = np.random.default_rng(123)
    width, height = 100, 80

    def fresh(n):
        return [
            (float(x), float(y), float(SIGMA0 * 2 ** rng.uniform(0, 3)),
             float(rng.uniform(-4.0, 1.0)), rng.standard_normal(32))
            for x, y in zip(rng.uniform(12, 82, n), rng.uniform(12, 62, n))
        ]

    def spread(items):
        # Push apart entries whose rounded locations would collide.
        placed = []
        for x, y, s, t, d in items:
            while any(round(x) == round(px) and round(y) == round(py)
                      for px, py in placed):
                x += 2.0
            placed.append((x, y))
            yield x, y, s, t, d

    def frame(idx, items, shift):
        feats = [
            Feature(
                keypoint=Keypoint(x=x + shift[0], y=y + shift[1], sigma=s, theta=t),
                descriptor=d,
            )
            for x, y, s, t, d in items
        ]
        return FrameFeatures(frame_index=idx, width=width, height=height,
                             features=feats)

    base = list(spread(fresh(20)))
    keep = base[:14]
    joined = list(spread(keep + fresh(6)))
    scene_c = list(spread(fresh(20)))
    scene_e = list(spread(fresh(20)))

    frames = [
        frame(0, base, (0.0, 0.0)),
        frame(1, base, (1.2, -0.8)),
        frame(2, base, (2.4, -1.6)),
        frame(3, joined, (3.6, -2.4)),
        frame(4, joined, (4.8, -3.2)),
        frame(5, joined, (6.0, -4.0)),
        frame(6, scene_c, (0.0, 0.0)),
        frame(7, scene_e, (0.0, 0.0)),
    ]
    return frames


@pytest.fixture(scope="module")
def tracked_result():
    frames = tracked_sequence()
    cfg = StreamConfig(ns=2, epsilon=0.8)
    return frames, cfg, encode_stream(frames, cfg)


def test_plan_covers_all_record_types(tracked_result):
    _, _, result = tracked_result
    types = [fs.frame_type for fs in result.report.frames]
    assert types == [
        FrameType.D, FrameType.S, FrameType.S,
        FrameType.U, FrameType.S, FrameType.S,
        FrameType.N, FrameType.D,
    ]
    counts = result.report.type_counts()
    assert (counts["D"], counts["S"], counts["U"], counts["N"]) == (2, 4, 1, 1)


def test_encode_is_deterministic(tracked_result):
    frames, cfg, result = tracked_result
    again = encode_stream(frames, cfg)
    assert again.data == result.data


def test_report_accounts_for_every_bit(tracked_result):
    _, _, result = tracked_result
    report = result.report
    assert report.total_bits == HEADER_BITS + sum(fs.bits for fs in report.frames)
    assert report.total_bytes == len(result.data)
    padding = len(result.data) * 8 - report.total_bits
    assert 0 <= padding < 8
    assert report.frames[6].bits == 2  # the N record


def test_decoded_structure_matches_report(tracked_result):
    _, _, result = tracked_result
    out = decode_stream(result.data)
    assert len(out.frames) == 8
    for fs, fr in zip(result.report.frames, out.frames):
        assert fr.frame_type == fs.frame_type
        if fs.frame_type == FrameType.N:
            assert fr.keypoints == []
        else:
            assert len(fr.keypoints) == fs.n_keypoints


def test_skim_agrees_with_report(tracked_result):
    _, _, result = tracked_result
    header, records = skim_stream(result.data)
    assert header.n_frames == 8
    assert [r.frame_type for r in records] == [
        fs.frame_type for fs in result.report.frames
    ]
    assert [r.bits for r in records] == [fs.bits for fs in result.report.frames]
    u = records[3]
    stats = result.report.frames[3]
    assert u.fields["modes"] == 20
    assert u.fields["residuals"] == stats.n_inter
    assert u.fields["intra"] == stats.n_intra


def test_u_frame_bookkeeping(tracked_result):
    _, _, result = tracked_result
    stats = result.report.frames[3]
    assert stats.n_skip + stats.n_inter + stats.n_drop == 20
    assert stats.n_drop >= 6          # the six vanished features
    assert stats.n_intra >= 6         # the six new ones
    assert stats.n_keypoints == stats.n_skip + stats.n_inter + stats.n_intra


def test_decoded_d_frame_matches_quantized_input(tracked_result):
    frames, _, result = tracked_result
    out = decode_stream(result.data)
    from kpcodec.kpquant import (
        code_orientation,
        code_scale,
        quantize_location,
    )
    from kpcodec.model import wrap_theta

    expected = {}
    for f in frames[0].features:
        kp = f.keypoint
        g = quantize_location(kp, CFG.f, 100, 80)
        if (g.gx, g.gy) in expected:
            continue
        sc = code_scale(kp.sigma, CB, CFG.sigma0)
        e = code_orientation(wrap_theta(kp.theta), CFG.theta_bits)
        expected[(g.gx, g.gy)] = intra_keypoint(g.gx, g.gy, sc, e, CFG, CB)
    got = out.frames[0].keypoints
    assert len(got) == len(expected)
    ordered = [expected[k] for k in sorted(expected, key=lambda c: (c[1], c[0]))]
    assert got == ordered


def test_alternative_schemes_encode_and_decode(tracked_result):
    frames, _, _ = tracked_result
    for scheme, allowed in (
        ("all_d", {FrameType.D}),
        ("d_plus_u", {FrameType.D, FrameType.U}),
    ):
        result = encode_stream(frames, StreamConfig(scheme=scheme))
        types = {fs.frame_type for fs in result.report.frames}
        assert types <= allowed
        out = decode_stream(result.data)
        for fs, fr in zip(result.report.frames, out.frames):
            assert len(fr.keypoints) == fs.n_keypoints


def test_custom_codebook_rides_in_the_header(tracked_result):
    frames, _, _ = tracked_result
    cb = LloydMaxCodebook((-0.02, 0.02))
    result = encode_stream(frames[:1], StreamConfig(), codebook=cb)
    out = decode_stream(result.data)
    assert out.header.codebook.levels == roundtrip_codebook(cb).levels


def test_encode_rejects_bad_input():
    with pytest.raises(EncodeError):
        encode_stream([], StreamConfig())
    big = make_frame(0, [(10.0 + i, 10.0) for i in range(30)], rng=np.random.default_rng(1))
    with pytest.raises(EncodeError):
        encode_stream([big], StreamConfig(max_features=10))


def test_out_of_lattice_scale_raises():
    frame = make_frame(0, [(50.0, 50.0, 5000.0, 0.0)], rng=np.random.default_rng(2))
    with pytest.raises(ScaleOutOfRange):
        encode_stream([frame], StreamConfig(scheme="all_d"))
