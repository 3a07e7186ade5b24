"""Shipping criteria, one test each.

Every test ends with a printed PASS line carrying the measured numbers,
so `pytest -s tests/test_acceptance.py` doubles as a compliance report.
Tolerances are stated inline next to each assertion.
"""

import math

import numpy as np
import pytest

from kpcodec.codec import (
    decode_stream,
    default_scale_codebook,
    effective_config,
    encode_stream,
    intra_keypoint,
    roundtrip_codebook,
    skim_stream,
)
from kpcodec.entropy.arith import AdaptiveModel, ArithDecoder, ArithEncoder
from kpcodec.entropy.bits import BitReader, BitWriter
from kpcodec.entropy.locations import encode_locations
from kpcodec.entropy.residuals import (
    DELTA_MAX,
    DTHETA_MAX,
    MODE_DROP,
    MODE_INTER,
    MODE_SKIP,
    InterResidual,
    decode_inter_residuals,
    decode_modes,
    encode_inter_residuals,
    encode_modes,
)
from kpcodec.framecontrol import BufferEntry, CodecState, assign_modes
from kpcodec.geometry import (
    PHI_BITS,
    PHI_RANGE,
    Q_BITS,
    R_BITS,
    T_BITS,
    decompose,
    dequantize_affine,
    quantize_affine,
    recompose,
)
from kpcodec.harness import SyntheticScene, evaluate
from kpcodec.harness.oracles import ideal_adaptive_bits, ideal_occupancy_bits
from kpcodec.kpquant import (
    code_orientation,
    code_scale,
    decode_orientation,
    grid_shape,
    lattice_sigma,
    quantize_location,
    train_lloyd_max,
)
from kpcodec.harness.oracles import quantizer_mse, uniform_two_level
from kpcodec.matching import MatchPair
from kpcodec.model import (
    AffineTransform,
    DecomposedAffine,
    Feature,
    FrameFeatures,
    FrameType,
    Keypoint,
    StreamConfig,
    wrap_theta,
)

THETA_LEVELS = 63  # 2^6 - 1 orientation steps

AFFINE_FIELDS = (R_BITS, R_BITS, Q_BITS, PHI_BITS, T_BITS, T_BITS)


@pytest.fixture(scope="module")
def steady_run():
    """Default zero-noise pan: the estimation-fidelity workload."""
    seq = SyntheticScene().generate()
    result = encode_stream(seq.frames)
    decoded = decode_stream(result.data)
    metrics = evaluate(seq.truth, [df.keypoints for df in decoded.frames])
    return result, metrics


@pytest.fixture(scope="module")
def cut_run():
    """A cut every second frame: nothing can satisfy the stability window."""
    seq = SyntheticScene(n_frames=24, n_features=20, seed=12,
                         cut_every=2).generate()
    return encode_stream(seq.frames, StreamConfig(ns=4))


def test_criterion_01_record_bit_costs(steady_run, cut_run):
    # Hand-assembled golden records.
    w = BitWriter()
    w.write_bits(int(FrameType.S), 2)
    qa = quantize_affine(
        DecomposedAffine(r1=1.01, r2=0.99, q=0.01, phi=0.02, tx=1.5, ty=-0.5),
        t_max=64,
    )
    for value, bits in zip(
        (qa.r1, qa.r2, qa.q, qa.phi, qa.tx, qa.ty), AFFINE_FIELDS
    ):
        w.write_bits(value, bits)
    assert w.bit_count == 50  # exact

    n = BitWriter()
    n.write_bits(int(FrameType.N), 2)
    assert n.bit_count == 2  # exact

    # Every coded S and N record in real streams costs the same.
    result, _ = steady_run
    s_bits = {fs.bits for fs in result.report.frames if fs.type_name == "S"}
    assert s_bits == {50}
    n_bits = {fs.bits for fs in cut_run.report.frames if fs.type_name == "N"}
    assert n_bits == {2}
    _, records = skim_stream(cut_run.data)
    assert {r.bits for r in records if r.frame_type == FrameType.N} == {2}
    print("\nPASS 1: S records are 50 bits, N records are 2 bits (exact)")


def test_criterion_02_affine_code_is_48_bits():
    assert AFFINE_FIELDS == (7, 7, 7, 9, 9, 9)
    assert sum(AFFINE_FIELDS) == 48  # exact
    d = DecomposedAffine(r1=1.04, r2=0.97, q=-0.02, phi=0.1, tx=12.3, ty=-7.7)
    qa = quantize_affine(d, t_max=64)
    w = BitWriter()
    for value, bits in zip(
        (qa.r1, qa.r2, qa.q, qa.phi, qa.tx, qa.ty), AFFINE_FIELDS
    ):
        w.write_bits(value, bits)
    assert w.bit_count == 48
    r = BitReader(w.to_bytes(), length=48)
    back = [r.read_bits(bits) for bits in AFFINE_FIELDS]
    assert back == [qa.r1, qa.r2, qa.q, qa.phi, qa.tx, qa.ty]
    print("PASS 2: affine side information packs to exactly 48 bits (7/7/7/9/9/9)")


def test_criterion_03_decomposition_identity():
    rng = np.random.default_rng(2016)
    worst = 0.0
    tried = 0
    while tried < 10_000:
        a, b, c, d = rng.uniform(-2.0, 2.0, size=4)
        if abs(a * d - b * c) < 1e-3 or (a == 0.0 and b == 0.0):
            continue
        tried += 1
        tx, ty = rng.uniform(-50, 50, size=2)
        m = AffineTransform(a=a, b=b, c=c, d=d, tx=tx, ty=ty)
        back = recompose(decompose(m))
        worst = max(
            worst,
            abs(back.a - a), abs(back.b - b), abs(back.c - c),
            abs(back.d - d), abs(back.tx - tx), abs(back.ty - ty),
        )
    assert worst <= 1e-9  # tolerance 1e-9 over 10^4 matrices

    # Closed forms hold exactly.
    ident = decompose(AffineTransform(a=1, b=0, c=0, d=1, tx=0, ty=0))
    assert (ident.r1, ident.r2, ident.q, ident.phi) == (1.0, 1.0, 0.0, 0.0)
    phi = math.pi / 2
    rot = decompose(AffineTransform(a=math.cos(phi), b=math.sin(phi),
                                    c=-math.sin(phi), d=math.cos(phi),
                                    tx=0, ty=0))
    assert (rot.r1, rot.r2, rot.q, rot.phi) == (1.0, 1.0, 0.0, phi)
    scaled = decompose(AffineTransform(a=2.0, b=0, c=0, d=0.5, tx=0, ty=0))
    assert (scaled.r1, scaled.r2, scaled.q, scaled.phi) == (2.0, 0.5, 0.0, 0.0)
    print(f"PASS 3: recompose(decompose(A)) max error {worst:.2e} <= 1e-9; "
          "closed forms exact")


def test_criterion_04_estimation_fidelity(steady_run):
    result, metrics = steady_run
    types = [fs.type_name for fs in result.report.frames]
    assert types[0] == "D"
    assert set(types[1:]) == {"S"}  # 100% S after the first frame

    assert metrics.surviving_fraction == 1.0
    assert metrics.loc_rmse <= 1.5  # px; RMSE bounds the mean from above
    assert metrics.scale_rel_max <= 0.02
    phi_half_step = 0.5 * (PHI_RANGE[1] - PHI_RANGE[0]) / (2**PHI_BITS - 1)
    theta_bound = 2.0 * math.pi / THETA_LEVELS + phi_half_step
    assert metrics.theta_max <= theta_bound
    print(f"PASS 4: 49/49 S frames, surviving 1.0, loc rmse "
          f"{metrics.loc_rmse:.3f} px <= 1.5, scale {metrics.scale_rel_max:.4f} "
          f"<= 0.02, theta {metrics.theta_max:.4f} <= {theta_bound:.4f}")


def _random_frame(rng, idx, width, height):
    n = int(rng.integers(3, 14))
    feats = []
    for _ in range(n):
        octave = int(rng.integers(0, 8))
        intra = int(rng.integers(0, 3))
        sigma = lattice_sigma(octave, intra) * (1.0 + rng.uniform(-0.03, 0.03))
        feats.append(Feature(
            keypoint=Keypoint(
                x=float(rng.uniform(0, width - 1e-9)),
                y=float(rng.uniform(0, height - 1e-9)),
                sigma=float(sigma),
                theta=float(rng.uniform(-1.5 * math.pi, 0.5 * math.pi)),
            ),
            descriptor=None,
        ))
    return FrameFeatures(frame_index=idx, width=width, height=height,
                         features=feats)


def _intra_oracle(frame, cfg, codebook):
    """Quantize a frame the way the decoder will see it, independently
    of the record writer: cell dedupe, raster order, per-field codes."""
    gw, _ = grid_shape(frame.width, frame.height, cfg.f)
    chosen = {}
    for feat in frame.features:
        g = quantize_location(feat.keypoint, cfg.f, frame.width, frame.height)
        key = g.gy * gw + g.gx
        if key not in chosen:
            chosen[key] = feat.keypoint
    return [
        intra_keypoint(
            key % gw,
            key // gw,
            code_scale(chosen[key].sigma, codebook, cfg.sigma0),
            code_orientation(chosen[key].theta, cfg.theta_bits),
            cfg,
            codebook,
        )
        for key in sorted(chosen)
    ]


def test_criterion_05_entropy_round_trip():
    rng = np.random.default_rng(77)
    cfg = effective_config(StreamConfig(scheme="all_d"))
    codebook = roundtrip_codebook(default_scale_codebook())
    sizes = ((16, 12), (24, 18), (32, 24))
    n_frames = 0
    for stream_idx in range(100):
        width, height = sizes[stream_idx % len(sizes)]
        frames = [_random_frame(rng, i, width, height) for i in range(100)]
        decoded = decode_stream(
            encode_stream(frames, StreamConfig(scheme="all_d")).data
        )
        for frame, df in zip(frames, decoded.frames):
            assert df.keypoints == _intra_oracle(frame, cfg, codebook)
        n_frames += len(frames)
    assert n_frames == 10_000

    # Mode and residual payloads survive the coder bit-exactly.
    for _ in range(300):
        count = int(rng.integers(1, 40))
        modes = [int(m) for m in rng.integers(0, 3, size=count)]
        w = encode_modes(modes)
        r = BitReader(w.to_bytes(), length=w.bit_count, pad=True)
        assert decode_modes(r, count) == modes

        residuals = [
            InterResidual(
                dx=int(rng.integers(-DELTA_MAX, DELTA_MAX + 1)),
                dy=int(rng.integers(-DELTA_MAX, DELTA_MAX + 1)),
                scale_idx=int(rng.integers(0, 5)),
                dtheta_idx=int(rng.integers(-DTHETA_MAX, DTHETA_MAX + 1)),
                prev_ref=i,
            )
            for i in range(count)
        ]
        w = encode_inter_residuals(residuals)
        r = BitReader(w.to_bytes(), length=w.bit_count, pad=True)
        assert decode_inter_residuals(r, count) == residuals

    # Coder efficiency: within 2 bits of the model's sequential entropy
    # on skewed sources.
    gaps = []
    for num_symbols, weights in ((2, (0.94, 0.06)), (4, (0.85, 0.09, 0.04, 0.02))):
        symbols = [int(s) for s in
                   rng.choice(num_symbols, size=4000, p=weights)]
        enc = ArithEncoder()
        model = AdaptiveModel(num_symbols)
        for s in symbols:
            enc.encode_symbol(model, s)
        enc.finish()
        gap = enc.writer.bit_count - ideal_adaptive_bits(symbols, num_symbols)
        assert gap <= 2.0
        gaps.append(gap)

    cells = sorted({(int(rng.integers(0, 40)), int(rng.integers(0, 30)))
                    for _ in range(25)})
    w = encode_locations(cells, 40, 30)
    occ_gap = w.bit_count - ideal_occupancy_bits(cells, 40, 30)
    assert occ_gap <= 2.0
    print(f"PASS 5: 10^4 frames decode bit-exactly; coder overhead "
          f"{max(gaps + [occ_gap]):.2f} bits <= 2")


def test_criterion_06_orientation_quantizer():
    for code in range(64):
        theta = decode_orientation(code)
        assert code_orientation(theta) == code  # all 64 fixed points

    worst = 0.0
    n = 100_000
    for i in range(n + 1):
        theta = -1.5 * math.pi + 2.0 * math.pi * i / n
        back = decode_orientation(code_orientation(theta))
        err = abs((theta - back + math.pi) % (2.0 * math.pi) - math.pi)
        worst = max(worst, err)
    assert worst <= math.pi / THETA_LEVELS
    print(f"PASS 6: 64/64 codes are fixed points, sweep error "
          f"{worst:.6f} <= pi/63 = {math.pi / THETA_LEVELS:.6f}")


def test_criterion_07_frame_type_economics():
    seq = SyntheticScene(dx=1.2, dy=0.2, rotation=0.001, seed=9).generate()
    bits = {}
    for scheme in ("all_d", "d_plus_u", "full"):
        result = encode_stream(seq.frames, StreamConfig(scheme=scheme))
        bits[scheme] = result.report.total_bits
        if scheme == "full":
            counts = result.report.type_counts()
    s_fraction = counts["S"] / len(seq.frames)
    assert s_fraction >= 0.9  # the slow-scene premise
    assert bits["full"] <= bits["all_d"] / 10
    assert bits["all_d"] > bits["d_plus_u"] > bits["full"]
    print(f"PASS 7: S fraction {s_fraction:.2f}; bits all_d {bits['all_d']} "
          f"> d_plus_u {bits['d_plus_u']} > full {bits['full']} "
          f"(ratio {bits['all_d'] / bits['full']:.1f}x >= 10x)")


def test_criterion_08_unstable_regions_cost_two_bits(cut_run):
    types = [fs.type_name for fs in cut_run.report.frames]
    # No stability window survives a cut every 2 frames, so everything
    # before the final pair demotes to N; the stream tail commits D+S.
    assert types == ["N"] * 22 + ["D", "S"]
    for fs in cut_run.report.frames[:22]:
        assert fs.bits == 2  # exact
    _, records = skim_stream(cut_run.data)
    assert [r.bits for r in records[:22]] == [2] * 22
    print("PASS 8: 22/22 unstable frames commit as N at exactly 2 bits each")


def test_criterion_09_residual_clipping_routes_to_intra():
    cfg = StreamConfig(f=1.0, theta_bits=6)
    identity = DecomposedAffine(r1=1.0, r2=1.0, q=0.0, phi=0.0, tx=0.0, ty=0.0)
    theta_ref = wrap_theta(decode_orientation(40))

    def route(x=100.0, y=100.0, sigma=10.0, theta=theta_ref):
        state = CodecState(config=cfg, buffer=[
            BufferEntry(kp=Keypoint(x=100.0, y=100.0, sigma=10.0,
                                    theta=theta_ref), anchor_idx=0)
        ])
        frame = FrameFeatures(frame_index=1, width=600, height=600, features=[
            Feature(keypoint=Keypoint(x=x, y=y, sigma=sigma, theta=theta),
                    descriptor=None)
        ])
        matches = [MatchPair(idx_prev=0, idx_curr=0, dist_ratio=0.2)]
        return assign_modes(frame, state, identity, matches=matches).modes[0]

    # One step past each clip bound goes Intra; the bound itself stays Inter.
    assert route(x=117.0) == MODE_DROP            # |dx| = 17
    assert route(x=116.0) == MODE_INTER           # |dx| = 16
    assert route(sigma=13.1) == MODE_DROP         # rel change 0.31
    assert route(sigma=13.0) == MODE_INTER        # rel change 0.30
    over = wrap_theta(decode_orientation(45))     # |Q(dtheta)| = 5
    assert route(theta=over) == MODE_DROP
    edge = wrap_theta(decode_orientation(44))     # |Q(dtheta)| = 4
    assert route(theta=edge) == MODE_INTER
    assert route() == MODE_SKIP                   # and no change skips
    print("PASS 9: dx=17 / rel 0.31 / |Q(dtheta)|=5 re-code Intra; "
          "16 / 0.30 / 4 stay Inter")


def test_criterion_10_lloyd_max_beats_uniform():
    rng = np.random.default_rng(123)
    draws = (
        lambda n: rng.uniform(-0.03, 0.03, n),
        lambda n: rng.normal(0.0, 0.01, n),
        lambda n: np.concatenate([rng.normal(-0.02, 0.004, n // 2),
                                  rng.normal(0.025, 0.002, n - n // 2)]),
        lambda n: rng.exponential(0.01, n) - 0.005,
    )
    for trial in range(10_000):
        samples = draws[trial % len(draws)](int(rng.integers(16, 65)))
        codebook = train_lloyd_max(samples, levels=2)
        trained = quantizer_mse(samples, codebook.levels)
        uniform = quantizer_mse(samples, uniform_two_level(samples))
        assert trained <= uniform + 1e-12
        if trial % 1000 == 0:
            again = train_lloyd_max(samples, levels=2)
            assert again.levels == codebook.levels  # deterministic
    print("PASS 10: trained codebook MSE <= uniform on 10^4 sample sets; "
          "training is deterministic")
