"""Command line front end.

    kpcodec encode   --features in.txt --out stream.kpb [options]
    kpcodec decode   --in stream.kpb --out decoded.txt
    kpcodec inspect  --in stream.kpb
    kpcodec simulate --scene scene.txt --out-dir run/

Exit codes: 0 success, 2 usage, 3 bad input data, 4 corrupt stream.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .codec import HEADER_BITS, decode_stream, encode_stream, skim_stream
from .errors import CorruptStream, FeatureFileError, KpcodecError
from .featurefile import read_feature_file, write_feature_file
from .harness import SyntheticScene, evaluate
from .kpquant import train_lloyd_max
from .model import FrameFeatures, FrameType, StreamConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CORRUPT = 4


def _default_seed() -> int:
    return int(os.environ.get("KPCODEC_SEED", "0"))


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.80,
                   help="S-frame match fraction threshold (default 0.80)")
    p.add_argument("--ns", type=int, default=4,
                   help="stable successors required to commit a D/U frame")
    p.add_argument("--nndr", type=float, default=0.8,
                   help="nearest/second-nearest descriptor ratio cutoff")
    p.add_argument("--seed", type=int, default=None,
                   help="RANSAC seed (default: KPCODEC_SEED env or 0)")
    p.add_argument("--tmax", type=int, default=64,
                   help="translation range of the affine code, px")
    p.add_argument("--scheme", choices=("full", "all_d", "d_plus_u"), default="full",
                   help="frame type scheme (default full)")
    p.add_argument("--max-features", type=int, default=200)


def _config_from_args(args) -> StreamConfig:
    seed = args.seed if args.seed is not None else _default_seed()
    return StreamConfig(
        epsilon=args.epsilon,
        ns=args.ns,
        nndr_threshold=args.nndr,
        t_max=args.tmax,
        seed=seed,
        scheme=args.scheme,
        max_features=args.max_features,
    )


def _load_codebook(path: str | None):
    if path is None:
        return None
    try:
        samples = np.loadtxt(path, dtype=float, ndmin=1)
    except (OSError, ValueError) as e:
        raise FeatureFileError(f"codebook sample file: {e}") from e
    return train_lloyd_max(samples, levels=2)


def _cmd_encode(args) -> int:
    frames = read_feature_file(args.features)
    config = _config_from_args(args)
    codebook = _load_codebook(args.codebook_samples)
    result = encode_stream(frames, config, codebook)
    Path(args.out).write_bytes(result.data)
    report = result.report
    counts = report.type_counts()
    print(
        f"encoded {len(report.frames)} frames -> {report.total_bytes} bytes "
        f"({report.total_bits} bits): "
        + " ".join(f"{k}={v}" for k, v in counts.items() if v)
    )
    if args.report:
        from . import report as reporting

        out_dir = Path(args.report)
        out_dir.mkdir(parents=True, exist_ok=True)
        reporting.write_frame_stats_csv(report, out_dir / "frame_stats.csv")
        reporting.plot_frame_bits(report, out_dir / "frame_bits.png")
        print(f"report written to {out_dir}/")
    return EXIT_OK


def _cmd_decode(args) -> int:
    data = Path(args.infile).read_bytes()
    decoded = decode_stream(data)
    frames = [
        FrameFeatures(
            frame_index=df.position,
            width=decoded.width,
            height=decoded.height,
            features=[_bare_feature(kp) for kp in df.keypoints],
        )
        for df in decoded.frames
    ]
    write_feature_file(args.out, frames, descriptor_dim=0)
    total = sum(len(df.keypoints) for df in decoded.frames)
    print(f"decoded {len(frames)} frames, {total} keypoints -> {args.out}")
    return EXIT_OK


def _bare_feature(kp):
    from .model import Feature

    return Feature(keypoint=kp, descriptor=None)


def _cmd_inspect(args) -> int:
    data = Path(args.infile).read_bytes()
    header, records = skim_stream(data)
    cb = ", ".join(f"{v:+.4f}" for v in header.codebook.levels)
    print(f"stream: {header.width}x{header.height}, {header.n_frames} frames, "
          f"max {header.max_features} features")
    print(f"coding: f={header.f:g} theta_bits={header.theta_bits} "
          f"t_max={header.t_max} context_range={header.context_range}")
    print(f"codebook: [{cb}]  epsilon={header.epsilon:g} ns={header.ns}")
    record_bits = sum(r.bits for r in records)
    print(f"size: header {HEADER_BITS} bits + records {record_bits} bits "
          f"= {len(data)} bytes on disk")
    print()
    print(f"{'pos':>6} {'type':<6} {'bits':>8}  detail")
    i = 0
    while i < len(records):
        r = records[i]
        if r.frame_type == FrameType.N:
            j = i
            while j < len(records) and records[j].frame_type == FrameType.N:
                j += 1
            run = j - i
            label = f"N x{run}" if run > 1 else "N"
            span = f"{r.position}" if run == 1 else f"{r.position}-{records[j-1].position}"
            bits = sum(records[k].bits for k in range(i, j))
            print(f"{span:>6} {label:<6} {bits:>8}")
            i = j
            continue
        detail = " ".join(f"{k}={v}" for k, v in r.fields.items())
        print(f"{r.position:>6} {r.frame_type.name:<6} {r.bits:>8}  {detail}")
        i += 1
    return EXIT_OK


def _parse_scene_file(path: str | Path) -> SyntheticScene:
    fields = {f.name: f for f in dataclasses.fields(SyntheticScene)}
    kwargs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0]
            f = fields.get(key)
            if f is None:
                raise FeatureFileError(f"scene config: unknown key {key!r}", lineno)
            want = type(f.default)
            try:
                if want is bool:
                    if parts[1].lower() not in ("true", "false", "0", "1"):
                        raise ValueError(parts[1])
                    kwargs[key] = parts[1].lower() in ("true", "1")
                elif want is tuple:
                    kwargs[key] = tuple(int(p) for p in parts[1:])
                elif want is int:
                    (value,) = parts[1:]
                    kwargs[key] = int(value)
                else:
                    (value,) = parts[1:]
                    kwargs[key] = float(value)
            except ValueError:
                raise FeatureFileError(
                    f"scene config: bad value for {key!r}", lineno
                ) from None
    return SyntheticScene(**kwargs)


def _cmd_simulate(args) -> int:
    from . import report as reporting

    scene = _parse_scene_file(args.scene)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    seq = scene.generate()
    config = _config_from_args(args)
    write_feature_file(out_dir / "features.txt", seq.frames)

    result = encode_stream(seq.frames, config)
    (out_dir / "stream.kpb").write_bytes(result.data)
    decoded = decode_stream(result.data)

    frames_out = [
        FrameFeatures(
            frame_index=df.position,
            width=decoded.width,
            height=decoded.height,
            features=[_bare_feature(kp) for kp in df.keypoints],
        )
        for df in decoded.frames
    ]
    write_feature_file(out_dir / "decoded.txt", frames_out, descriptor_dim=0)

    metrics = evaluate(seq.truth, [df.keypoints for df in decoded.frames])
    reporting.write_frame_stats_csv(result.report, out_dir / "frame_stats.csv")
    reporting.write_metrics_csv(metrics, out_dir / "metrics.csv")
    reporting.plot_frame_bits(result.report, out_dir / "frame_bits.png")
    reporting.plot_metrics(metrics, out_dir / "metrics.png")

    counts = result.report.type_counts()
    n = len(result.report.frames)
    print(f"scene: {scene.width}x{scene.height}, {n} frames, "
          f"{scene.n_features} features")
    print("frame types: " + " ".join(f"{k}={v}" for k, v in counts.items() if v))
    print(f"stream: {result.report.total_bits} bits "
          f"({result.report.total_bits / n:.1f} bits/frame)")
    print(f"surviving fraction: {metrics.surviving_fraction:.3f}")
    print(f"errors: loc_max {metrics.loc_max:.3f} px, "
          f"scale_rel_max {metrics.scale_rel_max:.4f}, "
          f"theta_max {metrics.theta_max:.4f} rad")
    print(f"outputs in {out_dir}/")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpcodec",
        description="Keypoint side-information codec for video feature streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a feature file into a .kpb stream")
    p.add_argument("--features", required=True, help="input feature text file")
    p.add_argument("--out", required=True, help="output .kpb path")
    _add_config_args(p)
    p.add_argument("--codebook-samples", default=None,
                   help="text file of scale offsets to train the codebook on")
    p.add_argument("--report", default=None,
                   help="directory for frame_stats.csv and frame_bits.png")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="decode a .kpb stream to a feature file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("inspect", help="print stream structure without full decode")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("simulate", help="run a synthetic scene end to end")
    p.add_argument("--scene", required=True, help="scene config text file")
    p.add_argument("--out-dir", required=True)
    _add_config_args(p)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorruptStream as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except (KpcodecError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
