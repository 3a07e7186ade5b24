"""Plain-text feature exchange format.

One stream per file:

    stream <width> <height> <descriptor_dim>
    frame <index> <count>
    <x> <y> <sigma> <theta> [<d0> <d1> ... ]
    ...

Blank lines and `#` comments are ignored.  Every feature line carries
exactly 4 + descriptor_dim numbers; decoded streams are written with
descriptor_dim 0.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FeatureFileError
from .model import Feature, FrameFeatures, Keypoint


def _tokens(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_feature_file(path: str | Path) -> list[FrameFeatures]:
    path = Path(path)
    stream = _tokens(path)

    try:
        lineno, parts = next(stream)
    except StopIteration:
        raise FeatureFileError("empty file, expected a stream line") from None
    if parts[0] != "stream" or len(parts) != 4:
        raise FeatureFileError(
            "expected 'stream <width> <height> <descriptor_dim>'", lineno
        )
    try:
        width, height, dim = (int(p) for p in parts[1:])
    except ValueError:
        raise FeatureFileError("stream fields must be integers", lineno) from None
    if width <= 0 or height <= 0 or dim < 0:
        raise FeatureFileError("stream fields out of range", lineno)

    frames: list[FrameFeatures] = []
    pending = 0  # feature lines still owed by the open frame
    for lineno, parts in stream:
        if parts[0] == "frame":
            if pending:
                raise FeatureFileError(
                    f"previous frame is short {pending} feature line(s)", lineno
                )
            if len(parts) != 3:
                raise FeatureFileError("expected 'frame <index> <count>'", lineno)
            try:
                index, count = int(parts[1]), int(parts[2])
            except ValueError:
                raise FeatureFileError("frame fields must be integers", lineno) from None
            if count < 0:
                raise FeatureFileError("feature count must be >= 0", lineno)
            frames.append(
                FrameFeatures(frame_index=index, width=width, height=height, features=[])
            )
            pending = count
            continue
        if not frames or not pending:
            raise FeatureFileError("feature line outside any frame", lineno)
        if len(parts) != 4 + dim:
            raise FeatureFileError(
                f"expected {4 + dim} numbers, got {len(parts)}", lineno
            )
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise FeatureFileError("feature fields must be numbers", lineno) from None
        x, y, sigma, theta = values[:4]
        if sigma <= 0:
            raise FeatureFileError(f"sigma must be positive, got {sigma}", lineno)
        descriptor = np.array(values[4:], dtype=float) if dim else None
        frames[-1].features.append(
            Feature(
                keypoint=Keypoint(x=x, y=y, sigma=sigma, theta=theta),
                descriptor=descriptor,
            )
        )
        pending -= 1
    if pending:
        raise FeatureFileError(f"last frame is short {pending} feature line(s)")
    if not frames:
        raise FeatureFileError("file contains no frames")
    return frames


def write_feature_file(
    path: str | Path, frames: list[FrameFeatures], descriptor_dim: int | None = None
) -> None:
    """Write frames back out; descriptor_dim defaults to what the first
    feature carries (0 when descriptors are absent)."""
    if descriptor_dim is None:
        descriptor_dim = 0
        for fr in frames:
            if fr.features:
                d = fr.features[0].descriptor
                descriptor_dim = 0 if d is None else len(d)
                break
    with open(path, "w") as fh:
        first = frames[0]
        fh.write(f"stream {first.width} {first.height} {descriptor_dim}\n")
        for fr in frames:
            fh.write(f"frame {fr.frame_index} {len(fr.features)}\n")
            for feat in fr.features:
                kp = feat.keypoint
                row = [f"{kp.x:.6f}", f"{kp.y:.6f}", f"{kp.sigma:.6f}", f"{kp.theta:.6f}"]
                if descriptor_dim:
                    if feat.descriptor is None or len(feat.descriptor) != descriptor_dim:
                        raise FeatureFileError(
                            f"frame {fr.frame_index}: descriptor length does not "
                            f"match stream dimension {descriptor_dim}"
                        )
                    row.extend(f"{v:.6f}" for v in feat.descriptor)
                fh.write(" ".join(row) + "\n")
