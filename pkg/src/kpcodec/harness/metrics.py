"""Fidelity of decoded keypoints against scene ground truth.

Decoded and truth keypoints are paired greedily by distance (closest
pair first, one-to-one) within a fixed radius.  Location error is
Euclidean, scale error is relative to the true scale, orientation error
is circular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import Keypoint

TWO_PI = 2.0 * math.pi


def circular_distance(a: float, b: float) -> float:
    """Absolute angular difference on the circle, in [0, pi]."""
    return abs((a - b + math.pi) % TWO_PI - math.pi)


def match_by_distance(
    truth: list[Keypoint], decoded: list[Keypoint], radius: float
) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing by ascending location distance."""
    if not truth or not decoded:
        return []
    t = np.array([[kp.x, kp.y] for kp in truth])
    d = np.array([[kp.x, kp.y] for kp in decoded])
    dist = np.sqrt(((t[:, None, :] - d[None, :, :]) ** 2).sum(axis=2))
    order = np.argsort(dist, axis=None)
    pairs = []
    used_t: set[int] = set()
    used_d: set[int] = set()
    for flat in order:
        i, j = divmod(int(flat), dist.shape[1])
        if dist[i, j] > radius:
            break
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        pairs.append((i, j))
    return pairs


@dataclass
class FrameMetrics:
    position: int
    n_truth: int
    n_decoded: int
    n_matched: int
    loc_rmse: float
    loc_max: float
    scale_rel_max: float
    theta_max: float


@dataclass
class MetricsReport:
    frames: list[FrameMetrics]
    surviving_fraction: float
    loc_rmse: float
    loc_max: float
    scale_rel_max: float
    theta_max: float


def evaluate(
    truth: list[list[Keypoint]],
    decoded: list[list[Keypoint]],
    radius: float = 2.0,
) -> MetricsReport:
    if len(truth) != len(decoded):
        raise ValueError(
            f"truth has {len(truth)} frames, decoded has {len(decoded)}"
        )
    rows = []
    sq_errors: list[float] = []
    total_truth = 0
    total_matched = 0
    loc_max = 0.0
    scale_max = 0.0
    theta_max = 0.0
    for pos, (t_kps, d_kps) in enumerate(zip(truth, decoded)):
        pairs = match_by_distance(t_kps, d_kps, radius)
        frame_sq = []
        frame_loc_max = 0.0
        frame_scale_max = 0.0
        frame_theta_max = 0.0
        for i, j in pairs:
            tk, dk = t_kps[i], d_kps[j]
            err = math.hypot(tk.x - dk.x, tk.y - dk.y)
            frame_sq.append(err * err)
            frame_loc_max = max(frame_loc_max, err)
            frame_scale_max = max(
                frame_scale_max, abs(dk.sigma - tk.sigma) / tk.sigma
            )
            frame_theta_max = max(
                frame_theta_max, circular_distance(dk.theta, tk.theta)
            )
        rows.append(
            FrameMetrics(
                position=pos,
                n_truth=len(t_kps),
                n_decoded=len(d_kps),
                n_matched=len(pairs),
                loc_rmse=math.sqrt(sum(frame_sq) / len(frame_sq)) if frame_sq else 0.0,
                loc_max=frame_loc_max,
                scale_rel_max=frame_scale_max,
                theta_max=frame_theta_max,
            )
        )
        sq_errors.extend(frame_sq)
        total_truth += len(t_kps)
        total_matched += len(pairs)
        loc_max = max(loc_max, frame_loc_max)
        scale_max = max(scale_max, frame_scale_max)
        theta_max = max(theta_max, frame_theta_max)
    return MetricsReport(
        frames=rows,
        surviving_fraction=(total_matched / total_truth) if total_truth else 1.0,
        loc_rmse=math.sqrt(sum(sq_errors) / len(sq_errors)) if sq_errors else 0.0,
        loc_max=loc_max,
        scale_rel_max=scale_max,
        theta_max=theta_max,
    )
