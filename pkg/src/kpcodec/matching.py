"""Descriptor matching and robust affine estimation between frames."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingDescriptors
from .model import AffineTransform, FrameFeatures


@dataclass(frozen=True)
class MatchPair:
    idx_prev: int
    idx_curr: int
    dist_ratio: float


@dataclass(frozen=True)
class AffineFit:
    transform: AffineTransform
    inliers: tuple[int, ...]   # indices into the match list
    num_iterations: int


def nndr_match(
    prev: FrameFeatures, curr: FrameFeatures, threshold: float = 0.8
) -> list[MatchPair]:
    """Nearest-neighbor distance-ratio matching from curr back into prev.

    Each current feature pairs with its nearest previous descriptor when
    the Euclidean distance ratio to the second-nearest stays below the
    threshold.  Fewer than two previous features means no second
    neighbor exists, so nothing matches.  Distance ties break toward the
    lower previous index.
    """
    if any(f.descriptor is None for f in prev.features) or any(
        f.descriptor is None for f in curr.features
    ):
        raise MissingDescriptors("matching requires descriptors on both frames")
    if len(prev.features) < 2 or not curr.features:
        return []

    a = prev.descriptor_matrix().astype(float)
    b = curr.descriptor_matrix().astype(float)
    # Squared Euclidean distances, (curr, prev).
    d2 = np.maximum(
        (b * b).sum(axis=1)[:, None] + (a * a).sum(axis=1)[None, :] - 2.0 * (b @ a.T),
        0.0,
    )
    matches = []
    for j in range(d2.shape[0]):
        order = np.argsort(d2[j], kind="stable")
        d1 = math.sqrt(d2[j, order[0]])
        d2nd = math.sqrt(d2[j, order[1]])
        ratio = 0.0 if d1 == 0.0 else (1.0 if d2nd == 0.0 else d1 / d2nd)
        if ratio < threshold:
            matches.append(MatchPair(idx_prev=int(order[0]), idx_curr=j, dist_ratio=ratio))
    return matches


def _solve_affine(src: np.ndarray, dst: np.ndarray) -> AffineTransform | None:
    """Least-squares affine src -> dst; None when the system is singular."""
    design = np.column_stack([src, np.ones(len(src))])
    try:
        params, *_ = np.linalg.lstsq(design, dst, rcond=None)
    except np.linalg.LinAlgError:
        return None
    (a, c), (b, d), (tx, ty) = params
    t = AffineTransform(a=a, b=b, c=c, d=d, tx=tx, ty=ty)
    if abs(t.det()) < 1e-6:
        return None
    return t


def ransac_affine(
    matches: list[MatchPair],
    prev: FrameFeatures,
    curr: FrameFeatures,
    *,
    rng: np.random.Generator,
    tol: float = 3.0,
    max_iters: int = 1000,
    min_inliers: int = 8,
    confidence: float = 0.99,
) -> AffineFit | None:
    """Robust affine fit over matched keypoint locations.

    Samples 3 non-collinear correspondences per iteration, keeps the
    transform with the most inliers (reprojection within tol), stops
    early once the standard confidence bound is met, then refits by
    least squares over the best inlier set.  Returns None when no
    transform with at least min_inliers support exists: the signal that
    the affine between the frames cannot be calculated.
    """
    if len(matches) < 3:
        return None
    src = np.array([[prev.features[m.idx_prev].keypoint.x,
                     prev.features[m.idx_prev].keypoint.y] for m in matches])
    dst = np.array([[curr.features[m.idx_curr].keypoint.x,
                     curr.features[m.idx_curr].keypoint.y] for m in matches])
    n = len(matches)

    best_inliers: np.ndarray | None = None
    best_count = 0
    needed = max_iters
    it = 0
    while it < needed and it < max_iters:
        it += 1
        idx = rng.choice(n, size=3, replace=False)
        p = src[idx]
        # Twice the triangle area; collinear samples pin no affine.
        area2 = abs(
            (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
            - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        )
        if area2 < 1e-9:
            continue
        mat = np.column_stack([p, np.ones(3)])
        try:
            params = np.linalg.solve(mat, dst[idx])
        except np.linalg.LinAlgError:
            continue
        (a, c), (b, d), (tx, ty) = params
        proj = src @ np.array([[a, c], [b, d]]) + np.array([tx, ty])
        err2 = ((proj - dst) ** 2).sum(axis=1)
        inliers = err2 <= tol * tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            # 99%-confidence iteration bound from the inlier ratio.
            w = count / n
            if w >= 1.0:
                needed = it
            else:
                denom = math.log(1.0 - w**3) if w > 0 else 0.0
                if denom < 0:
                    needed = min(max_iters, math.ceil(math.log(1.0 - confidence) / denom))

    if best_inliers is None or best_count < min_inliers:
        return None
    refit = _solve_affine(src[best_inliers], dst[best_inliers])
    if refit is None:
        return None
    inlier_idx = tuple(int(i) for i in np.flatnonzero(best_inliers))
    return AffineFit(transform=refit, inliers=inlier_idx, num_iterations=it)
