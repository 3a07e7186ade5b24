"""Frame type decisions and the prediction state machine.

A stream opens with a D-frame (all keypoints intra coded).  While the
current frame still matches the last D- or U-frame well enough, only a
48-bit affine is sent (S-frame) and the decoder carries its keypoint
buffer through the transform.  When matching decays, a U-frame patches
the buffer per keypoint: skip, inter-correct, or drop, plus intra coding
for new keypoints.  A D- or U-frame only pays off if the scene holds
still long enough, so its commitment waits for `ns` provisionally-S
successors; anything less turns it into a 2-bit N-frame and the next
frame restarts as a fresh D.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .entropy.residuals import (
    MODE_DROP,
    MODE_INTER,
    MODE_SKIP,
    InterResidual,
    scale_ratio_index,
    scale_ratio_level,
    DELTA_MAX,
    DTHETA_MAX,
    SCALE_NEUTRAL_INDEX,
    SCALE_REL_MAX,
)
from .geometry import estimate_keypoint
from .kpquant import code_orientation, decode_orientation, quantize_location
from .matching import AffineFit, MatchPair, nndr_match
from .model import (
    DecomposedAffine,
    Feature,
    FrameFeatures,
    FrameType,
    Keypoint,
    StreamConfig,
    wrap_theta,
)


@dataclass
class BufferEntry:
    """Encoder-side buffered keypoint.

    anchor_idx names the anchor-frame feature this entry descends from,
    which is how anchor matches map onto buffer positions.
    """

    kp: Keypoint
    anchor_idx: int


@dataclass
class CodecState:
    """Everything the encoder carries between frames.

    The keypoint buffer mirrors the decoder exactly: it only ever holds
    decoded (quantized) values.  The anchor keeps the raw features of
    the last committed D- or U-frame for matching.
    """

    config: StreamConfig
    buffer: list[BufferEntry] = field(default_factory=list)
    anchor: Optional[FrameFeatures] = None

    def buffer_keypoints(self) -> list[Keypoint]:
        return [e.kp for e in self.buffer]


def classify_frame(
    curr: FrameFeatures,
    state: CodecState,
    fit: AffineFit | None,
    matches: list[MatchPair] | None = None,
) -> FrameType:
    """Provisional D/S/U decision for one frame.

    fit is the robust affine between the physically previous frame and
    curr (None when it could not be calculated).  matches are the NNDR
    pairs between the anchor and curr; they are recomputed when not
    supplied.  No anchor, an empty anchor, or a failed fit forces D;
    enough anchor matches keeps the prediction chain alive with S;
    otherwise the buffer needs per-keypoint updates: U.
    """
    if state.anchor is None or not state.anchor.features:
        return FrameType.D
    if fit is None:
        return FrameType.D
    if matches is None:
        matches = nndr_match(state.anchor, curr, state.config.nndr_threshold)
    if len(matches) >= state.config.epsilon * len(state.anchor.features):
        return FrameType.S
    return FrameType.U


def plan_frame_types(
    num_frames: int,
    ns: int,
    classify: Callable[[int, Optional[int]], FrameType],
) -> list[FrameType]:
    """Commit a frame type for every frame under the stability rule.

    classify(idx, anchor_idx) must return the provisional type of frame
    idx measured against the features of frame anchor_idx (None only for
    the first frame, which is always D).  A provisional D/U commits only
    after ns provisionally-S successors; one non-S successor turns it
    into N and the following frame restarts as a forced D, re-classified
    from scratch.  A stream ending mid-window commits the pending leader
    optimistically.  Lookahead never exceeds ns frames.
    """
    committed: dict[int, FrameType] = {}
    queue = deque(range(num_frames))
    anchor: Optional[int] = None
    force_d = False
    window: Optional[tuple[int, FrameType, list[int]]] = None

    while queue or window is not None:
        if window is None:
            idx = queue.popleft()
            if force_d or anchor is None:
                provisional = FrameType.D
                force_d = False
            else:
                provisional = classify(idx, anchor)
            if provisional == FrameType.S:
                committed[idx] = FrameType.S
                continue
            if ns == 0:
                committed[idx] = provisional
                anchor = idx
                continue
            window = (idx, provisional, [])
            continue

        leader, leader_type, successors = window
        if not queue:
            # End of stream inside the window: no evidence of instability.
            committed[leader] = leader_type
            for s in successors:
                committed[s] = FrameType.S
            anchor = leader
            window = None
            continue

        idx = queue.popleft()
        if classify(idx, leader) == FrameType.S:
            successors.append(idx)
            if len(successors) == ns:
                committed[leader] = leader_type
                for s in successors:
                    committed[s] = FrameType.S
                anchor = leader
                window = None
            continue

        # An unstable successor: the pending D/U is not worth coding.
        committed[leader] = FrameType.N
        queue.appendleft(idx)
        for s in reversed(successors):
            queue.appendleft(s)
        force_d = True
        window = None

    return [committed[i] for i in range(num_frames)]


@dataclass
class ModeAssignment:
    """Per-buffered-keypoint coding decisions for one U-frame."""

    modes: list[int]                        # MODE_* per buffer entry, in order
    residuals: list[InterResidual]          # inter corrections, buffer order
    kept: list[tuple[Keypoint, int]]        # (decoded keypoint, curr index) for skip/inter
    intra: list[tuple[int, Feature]]        # (curr index, feature) routed to intra coding
    n_matched: int


def apply_inter_update(
    est: Keypoint,
    residual: InterResidual,
    f: float,
    width: int,
    height: int,
    theta_bits: int,
) -> Keypoint:
    """Decode-side inter correction; the encoder uses the identical path."""
    g = quantize_location(est, f, width, height)
    e_hat = code_orientation(wrap_theta(est.theta), theta_bits)
    return Keypoint(
        x=f * (g.gx + residual.dx),
        y=f * (g.gy + residual.dy),
        sigma=est.sigma * (1.0 + scale_ratio_level(residual.scale_idx)),
        theta=wrap_theta(decode_orientation(e_hat + residual.dtheta_idx, theta_bits)),
    )


def assign_modes(
    curr: FrameFeatures,
    state: CodecState,
    dq: DecomposedAffine,
    matches: list[MatchPair] | None = None,
) -> ModeAssignment:
    """Decide skip / inter / drop per buffered keypoint for a U-frame.

    Buffered keypoints correspond to anchor features, so the anchor/curr
    NNDR matches pair them with current features.  Each matched pair is
    carried through the dequantized transform dq and compared in the
    quantized domain; pairs beyond the residual alphabets are incorrect
    matches and fall back to intra coding.  Matching runs against
    decoded buffer state only via dq, never against raw values.
    """
    cfg = state.config
    if matches is None:
        matches = nndr_match(state.anchor, curr, cfg.nndr_threshold)

    by_anchor = {entry.anchor_idx: i for i, entry in enumerate(state.buffer)}
    # Best match per buffer entry (lowest ratio, then lowest current index).
    best: dict[int, MatchPair] = {}
    for m in matches:
        b = by_anchor.get(m.idx_prev)
        if b is None:
            continue
        held = best.get(b)
        if held is None or (m.dist_ratio, m.idx_curr) < (held.dist_ratio, held.idx_curr):
            best[b] = m
    claimed = {m.idx_curr for m in best.values()}

    modes: list[int] = []
    residuals: list[InterResidual] = []
    kept: list[tuple[Keypoint, int]] = []
    width, height = curr.width, curr.height

    for b, entry in enumerate(state.buffer):
        m = best.get(b)
        if m is None:
            modes.append(MODE_DROP)
            continue
        kb = curr.features[m.idx_curr].keypoint
        est = estimate_keypoint(entry.kp, dq)

        gb = quantize_location(kb, cfg.f, width, height)
        ge = quantize_location(est, cfg.f, width, height)
        dx = gb.gx - ge.gx
        dy = gb.gy - ge.gy
        rel = (kb.sigma - est.sigma) / est.sigma
        dtheta = code_orientation(wrap_theta(kb.theta), cfg.theta_bits) - code_orientation(
            wrap_theta(est.theta), cfg.theta_bits
        )

        if (
            abs(dx) > DELTA_MAX
            or abs(dy) > DELTA_MAX
            or abs(rel) > SCALE_REL_MAX
            or abs(dtheta) > DTHETA_MAX
        ):
            # Incorrect match: drop the buffer entry, re-code the feature.
            modes.append(MODE_DROP)
            claimed.discard(m.idx_curr)
            continue

        scale_idx = scale_ratio_index(rel)
        if abs(dx) <= 1 and abs(dy) <= 1 and scale_idx == SCALE_NEUTRAL_INDEX and dtheta == 0:
            modes.append(MODE_SKIP)
            kept.append((est, m.idx_curr))
            continue

        residual = InterResidual(
            dx=dx, dy=dy, scale_idx=scale_idx, dtheta_idx=dtheta, prev_ref=b
        )
        modes.append(MODE_INTER)
        residuals.append(residual)
        kept.append(
            (apply_inter_update(est, residual, cfg.f, width, height, cfg.theta_bits), m.idx_curr)
        )

    intra = [
        (j, feat) for j, feat in enumerate(curr.features) if j not in claimed
    ]
    return ModeAssignment(
        modes=modes,
        residuals=residuals,
        kept=kept,
        intra=intra,
        n_matched=len(best),
    )


def s_frame_update(state: CodecState, dq: DecomposedAffine) -> list[Keypoint]:
    """Carry every buffered keypoint through dq; anchor stays unchanged."""
    for entry in state.buffer:
        entry.kp = estimate_keypoint(entry.kp, dq)
    return state.buffer_keypoints()
