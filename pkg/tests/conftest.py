import numpy as np
import pytest

from kpcodec.kpquant import LloydMaxCodebook
from kpcodec.model import DecomposedAffine, Feature, FrameFeatures, Keypoint


@pytest.fixture
def flat_codebook():
    """A fixed symmetric offset codebook, independent of training."""
    return LloydMaxCodebook(levels=(-0.015, 0.015))


@pytest.fixture
def identity_motion():
    return DecomposedAffine(r1=1.0, r2=1.0, q=0.0, phi=0.0, tx=0.0, ty=0.0)


def make_frame(index, keypoints, width=200, height=200, rng=None, dim=16):
    """FrameFeatures from (x, y[, sigma[, theta]]) tuples; descriptors are
    random unless rng is None."""
    features = []
    for kp in keypoints:
        x, y, *rest = kp
        sigma = rest[0] if rest else 2.0
        theta = rest[1] if len(rest) > 1 else 0.0
        desc = None if rng is None else rng.standard_normal(dim)
        features.append(
            Feature(keypoint=Keypoint(x=x, y=y, sigma=sigma, theta=theta),
                    descriptor=desc)
        )
    return FrameFeatures(frame_index=index, width=width, height=height,
                         features=features)
