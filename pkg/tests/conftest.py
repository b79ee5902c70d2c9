import numpy as np
import pytest

from pedgesture.skeleton import KeypointIndex as K
from pedgesture.skeleton import KeypointSequence, RawFrame


def random_points(rng, n_frames=None):
    """Skeleton-like pixel coordinates: torso points well apart, the rest anywhere."""
    shape = (17, 2) if n_frames is None else (n_frames, 17, 2)
    pts = rng.uniform(0.0, 1920.0, size=shape)
    base = rng.uniform(300.0, 1500.0, size=2)
    torso = {K.LS: (-60, -200), K.RS: (60, -200), K.LH: (-40, 0), K.RH: (40, 0)}
    for kp, off in torso.items():
        pts[..., kp, :] = base + np.asarray(off) + rng.normal(0.0, 10.0, size=pts[..., kp, :].shape)
    return pts


def random_frame(rng):
    return RawFrame(random_points(rng), rng.uniform(0.0, 1.0, size=17))


def random_sequence(rng, n_frames):
    return KeypointSequence(random_points(rng, n_frames), rng.uniform(0.5, 1.0, size=(n_frames, 17)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
