"""Static (pose) and dynamic (wrist motion) sequence features.

Canonical 76-column layout::

    0-16   mean_x      per keypoint
    17-33  mean_y
    34-50  max_x
    51-67  max_y
    68-70  dist_lw_ls, dist_rw_rs, dist_lw_rw
    71-75  vel_lw, vel_rw, vel_ratio, acc_lw, acc_rw

Coordinates are torso units with y pointing up; motion is per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, TooFewFrames
from .skeleton import KeypointIndex, NormalizedSequence, normalize_sequence

SCHEMA_VERSION = 1
RATIO_EPS = 1e-6
SUBSETS = ("static", "dynamic", "combined")

_KP_NAMES = [k.name.lower() for k in list(KeypointIndex)]
DISTANCE_PAIRS = (
    ("dist_lw_ls", KeypointIndex.LW, KeypointIndex.LS),
    ("dist_rw_rs", KeypointIndex.RW, KeypointIndex.RS),
    ("dist_lw_rw", KeypointIndex.LW, KeypointIndex.RW),
)
STATIC_NAMES = (
    [f"mean_x_{n}" for n in _KP_NAMES]
    + [f"mean_y_{n}" for n in _KP_NAMES]
    + [f"max_x_{n}" for n in _KP_NAMES]
    + [f"max_y_{n}" for n in _KP_NAMES]
    + [name for name, _, _ in DISTANCE_PAIRS]
)
DYNAMIC_NAMES = ["vel_lw", "vel_rw", "vel_ratio", "acc_lw", "acc_rw"]
FEATURE_NAMES = STATIC_NAMES + DYNAMIC_NAMES

assert len(STATIC_NAMES) == 71 and len(FEATURE_NAMES) == 76


def subset_names(subset: str) -> list[str]:
    if subset == "static":
        return list(STATIC_NAMES)
    if subset == "dynamic":
        return list(DYNAMIC_NAMES)
    if subset == "combined":
        return list(FEATURE_NAMES)
    raise ValueError(f"unknown feature subset {subset!r}; expected one of {SUBSETS}")


@dataclass(frozen=True)
class StaticFeatures:
    mean_x: np.ndarray
    mean_y: np.ndarray
    max_x: np.ndarray
    max_y: np.ndarray
    dist_lw_ls: float
    dist_rw_rs: float
    dist_lw_rw: float

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            [self.mean_x, self.mean_y, self.max_x, self.max_y,
             [self.dist_lw_ls, self.dist_rw_rs, self.dist_lw_rw]]
        )


@dataclass(frozen=True)
class DynamicFeatures:
    vel_lw: float
    vel_rw: float
    vel_ratio: float
    acc_lw: float
    acc_rw: float

    def to_array(self) -> np.ndarray:
        return np.array([self.vel_lw, self.vel_rw, self.vel_ratio, self.acc_lw, self.acc_rw])


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    subset: str = "combined"
    schema_version: int = SCHEMA_VERSION

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


def _norm(v):
    return np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1])


def static_features(seq: NormalizedSequence) -> StaticFeatures:
    p = seq.points
    if len(p) == 0:
        raise EmptySequence("static features need at least one frame")
    peak = p.max(axis=0)
    # summation rounding can lift the mean of equal values one ulp past them
    mean = np.minimum(p.mean(axis=0), peak)
    dists = [float(_norm(p[:, i] - p[:, j]).mean()) for _, i, j in DISTANCE_PAIRS]
    return StaticFeatures(mean[:, 0], mean[:, 1], peak[:, 0], peak[:, 1], *dists)


def _speed_stats(track):
    vel = np.diff(track, axis=0)
    acc = np.diff(vel, axis=0)
    return float(_norm(vel).mean()), float(_norm(acc).mean())


def dynamic_features(seq: NormalizedSequence) -> DynamicFeatures:
    """Mean wrist speed and mean speed change, in torso units per frame.

    Velocity is averaged over the T-1 frame differences, acceleration over
    the T-2 differences of consecutive velocities.
    """
    if len(seq.points) < 3:
        raise TooFewFrames(f"dynamic features need >= 3 frames, got {len(seq.points)}")
    vel_lw, acc_lw = _speed_stats(seq.points[:, KeypointIndex.LW])
    vel_rw, acc_rw = _speed_stats(seq.points[:, KeypointIndex.RW])
    return DynamicFeatures(vel_lw, vel_rw, vel_lw / (vel_rw + RATIO_EPS), acc_lw, acc_rw)


def extract_feature_vector(seq, subset: str = "combined") -> FeatureVector:
    """Normalize ``seq`` (raw or already normalized) and emit the requested subset."""
    names = subset_names(subset)
    norm = seq if isinstance(seq, NormalizedSequence) else normalize_sequence(seq)
    parts = []
    if subset in ("static", "combined"):
        parts.append(static_features(norm).to_array())
    if subset in ("dynamic", "combined"):
        parts.append(dynamic_features(norm).to_array())
    values = np.concatenate(parts)
    return FeatureVector(values, tuple(names), subset)


def feature_matrix(sequences, subset: str = "combined") -> np.ndarray:
    return np.vstack([extract_feature_vector(s, subset).values for s in sequences])


def project(matrix: np.ndarray, subset: str) -> np.ndarray:
    """Select the columns of a combined 76-column matrix that belong to ``subset``."""
    matrix = np.asarray(matrix)
    if subset == "static":
        return matrix[:, :71]
    if subset == "dynamic":
        return matrix[:, 71:]
    subset_names(subset)
    return matrix
