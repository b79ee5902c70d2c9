"""COCO-17 skeleton model and torso-based keypoint normalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from .errors import DegenerateTorso, SchemaViolation

N_KEYPOINTS = 17
MIN_TORSO_PX = 1e-3


class KeypointIndex(IntEnum):
    NOSE = 0
    LEFT_EYE = 1
    RIGHT_EYE = 2
    LEFT_EAR = 3
    RIGHT_EAR = 4
    LEFT_SHOULDER = 5
    RIGHT_SHOULDER = 6
    LEFT_ELBOW = 7
    RIGHT_ELBOW = 8
    LEFT_WRIST = 9
    RIGHT_WRIST = 10
    LEFT_HIP = 11
    RIGHT_HIP = 12
    LEFT_KNEE = 13
    RIGHT_KNEE = 14
    LEFT_ANKLE = 15
    RIGHT_ANKLE = 16

    # short aliases used throughout the feature code
    LS = 5
    RS = 6
    LW = 9
    RW = 10
    LH = 11
    RH = 12


TORSO_KEYPOINTS = (KeypointIndex.LS, KeypointIndex.RS, KeypointIndex.LH, KeypointIndex.RH)


@dataclass(frozen=True)
class RawFrame:
    """One detected skeleton in pixel coordinates (y grows downward)."""

    points: np.ndarray  # (17, 2)
    confidence: np.ndarray  # (17,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        conf = np.asarray(self.confidence, dtype=float)
        if pts.shape != (N_KEYPOINTS, 2) or conf.shape != (N_KEYPOINTS,):
            raise SchemaViolation(
                f"frame needs 17 points and 17 confidences, got {pts.shape} and {conf.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise SchemaViolation("frame has non-finite coordinates")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "confidence", conf)


@dataclass
class KeypointSequence:
    """A timed series of skeleton frames, stored as stacked arrays.

    ``points`` is (T, 17, 2) in pixels, ``confidence`` is (T, 17).
    ``gesture_range`` is a half-open ``(start, end)`` frame interval.
    """

    points: np.ndarray
    confidence: np.ndarray
    fps: float = 60.0
    source_id: str = ""
    label: Optional[int] = None
    gesture_range: Optional[tuple[int, int]] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.confidence = np.asarray(self.confidence, dtype=float)
        if self.points.ndim != 3 or self.points.shape[1:] != (N_KEYPOINTS, 2):
            raise SchemaViolation(f"points must be (T, 17, 2), got {self.points.shape}")
        if self.confidence.shape != self.points.shape[:2]:
            raise SchemaViolation(
                f"confidence must be (T, 17), got {self.confidence.shape}"
            )
        if len(self.points) < 1:
            raise SchemaViolation("sequence has no frames")
        if not np.all(np.isfinite(self.points)):
            raise SchemaViolation("sequence has non-finite coordinates")
        if not (self.fps > 0):
            raise SchemaViolation(f"fps must be positive, got {self.fps}")
        if self.gesture_range is not None:
            start, end = (int(v) for v in self.gesture_range)
            if not 0 <= start < end <= len(self.points):
                raise SchemaViolation(
                    f"gesture_range [{start}, {end}) invalid for {len(self.points)} frames"
                )
            self.gesture_range = (start, end)

    @classmethod
    def from_frames(cls, frames, **meta) -> "KeypointSequence":
        frames = list(frames)
        return cls(
            points=np.stack([f.points for f in frames]) if frames else np.zeros((0, 17, 2)),
            confidence=np.stack([f.confidence for f in frames]) if frames else np.zeros((0, 17)),
            **meta,
        )

    def __len__(self):
        return len(self.points)

    @property
    def frames(self) -> list[RawFrame]:
        return [RawFrame(p, c) for p, c in zip(self.points, self.confidence)]


@dataclass(frozen=True)
class NormalizedFrame:
    points: np.ndarray  # (17, 2) torso units, up-positive
    torso_size: float
    center: tuple[float, float]


@dataclass
class NormalizedSequence:
    points: np.ndarray  # (T, 17, 2)
    torso_size: np.ndarray  # (T,)
    center: np.ndarray  # (T, 2)
    fps: float = 60.0
    source_id: str = ""
    label: Optional[int] = None

    def __len__(self):
        return len(self.points)

    @property
    def frames(self) -> list[NormalizedFrame]:
        return [
            NormalizedFrame(p, float(ts), (float(c[0]), float(c[1])))
            for p, ts, c in zip(self.points, self.torso_size, self.center)
        ]


def _dist(a, b):
    d = a - b
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def _torso_sizes(points):
    # points: (..., 17, 2); written out term by term so batched and single-frame
    # calls round identically
    ls = points[..., KeypointIndex.LS, :]
    rs = points[..., KeypointIndex.RS, :]
    lh = points[..., KeypointIndex.LH, :]
    rh = points[..., KeypointIndex.RH, :]
    return (_dist(ls, lh) + _dist(ls, rh) + _dist(rs, lh) + _dist(rs, rh)) / 4.0


def _centers(points):
    return (points[..., KeypointIndex.LH, :] + points[..., KeypointIndex.RH, :]) / 2.0


def _normalize_points(points, ts, c):
    out = np.empty_like(points)
    out[..., 0] = (points[..., 0] - c[..., None, 0]) / ts[..., None]
    out[..., 1] = (c[..., None, 1] - points[..., 1]) / ts[..., None]
    return out


def _as_points(frame) -> np.ndarray:
    if isinstance(frame, RawFrame):
        return frame.points
    pts = np.asarray(frame, dtype=float)
    if pts.shape != (N_KEYPOINTS, 2):
        raise SchemaViolation(f"expected (17, 2) points, got {pts.shape}")
    return pts


def torso_size(frame) -> float:
    """Mean of the four shoulder-hip distances, including the two diagonals.

    Accepts a :class:`RawFrame` or a bare (17, 2) array.
    """
    ts = float(_torso_sizes(_as_points(frame)))
    if ts < MIN_TORSO_PX:
        raise DegenerateTorso(ts)
    return ts


def center_point(frame) -> tuple[float, float]:
    c = _centers(_as_points(frame))
    return float(c[0]), float(c[1])


def normalize_frame(frame) -> NormalizedFrame:
    """Express a frame in torso units about the mid-hip, with y flipped to point up."""
    pts = _as_points(frame)
    ts = _torso_sizes(pts)
    if ts < MIN_TORSO_PX:
        raise DegenerateTorso(float(ts))
    c = _centers(pts)
    return NormalizedFrame(_normalize_points(pts, ts, c), float(ts), (float(c[0]), float(c[1])))


def normalize_sequence(seq: KeypointSequence) -> NormalizedSequence:
    ts = _torso_sizes(seq.points)
    bad = np.flatnonzero(ts < MIN_TORSO_PX)
    if bad.size:
        raise DegenerateTorso(float(ts[bad[0]]), frame_index=int(bad[0]))
    c = _centers(seq.points)
    return NormalizedSequence(
        points=_normalize_points(seq.points, ts, c),
        torso_size=ts,
        center=c,
        fps=seq.fps,
        source_id=seq.source_id,
        label=seq.label,
    )
