"""Seeded synthetic gesture corpus.

A front-facing template skeleton (units of body height, origin at the
mid-hip, y down) is animated by one motion primitive per sequence, rendered
to 1920x1080 pixel coordinates, and perturbed with Gaussian pixel noise.
The gesturing arm is the left one unless ``handedness="right"``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ingest import DatasetManifest, ManifestEntry, serialize_sequence
from .labels import GestureClass
from .seeding import mix, rng_for
from .skeleton import KeypointIndex as K
from .skeleton import KeypointSequence

DEFAULT_COUNTS = (53, 28, 48, 51)  # stop, go, thank_greet, no_gesture

SHOULDER_WIDTH = 0.23
HIP_WIDTH = 0.16
UPPER_ARM = 0.17
FOREARM = 0.15
SHOULDER_HEIGHT = 0.30  # above the mid-hip

TEMPLATE = {
    K.NOSE: (0.0, -0.43),
    K.LEFT_EYE: (0.018, -0.445),
    K.RIGHT_EYE: (-0.018, -0.445),
    K.LEFT_EAR: (0.04, -0.435),
    K.RIGHT_EAR: (-0.04, -0.435),
    K.LEFT_SHOULDER: (SHOULDER_WIDTH / 2, -SHOULDER_HEIGHT),
    K.RIGHT_SHOULDER: (-SHOULDER_WIDTH / 2, -SHOULDER_HEIGHT),
    K.LEFT_HIP: (HIP_WIDTH / 2, 0.0),
    K.RIGHT_HIP: (-HIP_WIDTH / 2, 0.0),
    K.LEFT_KNEE: (0.075, 0.25),
    K.RIGHT_KNEE: (-0.075, 0.25),
    K.LEFT_ANKLE: (0.07, 0.49),
    K.RIGHT_ANKLE: (-0.07, 0.49),
}
HEAD = (K.NOSE, K.LEFT_EYE, K.RIGHT_EYE, K.LEFT_EAR, K.RIGHT_EAR)

# wrist offset from its shoulder with the arm hanging: (outward, down)
REST_WRIST = np.array([0.035, 0.31])
REST_SPREAD = (0.04, 0.08)  # (inward, upward) range of individual rest poses
# the other hand is busier: some people fiddle with a phone or a bag strap
FIDGET_AMP = (0.002, 0.05)
FIDGET_FREQ = (0.3, 1.0)
# raising the arm lifts its shoulder and tips the head away from it
SHOULDER_LIFT = 0.06
HEAD_TILT = 0.08

FREQ_GO_SWING = 1.0
FREQ_STOP_WAVE = 0.7
FREQ_GREET_WAVE = 2.0

DEFAULT_DURATIONS = {
    GestureClass.STOP: (1.5, 4.0),
    GestureClass.GO: (1.0, 3.0),
    GestureClass.THANK_GREET: (1.0, 3.0),
    GestureClass.NO_GESTURE: (2.0, 5.0),
}


@dataclass(frozen=True)
class SynthParams:
    fps: float = 60.0
    durations: tuple = tuple(DEFAULT_DURATIONS[c] for c in GestureClass)
    noise_sigma: float = 2.0
    confidence_range: tuple = (0.7, 1.0)
    body_height: float = 600.0
    handedness: str = "left"
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.durations) != len(GestureClass):
            raise ValueError("durations needs one (low, high) pair per class")
        for lo, hi in self.durations:
            if not 0 < lo <= hi:
                raise ValueError(f"duration bounds must satisfy 0 < low <= high, got ({lo}, {hi})")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        lo, hi = self.confidence_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("confidence_range must lie within [0, 1]")
        if self.body_height <= 0:
            raise ValueError("body_height must be positive")
        if self.handedness not in ("left", "right"):
            raise ValueError("handedness must be 'left' or 'right'")

    def frame_bounds(self, cls: GestureClass) -> tuple[int, int]:
        lo, hi = self.durations[int(cls)]
        return max(3, math.ceil(self.fps * lo - 1e-9)), max(3, math.floor(self.fps * hi + 1e-9))


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _envelope(t, duration, rng):
    """Raise the arm at the start of the clip and lower it at the end."""
    rise = rng.uniform(0.25, 0.45)
    fall = rng.uniform(0.25, 0.45)
    return _smoothstep(t / rise) * _smoothstep((duration - t) / fall)


# Wrist targets relative to the shoulder in body-height units (x outward,
# y down), plus the oscillation amplitude for moving primitives.
SHAPES = {
    "overhead_raise_hold": {"x": (0.0, 0.08), "y": (-0.30, -0.10)},
    # arm held out toward the road as a barrier
    "chest_extended_arm": {"x": (0.18, 0.28), "y": (-0.02, 0.06)},
    "slow_vertical_wave": {"x": (0.04, 0.12), "y": (0.0, 0.08), "amp": (0.06, 0.10)},
    "side_to_side_swing": {"x": (0.08, 0.16), "y": (0.10, 0.20), "amp": (0.12, 0.20)},
    # a raised hand, wagged slightly in acknowledgement
    "head_level_raise": {"x": (0.0, 0.08), "y": (-0.28, -0.08), "amp": (0.07, 0.10)},
    "near_head_wave": {"x": (0.02, 0.10), "y": (-0.28, -0.08), "amp": (0.08, 0.12)},
    # fist in front of the chest, pumped a little
    "chest_thumbs_up": {"x": (-0.04, 0.06), "y": (0.0, 0.10), "amp": (0.06, 0.09)},
}


def _hold(target, t, rng):
    drift = 0.006 * np.sin(2 * np.pi * rng.uniform(0.3, 0.6) * t + rng.uniform(0, 2 * np.pi))
    return np.stack([target[0] + drift, np.full_like(t, target[1]) + drift / 2], axis=1)


def _oscillate(center, amplitude, freq, axis, t, rng):
    phase = rng.uniform(0, 2 * np.pi)
    f = freq * rng.uniform(0.85, 1.15)
    wave = amplitude * np.sin(2 * np.pi * f * t + phase)
    out = np.tile(np.asarray(center, float), (len(t), 1))
    out[:, axis] += wave
    # slight arc on the other axis, as a real swinging forearm traces
    out[:, 1 - axis] += 0.15 * amplitude * np.cos(4 * np.pi * f * t + phase)
    return out


@dataclass(frozen=True)
class MotionPrimitive:
    """A wrist path family: a hold (``freq`` None) or an oscillation along ``axis``."""

    name: str
    label: GestureClass
    freq: Optional[float] = None
    axis: int = 0
    idle: bool = False

    def wrist_path(self, t, rng) -> np.ndarray:
        shape = SHAPES[self.name]
        center = (rng.uniform(*shape["x"]), rng.uniform(*shape["y"]))
        if self.freq is None:
            return _hold(center, t, rng)
        return _oscillate(center, rng.uniform(*shape["amp"]), self.freq, self.axis, t, rng)


PRIMITIVES = {
    GestureClass.STOP: (
        MotionPrimitive("overhead_raise_hold", GestureClass.STOP),
        MotionPrimitive("chest_extended_arm", GestureClass.STOP),
        MotionPrimitive("slow_vertical_wave", GestureClass.STOP, FREQ_STOP_WAVE, axis=1),
    ),
    GestureClass.GO: (
        MotionPrimitive("side_to_side_swing", GestureClass.GO, FREQ_GO_SWING, axis=0),
    ),
    GestureClass.THANK_GREET: (
        MotionPrimitive("head_level_raise", GestureClass.THANK_GREET, FREQ_GREET_WAVE, axis=0),
        MotionPrimitive("near_head_wave", GestureClass.THANK_GREET, FREQ_GREET_WAVE, axis=0),
        MotionPrimitive("chest_thumbs_up", GestureClass.THANK_GREET, FREQ_GREET_WAVE, axis=1),
    ),
    GestureClass.NO_GESTURE: (
        MotionPrimitive("idle_sway", GestureClass.NO_GESTURE, idle=True),
    ),
}


def _solve_elbows(shoulder, wrist, outward, start_elbow):
    """Two-link IK per frame, keeping whichever elbow solution is closest to the last one."""
    T = len(wrist)
    elbows = np.empty((T, 2))
    prev = start_elbow
    a, b = UPPER_ARM, FOREARM
    for t in range(T):
        v = wrist[t] - shoulder[t]
        d = float(np.hypot(v[0], v[1]))
        d_c = min(max(d, abs(a - b) + 1e-6), a + b - 1e-6)
        u = v / d if d > 0 else np.array([outward, 1.0]) / np.hypot(1.0, 1.0)
        along = (a * a - b * b + d_c * d_c) / (2 * d_c)
        h = math.sqrt(max(a * a - along * along, 0.0))
        n = np.array([-u[1], u[0]])
        c1 = shoulder[t] + along * u + h * n
        c2 = shoulder[t] + along * u - h * n
        prev = c1 if np.sum((c1 - prev) ** 2) <= np.sum((c2 - prev) ** 2) else c2
        elbows[t] = prev
    return elbows


def _rest_wrist(rng):
    # hands hang at the side, or are held a little higher and further in
    # (clasped, on a bag strap); varies between people
    return REST_WRIST + np.array([-rng.uniform(0.0, REST_SPREAD[0]), -rng.uniform(0.0, REST_SPREAD[1])])


def _idle_wrist(t, rng, rest, amp_range=(0.002, 0.006), freq_range=(0.2, 0.4)):
    amp = rng.uniform(*amp_range)
    f = rng.uniform(*freq_range)
    phase = rng.uniform(0, 2 * np.pi)
    out = np.tile(rest, (len(t), 1))
    out[:, 0] += amp * np.sin(2 * np.pi * f * t + phase)
    return out


def _render(traj_wrist, t, rng, params: SynthParams, rest):
    """Pose in body-height units for every frame, (T, 17, 2), y down."""
    T = len(t)
    pose = np.zeros((T, 17, 2))
    build_jitter = rng.normal(0.0, 0.004, size=(17, 2))
    for kp, xy in TEMPLATE.items():
        pose[:, kp] = np.asarray(xy) + build_jitter[kp]

    # upper body sway about the hips
    sway = rng.uniform(0.002, 0.006) * np.sin(2 * np.pi * rng.uniform(0.15, 0.35) * t + rng.uniform(0, 6.3))
    for kp in HEAD + (K.LEFT_SHOULDER, K.RIGHT_SHOULDER):
        pose[:, kp, 0] += sway

    left_active = params.handedness == "left"
    active_side = (K.LEFT_SHOULDER, K.LEFT_ELBOW, K.LEFT_WRIST, 1.0) if left_active else (
        K.RIGHT_SHOULDER, K.RIGHT_ELBOW, K.RIGHT_WRIST, -1.0)
    passive_side = (K.RIGHT_SHOULDER, K.RIGHT_ELBOW, K.RIGHT_WRIST, -1.0) if left_active else (
        K.LEFT_SHOULDER, K.LEFT_ELBOW, K.LEFT_WRIST, 1.0)

    wrist_rel = traj_wrist if traj_wrist is not None else _idle_wrist(t, rng, rest)

    # raising the arm lifts its shoulder and tips the head and torso away from it
    lift = np.clip((REST_WRIST[1] - wrist_rel[:, 1]) / 0.6, 0.0, 1.0)
    s_kp, _, _, out_sign = active_side
    pose[:, s_kp, 1] -= SHOULDER_LIFT * lift
    for kp in HEAD:
        pose[:, kp, 0] -= out_sign * HEAD_TILT * lift
    pose[:, passive_side[0], 0] -= out_sign * 0.006 * lift

    for (s_kp, e_kp, w_kp, sign), rel in ((active_side, wrist_rel), (passive_side, _idle_wrist(t, rng, _rest_wrist(rng), FIDGET_AMP, FIDGET_FREQ))):
        shoulder = pose[:, s_kp]
        wrist = shoulder + rel * np.array([sign, 1.0])
        start = shoulder[0] + np.array([sign * 0.02, UPPER_ARM * 0.99])
        pose[:, e_kp] = _solve_elbows(shoulder, wrist, sign, start)
        pose[:, w_kp] = wrist
    return pose


def generate_sequence(
    cls,
    params: SynthParams = SynthParams(),
    seed: Optional[int] = None,
    primitive: Optional[str] = None,
    source_id: Optional[str] = None,
) -> KeypointSequence:
    """One labelled pixel-space sequence; a pure function of (cls, params, seed, primitive)."""
    cls = GestureClass.parse(cls)
    seed = params.seed if seed is None else seed
    rng = rng_for(seed, 0x5E9, int(cls))

    choices = PRIMITIVES[cls]
    pick = choices[int(rng.integers(len(choices)))]
    if primitive is not None:
        named = {p.name: p for p in choices}
        if primitive not in named:
            raise ValueError(f"{primitive!r} is not a {cls.slug} primitive; choose from {sorted(named)}")
        pick = named[primitive]

    lo, hi = params.frame_bounds(cls)
    n_frames = int(rng.integers(lo, hi + 1))
    t = np.arange(n_frames) / params.fps
    duration = n_frames / params.fps

    rest = _rest_wrist(rng)
    if pick.idle:
        traj = None
    else:
        wrist_path = pick.wrist_path(t, rng)
        env = _envelope(t, duration, rng)[:, None]
        traj = rest + env * (wrist_path - rest)

    pose = _render(traj, t, rng, params, rest)

    height = params.body_height * rng.uniform(0.97, 1.03)
    origin = np.array([rng.uniform(760.0, 1160.0), rng.uniform(560.0, 640.0)])
    pixels = origin + pose * height
    if params.noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, params.noise_sigma, size=pixels.shape)
    c_lo, c_hi = params.confidence_range
    conf = rng.uniform(c_lo, c_hi, size=pixels.shape[:2])

    # sub-pixel precision of a real detector; keeps files compact and exact on reload
    return KeypointSequence(
        points=np.round(pixels, 3),
        confidence=np.round(conf, 4),
        fps=params.fps,
        source_id=source_id or f"{cls.slug}_{seed}",
        label=int(cls),
        gesture_range=(0, n_frames),
    )


def sequence_seed(seed: int, cls, index: int) -> int:
    return mix(seed, int(cls), index)


def generate_corpus(
    params: SynthParams = SynthParams(),
    counts=DEFAULT_COUNTS,
    seed: Optional[int] = None,
    out_dir=None,
) -> tuple[list[KeypointSequence], DatasetManifest]:
    """Generate ``counts[c]`` sequences per class and optionally write them to ``out_dir``.

    Files land in ``out_dir/sequences/<class>_<index>.json`` next to
    ``out_dir/manifest.json``; every gesture range spans the whole sequence.
    """
    seed = params.seed if seed is None else seed
    counts = tuple(int(c) for c in counts)
    if len(counts) != len(GestureClass) or min(counts) < 1:
        raise ValueError(f"counts needs one positive value per class, got {counts}")
    sequences, entries = [], []
    for cls in GestureClass:
        for index in range(counts[cls]):
            name = f"{cls.slug}_{index:03d}"
            seq = generate_sequence(cls, params, sequence_seed(seed, cls, index), source_id=name)
            sequences.append(seq)
            entries.append(ManifestEntry(f"sequences/{name}.json", cls, (0, len(seq))))
    meta = {
        "generator": "pedgesture.synth",
        "seed": seed,
        "counts": dict(zip((c.slug for c in GestureClass), counts)),
        "params": _params_doc(params),
    }
    manifest = DatasetManifest(entries, params.fps, meta)
    if out_dir is not None:
        write_corpus(sequences, manifest, out_dir)
    return sequences, manifest


def _params_doc(params: SynthParams) -> dict:
    doc = asdict(params)
    doc["durations"] = {c.slug: list(params.durations[c]) for c in GestureClass}
    doc["confidence_range"] = list(params.confidence_range)
    return doc


def write_corpus(sequences, manifest: DatasetManifest, out_dir) -> Path:
    out = Path(out_dir)
    (out / "sequences").mkdir(parents=True, exist_ok=True)
    for seq, entry in zip(sequences, manifest.entries):
        (out / entry.path).write_text(serialize_sequence(seq))
    path = out / "manifest.json"
    path.write_text(manifest.dumps())
    return path


def primitive_names(cls) -> list[str]:
    return [p.name for p in PRIMITIVES[GestureClass.parse(cls)]]
