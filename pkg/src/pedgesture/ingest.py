"""Keypoint-sequence files, dataset manifests, trimming and confidence repair.

Both formats are JSON. Sequence files put one frame per line so diffs stay
readable; floats are written with ``repr`` and therefore round-trip exactly.
See ``docs/formats.md`` for the full grammar.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    KeypointNeverValid,
    MalformedFile,
    ManifestError,
    MissingRange,
    RangeOutOfBounds,
    SchemaViolation,
    TorsoUnrecoverable,
    VersionUnsupported,
)
from .labels import GestureClass
from .skeleton import N_KEYPOINTS, TORSO_KEYPOINTS, KeypointIndex, KeypointSequence

log = logging.getLogger(__name__)

SEQUENCE_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
DEFAULT_FPS = 60.0
DEFAULT_CONFIDENCE_THRESHOLD = 0.3

_SEQUENCE_KEYS = {"schema_version", "source_id", "fps", "frames"}
_MANIFEST_KEYS = {"schema_version", "fps_default", "metadata", "entries"}
_ENTRY_KEYS = {"path", "label", "gesture_start", "gesture_end"}


def _decode(content: Union[bytes, str], what: str):
    if isinstance(content, bytes):
        try:
            content = content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFile(f"{what} is not UTF-8: {exc}") from None
    try:
        doc = json.loads(content)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{what} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedFile(f"{what} must be a JSON object")
    return doc


def _warn_unknown(doc: dict, known: set, what: str):
    extra = sorted(set(doc) - known)
    if extra:
        warnings.warn(f"{what}: ignoring unknown field(s) {extra}", stacklevel=3)


def _check_version(doc: dict, supported: int, what: str):
    if "schema_version" not in doc:
        raise SchemaViolation(f"{what} lacks schema_version")
    if doc["schema_version"] != supported:
        raise VersionUnsupported(
            f"{what} schema_version {doc['schema_version']!r} unsupported (expected {supported})"
        )


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_sequence_file(content: Union[bytes, str], default_fps: float = DEFAULT_FPS) -> KeypointSequence:
    doc = _decode(content, "sequence file")
    _check_version(doc, SEQUENCE_SCHEMA_VERSION, "sequence file")
    _warn_unknown(doc, _SEQUENCE_KEYS, "sequence file")

    fps = doc.get("fps", default_fps)
    if fps is None:
        fps = default_fps
    if not _is_number(fps) or not math.isfinite(fps) or fps <= 0:
        raise SchemaViolation(f"fps must be a positive number, got {fps!r}")
    source_id = doc.get("source_id", "")
    if not isinstance(source_id, str):
        raise SchemaViolation("source_id must be a string")
    frames = doc.get("frames")
    if not isinstance(frames, list) or not frames:
        raise SchemaViolation("frames must be a non-empty list")

    data = np.empty((len(frames), N_KEYPOINTS, 3))
    for t, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != N_KEYPOINTS:
            n = len(frame) if isinstance(frame, list) else type(frame).__name__
            raise SchemaViolation(f"frame {t}: expected 17 keypoints, got {n}")
        for i, kp in enumerate(frame):
            if not (isinstance(kp, list) and len(kp) == 3 and all(_is_number(v) for v in kp)):
                raise SchemaViolation(f"frame {t}, keypoint {i}: expected [x, y, confidence]")
            data[t, i] = kp
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=(1, 2)))[0])
        raise SchemaViolation(f"frame {bad}: non-finite value")
    conf = data[:, :, 2]
    if conf.min() < 0 or conf.max() > 1:
        bad = int(np.flatnonzero(((conf < 0) | (conf > 1)).any(axis=1))[0])
        raise SchemaViolation(f"frame {bad}: confidence outside [0, 1]")
    return KeypointSequence(data[:, :, :2], conf, fps=float(fps), source_id=source_id)


def serialize_sequence(seq: KeypointSequence) -> str:
    header = {
        "schema_version": SEQUENCE_SCHEMA_VERSION,
        "source_id": seq.source_id,
        "fps": float(seq.fps),
    }
    head = ", ".join(f"{json.dumps(k)}: {json.dumps(v)}" for k, v in header.items())
    rows = []
    for pts, conf in zip(seq.points, seq.confidence):
        triples = [[float(x), float(y), float(c)] for (x, y), c in zip(pts, conf)]
        rows.append("  " + json.dumps(triples, separators=(",", ":")))
    return "{" + head + ",\n \"frames\": [\n" + ",\n".join(rows) + "\n ]}\n"


def repair_low_confidence(seq: KeypointSequence, threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> KeypointSequence:
    """Fill keypoints with confidence below ``threshold`` from neighbouring frames.

    Gaps are linearly interpolated between the nearest valid detections of the
    same keypoint; leading and trailing gaps hold the nearest valid value.
    Repaired entries get confidence ``threshold``, which makes the repair
    idempotent.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    valid = seq.confidence >= threshold
    if valid.all():
        return replace(seq, points=seq.points.copy(), confidence=seq.confidence.copy())
    never = [KeypointIndex(i) for i in np.flatnonzero(~valid.any(axis=0))]
    for kp in never:
        if kp in TORSO_KEYPOINTS:
            raise TorsoUnrecoverable(kp)
    if never:
        raise KeypointNeverValid(never[0])

    points = seq.points.copy()
    conf = seq.confidence.copy()
    t = np.arange(len(seq))
    for i in np.flatnonzero(~valid.all(axis=0)):
        ok = valid[:, i]
        for axis in (0, 1):
            points[~ok, i, axis] = np.interp(t[~ok], t[ok], seq.points[ok, i, axis])
        conf[~ok, i] = threshold
    return replace(seq, points=points, confidence=conf)


def trim_gesture_positive(seq: KeypointSequence, gesture_range=None) -> KeypointSequence:
    """Keep only frames inside the half-open gesture interval."""
    rng = gesture_range if gesture_range is not None else seq.gesture_range
    if rng is None:
        raise MissingRange(f"sequence {seq.source_id!r} has no gesture range")
    start, end = int(rng[0]), int(rng[1])
    if not 0 <= start < end <= len(seq):
        raise RangeOutOfBounds(
            f"gesture range [{start}, {end}) outside sequence {seq.source_id!r} of {len(seq)} frames"
        )
    return replace(
        seq,
        points=seq.points[start:end].copy(),
        confidence=seq.confidence[start:end].copy(),
        gesture_range=None,
    )


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: GestureClass
    gesture_range: Optional[tuple[int, int]] = None

    def to_dict(self) -> dict:
        start, end = self.gesture_range if self.gesture_range else (None, None)
        return {"path": self.path, "label": self.label.slug,
                "gesture_start": start, "gesture_end": end}


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    fps_default: float = DEFAULT_FPS
    metadata: dict = field(default_factory=dict)
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def class_counts(self) -> dict[GestureClass, int]:
        counts = {c: 0 for c in GestureClass}
        for e in self.entries:
            counts[e.label] += 1
        return counts

    def dumps(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "fps_default": self.fps_default,
            "metadata": self.metadata,
            "entries": [e.to_dict() for e in self.entries],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_manifest(content: Union[bytes, str]) -> DatasetManifest:
    doc = _decode(content, "manifest")
    _check_version(doc, MANIFEST_SCHEMA_VERSION, "manifest")
    _warn_unknown(doc, _MANIFEST_KEYS, "manifest")
    fps_default = doc.get("fps_default", DEFAULT_FPS)
    if not _is_number(fps_default) or fps_default <= 0:
        raise SchemaViolation(f"fps_default must be a positive number, got {fps_default!r}")
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        raise SchemaViolation("manifest entries must be a list")
    entries, seen = [], set()
    for k, e in enumerate(raw_entries):
        if not isinstance(e, dict) or "path" not in e or "label" not in e:
            raise SchemaViolation(f"manifest entry {k}: needs 'path' and 'label'")
        _warn_unknown(e, _ENTRY_KEYS, f"manifest entry {k}")
        path = e["path"]
        if path in seen:
            raise SchemaViolation(f"manifest entry {k}: duplicate path {path!r}")
        seen.add(path)
        try:
            label = GestureClass.parse(e["label"])
        except ValueError as exc:
            raise SchemaViolation(f"manifest entry {k}: {exc}") from None
        start, end = e.get("gesture_start"), e.get("gesture_end")
        if (start is None) != (end is None):
            raise SchemaViolation(f"manifest entry {k}: gesture_start and gesture_end go together")
        rng = None
        if start is not None:
            if not (isinstance(start, int) and isinstance(end, int)) or not 0 <= start < end:
                raise SchemaViolation(f"manifest entry {k}: bad gesture range [{start}, {end})")
            rng = (start, end)
        entries.append(ManifestEntry(path, label, rng))
    return DatasetManifest(entries, float(fps_default), dict(doc.get("metadata") or {}))


def manifest_hash(content: Union[bytes, str]) -> str:
    if isinstance(content, str):
        content = content.encode("utf-8")
    return hashlib.sha256(content).hexdigest()


@dataclass
class ManifestLoad:
    items: list[tuple[KeypointSequence, GestureClass]]
    errors: list[tuple[str, Exception]]
    manifest: DatasetManifest

    def class_counts(self) -> dict[GestureClass, int]:
        counts = {c: 0 for c in GestureClass}
        for _, label in self.items:
            counts[label] += 1
        return counts


def load_entry(entry: ManifestEntry, base_path, fps_default=DEFAULT_FPS,
               threshold=DEFAULT_CONFIDENCE_THRESHOLD) -> KeypointSequence:
    path = Path(base_path) / entry.path
    seq = parse_sequence_file(path.read_bytes(), default_fps=fps_default)
    seq = replace(seq, label=int(entry.label), source_id=seq.source_id or Path(entry.path).stem)
    seq = repair_low_confidence(seq, threshold)
    if entry.gesture_range is not None:
        seq = trim_gesture_positive(seq, entry.gesture_range)
    return seq


def load_manifest(
    content: Union[bytes, str],
    base_path,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    fail_fast: bool = False,
    n_jobs: int = 1,
) -> ManifestLoad:
    """Load, repair and trim every manifest entry.

    Entries without a gesture range are kept whole. Per-entry failures are
    collected with their paths (or raised at once with ``fail_fast``); results
    keep manifest order whatever ``n_jobs`` is.
    """
    manifest = parse_manifest(content)

    def one(entry):
        try:
            return load_entry(entry, base_path, manifest.fps_default, threshold), None
        except (OSError, ValueError) as exc:
            if fail_fast:
                raise ManifestError([(entry.path, exc)]) from exc
            return None, exc

    if n_jobs == 1:
        results = [one(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, manifest.entries))

    items, errors = [], []
    for entry, (seq, exc) in zip(manifest.entries, results):
        if exc is not None:
            log.warning("failed to load %s: %s", entry.path, exc)
            errors.append((entry.path, exc))
        else:
            items.append((seq, entry.label))
    return ManifestLoad(items, errors, manifest)
