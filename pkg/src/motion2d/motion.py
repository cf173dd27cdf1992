"""Canonical 2D skeleton motion data model, file format, and geometry helpers.

A motion sample holds 1 or 2 character tracks of COCO-17 keypoint frames
plus a caption and provenance metadata. Tracks are numpy arrays of shape
``(L, 17, 3)`` with channels (x, y, confidence).

Coordinate convention: files produced by pose annotation are in pixel
space (x in [0, width], y in [0, height]); ``normalize`` maps them to the
model's [-1, 1] space and ``denormalize`` inverts that exactly. The file
format itself is space-agnostic; the training loader normalizes on read
and the sampler denormalizes before writing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

NUM_KEYPOINTS = 17
MAX_FRAMES = 300

# COCO-17 limb set: (parent, child) joint index pairs.
SKELETON_EDGES = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12), (5, 11), (6, 12),
    (5, 6), (5, 7), (6, 8), (7, 9), (8, 10), (1, 2), (0, 1), (0, 2),
    (1, 3), (2, 4), (3, 5), (4, 6),
)

# Nose, eyes, and ears.
FACE_INDICES = (0, 1, 2, 3, 4)


class MotionError(ValueError):
    """Invalid motion data or operation preconditions."""


class MotionFileError(MotionError):
    """Malformed motion file; the message names the offending field."""


@dataclass
class SkeletonTopology:
    """Fixed bone list over 17 joints; shared by losses and rendering."""

    edges: tuple[tuple[int, int], ...] = SKELETON_EDGES
    face_indices: tuple[int, ...] = FACE_INDICES

    def __post_init__(self):
        for a, b in self.edges:
            if not (0 <= a < NUM_KEYPOINTS and 0 <= b < NUM_KEYPOINTS):
                raise MotionError(f"edge ({a},{b}) out of joint range")

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=np.int64)


@dataclass
class MotionSample:
    """One ingestion/training/generation unit: tracks + caption + metadata.

    tracks: list of 1 or 2 float arrays of shape (L, 17, 3); all equal L.
    person_count stays 1 for single-character samples even after the track
    has been replicated into a pair (``replicated`` marks that state).
    """

    tracks: list[np.ndarray]
    caption: str
    person_count: int
    source_id: str
    frame_size: tuple[int, int]
    replicated: bool = False

    @property
    def length(self) -> int:
        return int(self.tracks[0].shape[0]) if self.tracks else 0

    def copy(self) -> "MotionSample":
        return replace(self, tracks=[t.copy() for t in self.tracks])


def validate_sample(sample: MotionSample) -> list[str]:
    """Check every type invariant; violations come back as strings, not raises."""
    problems: list[str] = []
    if not 1 <= len(sample.tracks) <= 2:
        problems.append(f"expected 1 or 2 tracks, got {len(sample.tracks)}")
    if sample.person_count not in (1, 2):
        problems.append(f"person_count must be 1 or 2, got {sample.person_count}")
    lengths = {int(t.shape[0]) for t in sample.tracks}
    if len(lengths) > 1:
        problems.append(f"unequal track lengths: {sorted(lengths)}")
    for ci, track in enumerate(sample.tracks):
        if track.ndim != 3 or track.shape[1:] != (NUM_KEYPOINTS, 3):
            problems.append(f"track {ci} has shape {track.shape}, expected (L, 17, 3)")
            continue
        if not 1 <= track.shape[0] <= MAX_FRAMES:
            problems.append(f"track {ci} length {track.shape[0]} outside [1, {MAX_FRAMES}]")
        if not np.all(np.isfinite(track)):
            problems.append(f"track {ci} contains non-finite values")
            continue
        conf = track[:, :, 2]
        if conf.min() < 0.0 or conf.max() > 1.0:
            problems.append(f"track {ci} confidence out of range [0, 1]")
    if sample.replicated and len(sample.tracks) == 2:
        if not np.array_equal(sample.tracks[0], sample.tracks[1]):
            problems.append("replicated flag set but tracks differ")
    if len(sample.frame_size) != 2 or any(s <= 0 for s in sample.frame_size):
        problems.append(f"frame_size must be two positive ints, got {sample.frame_size}")
    return problems


def normalize(sample: MotionSample) -> MotionSample:
    """Map pixel coordinates to [-1, 1]^2; confidence untouched."""
    w, h = sample.frame_size
    if w <= 0 or h <= 0:
        raise MotionError(f"frame_size must be positive, got {sample.frame_size}")
    out = sample.copy()
    for track in out.tracks:
        track[:, :, 0] = 2.0 * (track[:, :, 0] / w) - 1.0
        track[:, :, 1] = 2.0 * (track[:, :, 1] / h) - 1.0
    return out


def denormalize(sample: MotionSample) -> MotionSample:
    """Exact inverse of :func:`normalize`."""
    w, h = sample.frame_size
    if w <= 0 or h <= 0:
        raise MotionError(f"frame_size must be positive, got {sample.frame_size}")
    out = sample.copy()
    for track in out.tracks:
        track[:, :, 0] = (track[:, :, 0] + 1.0) / 2.0 * w
        track[:, :, 1] = (track[:, :, 1] + 1.0) / 2.0 * h
    return out


def replicate_single_to_pair(sample: MotionSample) -> MotionSample:
    """Duplicate a single-character track so one architecture serves both counts."""
    if len(sample.tracks) != 1:
        raise MotionError(f"expected a 1-track sample, got {len(sample.tracks)} tracks")
    if sample.person_count != 1:
        raise MotionError("replicate_single_to_pair requires person_count == 1")
    out = sample.copy()
    out.tracks = [out.tracks[0], out.tracks[0].copy()]
    out.replicated = True
    return out


def bone_lengths(pose: np.ndarray, topology: SkeletonTopology | None = None) -> np.ndarray:
    """Per-edge Euclidean lengths of a (17, 3) or (17, 2) pose, on (x, y) only."""
    topology = topology or SkeletonTopology()
    pose = np.asarray(pose, dtype=np.float64)
    edges = topology.edge_array()
    diffs = pose[edges[:, 0], :2] - pose[edges[:, 1], :2]
    return np.linalg.norm(diffs, axis=-1)


def frame_displacement(track: np.ndarray, f: int) -> float:
    """Mean per-joint displacement between frames f-1 and f, on (x, y) only."""
    if f < 1:
        raise MotionError(f"frame_displacement needs f >= 1, got {f}")
    if f >= track.shape[0]:
        raise MotionError(f"frame index {f} out of range for length {track.shape[0]}")
    deltas = track[f, :, :2] - track[f - 1, :, :2]
    return float(np.mean(np.linalg.norm(deltas, axis=-1)))


def _require(cond: bool, field_name: str, message: str):
    if not cond:
        raise MotionFileError(f"{field_name}: {message}")


def sample_to_dict(sample: MotionSample) -> dict:
    """Plain-JSON form of a sample, schema key order preserved."""
    return {
        "source_id": sample.source_id,
        "caption": sample.caption,
        "person_count": sample.person_count,
        "replicated": sample.replicated,
        "frame_size": [int(sample.frame_size[0]), int(sample.frame_size[1])],
        "tracks": [np.asarray(t, dtype=np.float64).tolist() for t in sample.tracks],
    }


def sample_from_dict(data: dict) -> MotionSample:
    """Parse and validate the Motion JSON schema; errors name the bad field."""
    _require(isinstance(data, dict), "root", "expected a JSON object")
    for key in ("source_id", "caption", "person_count", "replicated", "frame_size", "tracks"):
        _require(key in data, key, "missing key")
    _require(isinstance(data["source_id"], str), "source_id", "expected string")
    _require(isinstance(data["caption"], str), "caption", "expected string")
    _require(data["person_count"] in (1, 2), "person_count",
             f"expected 1 or 2, got {data['person_count']!r}")
    _require(isinstance(data["replicated"], bool), "replicated", "expected bool")
    fs = data["frame_size"]
    _require(isinstance(fs, list) and len(fs) == 2, "frame_size", "expected [w, h]")
    _require(all(isinstance(v, (int, float)) and v > 0 for v in fs),
             "frame_size", "entries must be positive numbers")
    raw_tracks = data["tracks"]
    _require(isinstance(raw_tracks, list) and 1 <= len(raw_tracks) <= 2,
             "tracks", "expected a list of 1 or 2 tracks")
    tracks: list[np.ndarray] = []
    for ci, raw in enumerate(raw_tracks):
        name = f"tracks[{ci}]"
        _require(isinstance(raw, list) and len(raw) >= 1, name, "expected a non-empty frame list")
        for fi, frame in enumerate(raw):
            _require(isinstance(frame, list) and len(frame) == NUM_KEYPOINTS,
                     f"{name}[{fi}]", f"expected {NUM_KEYPOINTS} keypoints, got "
                     f"{len(frame) if isinstance(frame, list) else type(frame).__name__}")
            for ji, kp in enumerate(frame):
                _require(isinstance(kp, list) and len(kp) == 3,
                         f"{name}[{fi}][{ji}]", "expected [x, y, conf]")
                for v in kp:
                    _require(isinstance(v, (int, float)) and math.isfinite(v),
                             f"{name}[{fi}][{ji}]", "non-finite value")
        arr = np.asarray(raw, dtype=np.float64)
        tracks.append(arr)
    lengths = {t.shape[0] for t in tracks}
    _require(len(lengths) == 1, "tracks", f"unequal track lengths {sorted(lengths)}")
    sample = MotionSample(
        tracks=tracks,
        caption=data["caption"],
        person_count=int(data["person_count"]),
        source_id=data["source_id"],
        frame_size=(int(fs[0]), int(fs[1])),
        replicated=bool(data["replicated"]),
    )
    return sample


def write_motion_file(sample: MotionSample, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sample_to_dict(sample), fh)
        fh.write("\n")


def read_motion_file(path) -> MotionSample:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MotionFileError(f"root: invalid JSON ({exc})") from exc
    return sample_from_dict(data)
