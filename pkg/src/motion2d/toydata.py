"""Procedural toy corpora: small, fully controlled motion/caption sets.

Used by the test suite and the example scripts to exercise the whole
pipeline without any real annotation data. All samples are written in
pixel coordinates for a 640x480 frame.
"""

from __future__ import annotations

import numpy as np

from .cleaning import ManifestEntry, manifest_entry_for
from .motion import MotionSample, write_motion_file

FRAME_SIZE = (640, 480)

# Upright stick figure, COCO-17 joint offsets in pixels relative to a center
# point at the hips. Y grows downward as in image coordinates.
_BASE_POSE = np.array([
    [0, -90],     # 0 nose
    [-8, -95],    # 1 left eye
    [8, -95],     # 2 right eye
    [-16, -92],   # 3 left ear
    [16, -92],    # 4 right ear
    [-30, -60],   # 5 left shoulder
    [30, -60],    # 6 right shoulder
    [-45, -25],   # 7 left elbow
    [45, -25],    # 8 right elbow
    [-55, 5],     # 9 left wrist
    [55, 5],      # 10 right wrist
    [-20, 10],    # 11 left hip
    [20, 10],     # 12 right hip
    [-22, 55],    # 13 left knee
    [22, 55],     # 14 right knee
    [-24, 100],   # 15 left ankle
    [24, 100],    # 16 right ankle
], dtype=np.float64)

ARM_JOINTS = (7, 8, 9, 10)
UPPER_JOINTS = (0, 1, 2, 3, 4, 5, 6)


def base_pose(center: tuple[float, float]) -> np.ndarray:
    pose = _BASE_POSE.copy()
    pose[:, 0] += center[0]
    pose[:, 1] += center[1]
    return pose


def _track_from_poses(poses: np.ndarray, conf: float = 0.9) -> np.ndarray:
    length = poses.shape[0]
    track = np.zeros((length, 17, 3))
    track[:, :, :2] = poses
    track[:, :, 2] = conf
    return track


def _animate(center, length, fn) -> np.ndarray:
    """Apply fn(pose, phase) per frame; phase runs 0..1 over the track."""
    poses = np.zeros((length, 17, 2))
    for f in range(length):
        pose = base_pose(center)
        fn(pose, f / max(length - 1, 1))
        poses[f] = pose
    return poses


def _wave(pose, phase):
    lift = 55.0 * np.sin(2 * np.pi * 2 * phase)
    pose[list(ARM_JOINTS), 1] -= 40.0 + 0.5 * lift
    pose[[9, 10], 0] += 12.0 * np.sin(2 * np.pi * 2 * phase)


def _jump(pose, phase):
    pose[:, 1] -= 20.0 * max(0.0, np.sin(2 * np.pi * 2 * phase))


def _crouch(pose, phase):
    drop = 35.0 * (0.5 - 0.5 * np.cos(2 * np.pi * phase))
    upper = pose[:, 1] < pose[11, 1]
    pose[upper, 1] += drop
    pose[[13, 14], 0] += 10.0 * (drop / 35.0)


def _lean(pose, phase):
    tilt = 25.0 * np.sin(2 * np.pi * 1.5 * phase)
    upper = pose[:, 1] < pose[11, 1]
    pose[upper, 0] += tilt


def _bow(pose, phase):
    dip = 45.0 * (0.5 - 0.5 * np.cos(2 * np.pi * 2 * phase))
    head = pose[:, 1] < pose[5, 1]
    pose[head, 1] += dip


def _march(pose, phase):
    swing = 14.0 * np.sin(2 * np.pi * 3 * phase)
    pose[[13, 15], 1] -= max(0.0, swing)
    pose[[14, 16], 1] -= max(0.0, -swing)


def _pair(track_a, track_b, caption, source_id) -> MotionSample:
    return MotionSample(
        tracks=[_track_from_poses(track_a), _track_from_poses(track_b)],
        caption=caption,
        person_count=2,
        source_id=source_id,
        frame_size=FRAME_SIZE,
    )


def toy_training_corpus(length: int = 24) -> list[MotionSample]:
    """Eight mutually distinct two-character caption/motion pairs."""
    left = (220.0, 240.0)
    right = (420.0, 240.0)
    samples = []

    a = _animate(left, length, _wave)
    b = _animate(right, length, _wave)
    samples.append(_pair(a, b, "Person 1 and Person 2 wave their arms", "toy-000"))

    a = _animate(left, length, lambda p, ph: None)
    b = _animate(right, length, lambda p, ph: None)
    drift = np.linspace(0, 70, length)
    a[:, :, 0] += drift[:, None]
    b[:, :, 0] -= drift[:, None]
    samples.append(_pair(a, b, "Person 1 and Person 2 walk toward each other", "toy-001"))

    a = _animate(left, length, _jump)
    b = _animate(right, length, _jump)
    samples.append(_pair(a, b, "Person 1 and Person 2 jump up and down together", "toy-002"))

    a = _animate(left, length, _crouch)
    b = _animate(right, length, lambda p, ph: None)
    samples.append(_pair(a, b, "Person 1 crouches low while Person 2 stands still", "toy-003"))

    a = _animate(left, length, _lean)
    b = _animate(right, length, _lean)
    samples.append(_pair(a, b, "Person 1 and Person 2 lean from side to side", "toy-004"))

    a = _animate(left, length, _bow)
    b = _animate(right, length, _bow)
    samples.append(_pair(a, b, "Person 1 and Person 2 bow forward repeatedly", "toy-005"))

    a = _animate(left, length, lambda p, ph: None)
    b = _animate(right, length, lambda p, ph: None)
    walk = np.linspace(0, 110, length)
    b[:, :, 0] += walk[:, None]
    b[:, :, 1] -= 8.0 * np.abs(np.sin(np.linspace(0, 3 * np.pi, length)))[:, None]
    samples.append(_pair(a, b, "Person 2 walks away to the right while Person 1 stays", "toy-006"))

    a = _animate(left, length, _march)
    b = _animate(right, length, _march)
    samples.append(_pair(a, b, "Person 1 and Person 2 march in place lifting their knees", "toy-007"))

    return samples


def _static_sample(source_id, caption, n_tracks=2, length=30, conf=0.9,
                   drift_px=3.0, seed=0) -> MotionSample:
    """Smooth, high-confidence sample: passes every cleaning rule."""
    rng = np.random.default_rng(seed)
    centers = [(220.0, 240.0), (420.0, 240.0)][:n_tracks]
    tracks = []
    for center in centers:
        poses = np.zeros((length, 17, 2))
        direction = rng.standard_normal(2)
        direction /= np.linalg.norm(direction)
        for f in range(length):
            poses[f] = base_pose(center) + drift_px * f * direction
        tracks.append(_track_from_poses(poses, conf))
    return MotionSample(tracks, caption, n_tracks, source_id, FRAME_SIZE)


def _teleport(track: np.ndarray, frames: list[int], jump_px: float = 160.0) -> None:
    """Displace single frames so d_f spikes at f and f+1."""
    for f in frames:
        track[f, :, 0] += jump_px


def _dip_confidence(track: np.ndarray, frames: list[int], value: float = 0.1) -> None:
    for f in frames:
        track[f, :, 2] = value


def cleaning_oracle_corpus() -> list[tuple[MotionSample, str | None]]:
    """Twenty crafted samples with hand-derived cleaning verdicts.

    Default thresholds assumed: conf 0.5 / face 0.5, tau_smooth 0.08
    (pixel jump of 160px in a 640-wide frame gives d_f = 0.5),
    irregular_frame_fraction 0.05, person_count_change_limit 4.
    """
    cases: list[tuple[MotionSample, str | None]] = []

    # 1-8: clean samples in assorted shapes; all rules pass.
    cases.append((_static_sample("cl-00", "two people chat", 2, 30, seed=1), None))
    cases.append((_static_sample("cl-01", "a man stands", 1, 30, seed=2), None))
    cases.append((_static_sample("cl-02", "two people shake hands", 2, 60, seed=3), None))
    cases.append((_static_sample("cl-03", "a woman stretches", 1, 12, seed=4), None))
    cases.append((_static_sample("cl-04", "two dancers pose", 2, 45, seed=5), None))
    cases.append((_static_sample("cl-05", "a child hops", 1, 90, seed=6), None))
    cases.append((_static_sample("cl-06", "two workers lift a box", 2, 24, seed=7), None))
    cases.append((_static_sample("cl-07", "a runner jogs", 1, 50, seed=8), None))

    # 9: overall confidence 0.4 < 0.5 on one track.
    cases.append((_static_sample("cl-08", "blurry pair", 2, 30, conf=0.4, seed=9),
                  "limb_integrity"))
    # 10: single low-confidence track.
    cases.append((_static_sample("cl-09", "blurry person", 1, 30, conf=0.4, seed=10),
                  "limb_integrity"))
    # 11: body 0.9 but all five face keypoints 0.2.
    # Overall mean (12*0.9 + 5*0.2)/17 ~ 0.694 > 0.5, face mean 0.2 < 0.5 -> fail.
    s = _static_sample("cl-10", "face occluded", 1, 30, conf=0.9, seed=11)
    s.tracks[0][:, :5, 2] = 0.2
    cases.append((s, "limb_integrity"))

    # 12: half of all frames teleport; flagged fraction far above 0.05.
    s = _static_sample("cl-11", "jittery pair", 2, 30, seed=12)
    _teleport(s.tracks[0], list(range(1, 30, 2)))
    cases.append((s, "smoothness"))
    # 13: every frame jumps 160px (d_f = 0.5 > 0.08 for all transitions).
    s = _static_sample("cl-12", "teleporting person", 1, 20, seed=13, drift_px=0.0)
    s.tracks[0][:, :, 0] += 160.0 * np.arange(20)[:, None] % 320
    cases.append((s, "smoothness"))
    # 14: 100 frames, one teleport frame -> 2 flagged transitions of 99 (0.0202 <= 0.05).
    s = _static_sample("cl-13", "one glitch", 1, 100, seed=14)
    _teleport(s.tracks[0], [50])
    cases.append((s, None))
    # 15: 100 frames, three teleport frames -> 6 flagged of 99 (0.0606 > 0.05).
    s = _static_sample("cl-14", "several glitches", 1, 100, seed=15)
    _teleport(s.tracks[0], [20, 50, 80])
    cases.append((s, "smoothness"))

    # 16: three isolated confidence dips -> counts 2,1,2 pattern, 6 changes > 4.
    s = _static_sample("cl-15", "flickering track", 2, 30, seed=16)
    _dip_confidence(s.tracks[1], [5, 15, 25])
    cases.append((s, "stability"))
    # 17: alternating dips over many frames.
    s = _static_sample("cl-16", "unstable tracking", 2, 40, seed=17)
    _dip_confidence(s.tracks[1], [4, 12, 20, 28, 36])
    cases.append((s, "stability"))
    # 18: two isolated dips -> exactly 4 changes = limit, passes.
    s = _static_sample("cl-17", "brief dropouts", 2, 30, seed=18)
    _dip_confidence(s.tracks[1], [8, 22])
    cases.append((s, None))

    # 19: second track low-confidence; every track must pass.
    s = _static_sample("cl-18", "one good one bad", 2, 30, seed=19)
    s.tracks[1][:, :, 2] = 0.3
    cases.append((s, "limb_integrity"))
    # 20: smoothness violation confined to the second track.
    s = _static_sample("cl-19", "partner glitches", 2, 30, seed=20)
    _teleport(s.tracks[1], list(range(1, 30, 2)))
    cases.append((s, "smoothness"))

    return cases


def write_corpus(samples: list[MotionSample], directory) -> list[ManifestEntry]:
    """Write one Motion JSON file per sample; return manifest entries."""
    entries = []
    for sample in samples:
        path = directory / f"{sample.source_id}.json"
        write_motion_file(sample, path)
        entries.append(manifest_entry_for(sample, str(path)))
    return entries
