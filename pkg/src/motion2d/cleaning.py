"""Corpus ingestion and the three-stage cleaning pipeline.

A sample survives cleaning iff every character track passes the limb
integrity and motion smoothness checks and the sample as a whole passes
contextual stability. Raw corpus files carry pixel coordinates; smoothness
thresholds are stated in normalized units, so the pipeline normalizes each
sample on read before measuring displacements.

Manifests are line-delimited JSON, one record per sample:
``{"source_id": str, "path": str, "person_count": int, "length": int}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict

import numpy as np

from .motion import (
    FACE_INDICES,
    MotionError,
    MotionSample,
    normalize,
    read_motion_file,
)

_COUNT_PREFIX = re.compile(r"^[12] persons\. ")


@dataclass
class CleaningConfig:
    conf_threshold: float = 0.5
    face_conf_threshold: float = 0.5
    tau_smooth: float = 0.08          # normalized units
    irregular_frame_fraction: float = 0.05
    person_count_change_limit: int = 4

    def __post_init__(self):
        if self.conf_threshold <= 0 or self.face_conf_threshold <= 0:
            raise ValueError("confidence thresholds must be positive")
        if self.tau_smooth <= 0:
            raise ValueError("tau_smooth must be positive")
        if not 0 < self.irregular_frame_fraction <= 1:
            raise ValueError("irregular_frame_fraction must be in (0, 1]")
        if self.person_count_change_limit < 0:
            raise ValueError("person_count_change_limit must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "CleaningConfig":
        return cls(**data)


@dataclass
class SampleVerdict:
    source_id: str
    accepted: bool
    rule: str | None = None  # first failing rule, None when accepted


@dataclass
class CleaningReport:
    ingested: int = 0
    accepted: int = 0
    rejections: dict = field(default_factory=dict)  # rule -> count
    verdicts: list = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return sum(self.rejections.values())

    def to_dict(self) -> dict:
        return {
            "ingested": self.ingested,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejections": dict(sorted(self.rejections.items())),
            "verdicts": [asdict(v) for v in self.verdicts],
        }


def check_limb_integrity(track: np.ndarray, cfg: CleaningConfig) -> bool:
    """Mean confidence over all keypoints and over the face must clear thresholds."""
    conf = track[:, :, 2]
    face = conf[:, list(FACE_INDICES)]
    return bool(conf.mean() > cfg.conf_threshold and face.mean() > cfg.face_conf_threshold)


def check_motion_smoothness(track: np.ndarray, cfg: CleaningConfig) -> tuple[bool, list[int]]:
    """Flag frames whose mean inter-frame displacement exceeds tau_smooth.

    Passes iff the flagged fraction of transitions stays within
    ``irregular_frame_fraction``. Single-frame tracks pass vacuously.
    Expects normalized coordinates.
    """
    length = track.shape[0]
    if length < 2:
        return True, []
    deltas = track[1:, :, :2] - track[:-1, :, :2]
    d = np.linalg.norm(deltas, axis=-1).mean(axis=-1)  # d_f for f = 1..L-1
    flagged = [int(f) + 1 for f in np.nonzero(d > cfg.tau_smooth)[0]]
    ok = len(flagged) / (length - 1) <= cfg.irregular_frame_fraction
    return bool(ok), flagged


def check_contextual_stability(counts: list[int], cfg: CleaningConfig) -> bool:
    """Pass iff the valid-person count changes at most ``person_count_change_limit`` times."""
    counts = list(counts)
    changes = sum(1 for prev, cur in zip(counts, counts[1:]) if cur != prev)
    return changes <= cfg.person_count_change_limit


def per_frame_valid_counts(sample: MotionSample, cfg: CleaningConfig) -> list[int]:
    """Number of tracks passing the per-frame limb-integrity confidence test."""
    length = sample.length
    counts = np.zeros(length, dtype=np.int64)
    for track in sample.tracks:
        conf = track[:, :, 2]
        face = conf[:, list(FACE_INDICES)]
        valid = (conf.mean(axis=1) > cfg.conf_threshold) & (
            face.mean(axis=1) > cfg.face_conf_threshold
        )
        counts += valid.astype(np.int64)
    return counts.tolist()


def judge_sample(sample: MotionSample, cfg: CleaningConfig) -> str | None:
    """First failing rule for a (pixel-space) sample, or None when it passes."""
    for track in sample.tracks:
        if not check_limb_integrity(track, cfg):
            return "limb_integrity"
    normalized = normalize(sample)
    for track in normalized.tracks:
        ok, _ = check_motion_smoothness(track, cfg)
        if not ok:
            return "smoothness"
    if not check_contextual_stability(per_frame_valid_counts(sample, cfg), cfg):
        return "stability"
    return None


@dataclass
class ManifestEntry:
    source_id: str
    path: str
    person_count: int
    length: int

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "path": self.path,
            "person_count": self.person_count,
            "length": self.length,
        }


def write_manifest(entries: list[ManifestEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_dict()) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                entries.append(ManifestEntry(
                    source_id=data["source_id"],
                    path=data["path"],
                    person_count=int(data["person_count"]),
                    length=int(data["length"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MotionError(f"manifest line {i + 1}: {exc}") from exc
    return entries


def manifest_entry_for(sample: MotionSample, path: str) -> ManifestEntry:
    return ManifestEntry(
        source_id=sample.source_id,
        path=str(path),
        person_count=sample.person_count,
        length=sample.length,
    )


def clean_dataset(
    entries: list[ManifestEntry], cfg: CleaningConfig
) -> tuple[list[ManifestEntry], CleaningReport]:
    """Apply all three cleaning rules to every referenced file.

    Unreadable or malformed files become "io" rejections; the batch never
    aborts. Output is sorted by source_id so verdicts are order-independent.
    """
    report = CleaningReport(ingested=len(entries))
    accepted: list[ManifestEntry] = []
    for entry in sorted(entries, key=lambda e: e.source_id):
        try:
            sample = read_motion_file(entry.path)
        except (OSError, MotionError):
            rule = "io"
        else:
            rule = judge_sample(sample, cfg)
        if rule is None:
            accepted.append(entry)
            report.verdicts.append(SampleVerdict(entry.source_id, True))
        else:
            report.rejections[rule] = report.rejections.get(rule, 0) + 1
            report.verdicts.append(SampleVerdict(entry.source_id, False, rule))
    report.accepted = len(accepted)
    return accepted, report


def augment_caption_with_count(sample: MotionSample) -> MotionSample:
    """Prefix the caption with the person count; repeated application is a no-op."""
    if sample.person_count not in (1, 2):
        raise MotionError(f"person_count must be 1 or 2, got {sample.person_count}")
    out = sample.copy()
    if not _COUNT_PREFIX.match(out.caption):
        out.caption = f"{out.person_count} persons. {out.caption}"
    return out


def split_dataset(
    entries: list[ManifestEntry], test_fraction: float, seed: int
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Deterministic stratified train/test split keyed on person_count."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    strata: dict[int, list[ManifestEntry]] = {}
    for entry in entries:
        strata.setdefault(entry.person_count, []).append(entry)
    rng = np.random.default_rng(seed)
    train: list[ManifestEntry] = []
    test: list[ManifestEntry] = []
    for count in sorted(strata):
        group = sorted(strata[count], key=lambda e: e.source_id)
        if len(group) < 2:
            raise MotionError(
                f"stratum person_count={count} has {len(group)} sample(s); need at least 2"
            )
        n_test = int(round(test_fraction * len(group)))
        n_test = min(max(n_test, 1), len(group) - 1)
        order = rng.permutation(len(group))
        test.extend(group[i] for i in sorted(order[:n_test]))
        train.extend(group[i] for i in sorted(order[n_test:]))
    train.sort(key=lambda e: e.source_id)
    test.sort(key=lambda e: e.source_id)
    return train, test
