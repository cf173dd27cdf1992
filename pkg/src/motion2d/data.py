"""Model-facing dataset: normalized, replicated, padded, caption-encoded batches.

Reads pixel-space Motion JSON files, normalizes them to [-1, 1], replicates
single-character samples into identical pairs, prefixes captions with the
person count, and encodes captions once through the text pipeline (encoders
are frozen, so features are cached per sample). Frames are padded to a
common maximum with an explicit validity mask.
"""

from __future__ import annotations

import numpy as np
import torch

from .cleaning import ManifestEntry, augment_caption_with_count
from .denoiser import collate_text
from .motion import MotionError, MotionSample, normalize, read_motion_file, replicate_single_to_pair
from .text import TextFeatures, TextPipeline


class DatasetError(ValueError):
    """Invalid dataset construction or batch request."""


def sample_to_model_pair(sample: MotionSample) -> np.ndarray:
    """Normalized sample -> [2, L, 34] coordinate array (confidence dropped)."""
    if len(sample.tracks) == 1:
        sample = replicate_single_to_pair(sample)
    pair = np.stack([t[:, :, :2].reshape(t.shape[0], 34) for t in sample.tracks])
    return pair.astype(np.float64)


def model_pair_to_sample(pair: np.ndarray, caption: str, source_id: str,
                         frame_size: tuple[int, int], person_count: int = 2) -> MotionSample:
    """[2, L, 34] normalized coordinates -> MotionSample (confidence 1.0)."""
    tracks = []
    n_tracks = 1 if person_count == 1 else 2
    for c in range(n_tracks):
        coords = np.asarray(pair[c], dtype=np.float64).reshape(-1, 17, 2)
        track = np.concatenate([coords, np.ones((coords.shape[0], 17, 1))], axis=2)
        tracks.append(track)
    return MotionSample(
        tracks=tracks,
        caption=caption,
        person_count=person_count,
        source_id=source_id,
        frame_size=frame_size,
        replicated=False,
    )


class MotionDataset:
    """In-memory dataset of padded motion pairs with cached text features."""

    def __init__(self, samples: list[MotionSample], text_pipeline: TextPipeline,
                 max_len: int = 300, already_normalized: bool = False):
        if not samples:
            raise DatasetError("dataset needs at least one sample")
        self.max_len = max_len
        self.text_pipeline = text_pipeline
        self.motions: list[np.ndarray] = []
        self.masks: list[np.ndarray] = []
        self.features: list[TextFeatures] = []
        self.captions: list[str] = []
        self.source_ids: list[str] = []
        self.lengths: list[int] = []
        for sample in samples:
            if not already_normalized:
                sample = normalize(sample)
            sample = augment_caption_with_count(sample)
            pair = sample_to_model_pair(sample)
            length = pair.shape[1]
            if length > max_len:
                pair = pair[:, :max_len]
                length = max_len
            padded = np.zeros((2, max_len, 34))
            padded[:, :length] = pair
            mask = np.zeros(max_len, dtype=bool)
            mask[:length] = True
            self.motions.append(padded)
            self.masks.append(mask)
            self.features.append(text_pipeline.encode(sample.caption))
            self.captions.append(sample.caption)
            self.source_ids.append(sample.source_id)
            self.lengths.append(length)

    @classmethod
    def from_manifest(cls, entries: list[ManifestEntry], text_pipeline: TextPipeline,
                      max_len: int = 300) -> "MotionDataset":
        samples = []
        for entry in entries:
            try:
                samples.append(read_motion_file(entry.path))
            except (OSError, MotionError) as exc:
                raise DatasetError(f"cannot load {entry.path}: {exc}") from exc
        return cls(samples, text_pipeline, max_len=max_len)

    def __len__(self) -> int:
        return len(self.motions)

    @property
    def text_dim(self) -> int:
        return self.features[0].dim

    def batch(self, indices, dtype=torch.float32):
        """Returns (x [B,2,Lmax,34], mask [B,Lmax], TextBatch, ref [B,2,34])."""
        indices = [int(i) for i in indices]
        x = torch.from_numpy(np.stack([self.motions[i] for i in indices])).to(dtype)
        mask = torch.from_numpy(np.stack([self.masks[i] for i in indices]))
        text = collate_text([self.features[i] for i in indices], dtype=dtype)
        ref = x[:, :, 0, :].clone()
        return x, mask, text, ref

    def full_batch(self, dtype=torch.float32):
        return self.batch(range(len(self)), dtype=dtype)
