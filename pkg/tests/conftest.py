import numpy as np
import pytest

from motion2d.motion import MotionSample


def make_track(length=10, seed=0, scale=100.0, offset=200.0, conf=0.9):
    rng = np.random.default_rng(seed)
    track = np.zeros((length, 17, 3))
    track[:, :, :2] = offset + scale * rng.standard_normal((length, 17, 2))
    track[:, :, 2] = conf
    return track


def make_sample(n_tracks=2, length=10, seed=0, caption="two people talk",
                source_id="s0", frame_size=(640, 480), conf=0.9):
    tracks = [make_track(length, seed + i, conf=conf) for i in range(n_tracks)]
    return MotionSample(
        tracks=tracks,
        caption=caption,
        person_count=n_tracks,
        source_id=source_id,
        frame_size=frame_size,
    )


@pytest.fixture
def pair_sample():
    return make_sample(n_tracks=2, length=10, seed=3)


@pytest.fixture
def single_sample():
    return make_sample(n_tracks=1, length=10, seed=5, caption="a man jumps")
