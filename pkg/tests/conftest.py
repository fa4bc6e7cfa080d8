import numpy as np
import pytest

from rfasim.grid import GridSpec, LabelVolume


@pytest.fixture
def spec41():
    return GridSpec(dims=(41, 41, 41))


@pytest.fixture
def spec9():
    return GridSpec(dims=(9, 9, 9))


def ball_labels(spec: GridSpec, center_idx, radius_vox: float, label: int = 1) -> LabelVolume:
    idx = np.indices(spec.dims)
    c = np.asarray(center_idx)[:, None, None, None]
    mask = np.sum((idx - c) ** 2, axis=0) <= radius_vox**2
    return LabelVolume(spec, mask.astype(np.uint8) * label)


@pytest.fixture
def ball_tumor_41(spec41):
    return ball_labels(spec41, (20, 20, 20), 9.0)
