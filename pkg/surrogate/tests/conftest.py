import json
from pathlib import Path

import numpy as np
import pytest

from rfasurrogate.volio import Volume, write_volume


def synthetic_dataset(root: Path, n_tumors=2, per_tumor=6, dims=(21, 21, 21), seed=0) -> Path:
    """Engine-layout dataset with synthetic geometry: lesion = dilated electrode.

    Good enough for loader, training-smoke and prediction tests without
    running the physics engine.
    """
    rng = np.random.default_rng(seed)
    records = []
    idx = np.indices(dims)
    c0 = np.asarray(dims)[:, None, None, None] // 2
    tumor_mask = (np.sum((idx - c0) ** 2, axis=0) <= 6**2).astype(np.uint8)
    for t in range(n_tumors):
        tumor_id = f"syn{t:02d}"
        for i in range(per_tumor):
            center = c0.ravel() + rng.integers(-3, 4, size=3)
            axis = rng.integers(0, 3)
            elec = np.zeros(dims, np.uint8)
            sl = [slice(int(c), int(c) + 1) for c in center]
            sl[axis] = slice(max(0, center[axis] - 3), min(dims[axis], center[axis] + 4))
            elec[tuple(sl)] = 1
            dist2 = np.sum((idx - center[:, None, None, None]) ** 2, axis=0)
            lesion = (dist2 <= 4**2).astype(np.uint8)
            temp = (37.0 + 60.0 * np.exp(-dist2 / 25.0)).astype(np.float32)

            d = root / "samples" / tumor_id / str(i)
            d.mkdir(parents=True, exist_ok=True)
            meta = {"spacing": (1.0, 1.0, 1.0), "origin": (0.0, 0.0, 0.0)}
            write_volume(d / "tumor.rfav", Volume(tumor_mask, **meta))
            write_volume(d / "elec.rfav", Volume(elec, **meta))
            write_volume(d / "lesion.rfav", Volume(lesion, **meta))
            write_volume(d / "temp.rfav", Volume(temp, **meta))
            (d / "pose.json").write_text(json.dumps({"center": center.tolist()}))
            records.append({"tumor_id": tumor_id, "index": i, "status": "ok"})
    (root / "dataset_manifest.json").write_text(
        json.dumps({"samples": records, "tumor_ids": [f"syn{t:02d}" for t in range(n_tumors)]})
    )
    return root


@pytest.fixture
def tiny_dataset(tmp_path):
    return synthetic_dataset(tmp_path / "data")
