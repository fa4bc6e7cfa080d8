"""Dataset access: engine sample directories, split manifests, torch tensors.

A dataset directory is what the engine's generator writes:
samples/<tumor>/<idx>/{tumor,elec,lesion,temp}.rfav plus a
dataset_manifest.json listing the successfully generated slots, and
optionally a splits.json with train/val/test id lists (ids are
"<tumor>/<idx>" strings).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .volio import read_volume


@dataclass(frozen=True)
class SampleRef:
    sample_id: str
    directory: Path


def list_samples(data_dir: str | Path) -> list[SampleRef]:
    """All successfully generated samples, in manifest order."""
    data_dir = Path(data_dir)
    manifest_path = data_dir / "dataset_manifest.json"
    refs: list[SampleRef] = []
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        for rec in manifest["samples"]:
            if rec["status"] != "ok":
                continue
            sid = f"{rec['tumor_id']}/{rec['index']}"
            refs.append(SampleRef(sid, data_dir / "samples" / rec["tumor_id"] / str(rec["index"])))
    else:
        for pose in sorted(data_dir.glob("samples/*/*/pose.json")):
            d = pose.parent
            refs.append(SampleRef(f"{d.parent.name}/{d.name}", d))
    if not refs:
        raise ValueError(f"no samples found under {data_dir}")
    return refs


def load_split_ids(data_dir: str | Path, split: str) -> list[str]:
    doc = json.loads((Path(data_dir) / "splits.json").read_text())
    if split not in doc:
        raise KeyError(f"split {split!r} not in manifest (have {sorted(doc)})")
    return list(doc[split])


def select_split(refs: list[SampleRef], ids: list[str]) -> list[SampleRef]:
    by_id = {r.sample_id: r for r in refs}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValueError(f"{len(missing)} split ids missing from dataset, e.g. {missing[0]!r}")
    return [by_id[i] for i in ids]


class AblationDataset(Dataset):
    """(tumor mask, electrode mask) inputs against lesion or temperature targets."""

    def __init__(self, refs: list[SampleRef], task: str):
        if task not in ("lesion", "temperature"):
            raise ValueError("task must be 'lesion' or 'temperature'")
        self.refs = refs
        self.task = task

    def __len__(self) -> int:
        return len(self.refs)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor]:
        ref = self.refs[index]
        tumor = read_volume(ref.directory / "tumor.rfav").data.astype(np.float32)
        electrode = read_volume(ref.directory / "elec.rfav").data.astype(np.float32)
        if self.task == "lesion":
            target = read_volume(ref.directory / "lesion.rfav").data.astype(np.float32)
        else:
            target = read_volume(ref.directory / "temp.rfav").data.astype(np.float32)
        x = torch.from_numpy(np.stack([tumor, electrode]))
        y = torch.from_numpy(target).unsqueeze(0)
        return x, y

    def grid_meta(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        vol = read_volume(self.refs[0].directory / "tumor.rfav")
        return vol.spacing, vol.origin
