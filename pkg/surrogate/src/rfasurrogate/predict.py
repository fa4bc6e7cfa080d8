"""Batch prediction: write container volumes the engine's evaluate tool can score.

Lesion outputs are thresholded at 0.5 into u8 masks; temperature outputs stay
f32 fields. Per-sample inference latencies are recorded to latency.jsonl with
a p50 summary line.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch

from .data import SampleRef, AblationDataset
from .volio import Volume, write_volume

LESION_THRESHOLD = 0.5


def predict(model, task: str, refs: list[SampleRef], out_dir: str | Path) -> dict:
    """Run inference over samples; returns the latency summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = AblationDataset(refs, task)
    spacing, origin = ds.grid_meta()
    model.eval()
    latencies = []
    with open(out_dir / "latency.jsonl", "w") as log, torch.no_grad():
        for i, ref in enumerate(refs):
            x, _ = ds[i]
            t0 = time.perf_counter()
            pred = model(x.unsqueeze(0))[0, 0].numpy()
            ms = (time.perf_counter() - t0) * 1e3
            latencies.append(ms)
            if task == "lesion":
                data = (pred > LESION_THRESHOLD).astype(np.uint8)
            else:
                data = pred.astype(np.float32)
            name = ref.sample_id.replace("/", "_") + ".rfav"
            write_volume(out_dir / name, Volume(data=data, spacing=spacing, origin=origin))
            log.write(json.dumps({"id": ref.sample_id, "ms": ms}) + "\n")
        summary = {
            "n": len(latencies),
            "p50_ms": float(np.percentile(latencies, 50)) if latencies else None,
            "p95_ms": float(np.percentile(latencies, 95)) if latencies else None,
        }
        log.write(json.dumps({"summary": summary}) + "\n")
    return summary
