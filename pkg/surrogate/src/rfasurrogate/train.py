"""Training loop: Adam, plateau-driven learning-rate halving, JSONL history.

The lesion task trains on the soft Dice loss; the temperature task on the
combined MSE / weighted-MSE / soft-Dice(>50) objective. Two weight presets
are provided: (0.7, 0.1, 0.2), the best-scoring mix of the weight sweep, and
(0.8, 0.1, 0.1), the alternative default; hot-region weight defaults to 10.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import AblationDataset, SampleRef
from .losses import combined_loss, dice_loss
from .models import NetSpec, build_model

LOSS_WEIGHT_PRESETS = {
    "sweep-best": (0.7, 0.1, 0.2),
    "alternative": (0.8, 0.1, 0.1),
}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1.0e-3
    batch_size: int = 16
    epochs: int = 100
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    alpha: float = 0.7
    beta: float = 0.1
    gamma: float = 0.2
    hot_weight: float = 10.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _seed_everything(seed: int) -> torch.Generator:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen


def _loss_fn(spec: NetSpec, cfg: TrainConfig):
    if spec.task == "lesion":
        return lambda pred, truth: dice_loss(pred, truth)
    return lambda pred, truth: combined_loss(
        pred, truth, cfg.alpha, cfg.beta, cfg.gamma, hot_weight=cfg.hot_weight
    )


def _epoch(model, loader, loss_fn, optimizer=None) -> float:
    training = optimizer is not None
    model.train(training)
    total = 0.0
    count = 0
    with torch.set_grad_enabled(training):
        for x, y in loader:
            pred = model(x)
            loss = loss_fn(pred, y)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += float(loss.detach()) * x.shape[0]
            count += x.shape[0]
    return total / max(count, 1)


def train(
    spec: NetSpec,
    train_refs: list[SampleRef],
    val_refs: list[SampleRef],
    out_dir: str | Path,
    cfg: TrainConfig | None = None,
) -> Path:
    """Train a surrogate and write checkpoint.pt + history.jsonl; returns the checkpoint path."""
    cfg = cfg or TrainConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = _seed_everything(cfg.seed)

    train_ds = AblationDataset(train_refs, spec.task)
    val_ds = AblationDataset(val_refs, spec.task) if val_refs else None

    # fail fast on data problems before the first epoch
    x0, y0 = train_ds[0]
    if x0.shape[0] != 2 or y0.shape[0] != 1 or x0.shape[1:] != y0.shape[1:]:
        raise ValueError(f"bad sample shapes: input {tuple(x0.shape)}, target {tuple(y0.shape)}")

    model = build_model(spec)
    model(x0.unsqueeze(0))  # shape contract check, raises before training

    loader = DataLoader(train_ds, batch_size=cfg.batch_size, shuffle=True, generator=gen)
    val_loader = DataLoader(val_ds, batch_size=cfg.batch_size) if val_ds else None
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=cfg.scheduler_factor, patience=cfg.scheduler_patience
    )
    loss_fn = _loss_fn(spec, cfg)

    history_path = out_dir / "history.jsonl"
    checkpoint_path = out_dir / "checkpoint.pt"
    with open(history_path, "w") as history:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            train_loss = _epoch(model, loader, loss_fn, optimizer)
            val_loss = _epoch(model, val_loader, loss_fn) if val_loader else None
            lr_before = optimizer.param_groups[0]["lr"]
            scheduler.step(val_loss if val_loss is not None else train_loss)
            lr_after = optimizer.param_groups[0]["lr"]
            record = {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr": lr_after,
                "wall_s": time.perf_counter() - t0,
            }
            if lr_after < lr_before:
                record["lr_reduced"] = True
            history.write(json.dumps(record) + "\n")
            history.flush()

    torch.save(
        {
            "model_state": model.state_dict(),
            "net_spec": spec.to_dict(),
            "train_config": cfg.to_dict(),
            "format": 1,
        },
        checkpoint_path,
    )
    return checkpoint_path


def load_checkpoint(path: str | Path):
    doc = torch.load(path, map_location="cpu", weights_only=False)
    spec = NetSpec.from_dict(doc["net_spec"])
    model = build_model(spec)
    model.load_state_dict(doc["model_state"])
    model.eval()
    return model, spec
