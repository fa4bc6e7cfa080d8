"""Acceptance suite for the surrogate component, one PASS/FAIL line per criterion.

The toy-training criterion drives the full loop against the real engine:
dataset generation and held-out scoring both go through the engine CLI, so it
needs `rfasim` on PATH (skipped otherwise). Full-scale accuracy figures
(foreseen Dice ~0.96, RMSE ~0.49 at 5,500 samples / 100 epochs) are stretch
targets only and are not asserted here.
"""

import json
import shutil
import subprocess
from contextlib import contextmanager
from pathlib import Path

import pytest
import torch

from rfasurrogate.data import list_samples
from rfasurrogate.models import NetSpec
from rfasurrogate.predict import predict
from rfasurrogate.train import TrainConfig, load_checkpoint, train
from rfasurrogate.losses import combined_loss, dice50_loss, dice_loss, weighted_mse

from test_losses import TestGradients, mse


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


class TestLossSuite:
    def test_loss_identities(self):
        with criterion("loss-identities"):
            g = torch.Generator().manual_seed(0)
            truth = 30 + 40 * torch.rand(4, 4, 4, generator=g)
            pred = truth + torch.randn(4, 4, 4, generator=g)
            assert combined_loss(pred, truth, 1.0, 0.0, 0.0).item() == pytest.approx(
                mse(pred, truth).item(), rel=1e-6
            )
            assert combined_loss(pred, truth, 0.0, 1.0, 0.0, hot_weight=1.0).item() == pytest.approx(
                mse(pred, truth).item(), rel=1e-6
            )
            assert weighted_mse(truth, truth, 10.0).item() == 0.0
            assert dice_loss(truth, truth).item() == 0.0
            assert dice50_loss(truth, truth).item() == pytest.approx(0.0, abs=1e-6)
            assert combined_loss(truth, truth, 0.7, 0.1, 0.2).item() == pytest.approx(0.0, abs=1e-6)

    def test_gradient_checks(self):
        with criterion("loss-gradient-checks"):
            checks = TestGradients()
            checks.test_dice_loss_gradient()
            checks.test_weighted_mse_gradient()
            checks.test_combined_loss_gradient()


@pytest.mark.skipif(shutil.which("rfasim") is None, reason="engine CLI not installed")
class TestToyTraining:
    def test_toy_unet_reaches_held_out_dice(self, tmp_path):
        with criterion("toy-training-dice-0.85"):
            data = tmp_path / "data"
            subprocess.run(
                ["rfasim", "gen-data", "--tumors", "2", "--per-tumor", "100",
                 "--seed", "11", "--out", str(data), "--preset", "liver"],
                check=True,
                capture_output=True,
                env=_env_with_threads(),
            )
            refs = list_samples(data)
            assert len(refs) == 200
            held = [r for r in refs if int(r.sample_id.split("/")[1]) >= 80]
            pool = [r for r in refs if int(r.sample_id.split("/")[1]) < 80]
            train_refs, val_refs = pool[:-16], pool[-16:]

            spec = NetSpec(arch="unet", task="lesion", base_width=8)
            ckpt = train(
                spec, train_refs, val_refs, tmp_path / "run",
                TrainConfig(batch_size=16, epochs=20, seed=0),
            )
            model, _ = load_checkpoint(ckpt)
            preds = tmp_path / "preds"
            summary = predict(model, "lesion", held, preds)

            truth = tmp_path / "truth"
            truth.mkdir()
            for r in held:
                shutil.copy(r.directory / "lesion.rfav", truth / (r.sample_id.replace("/", "_") + ".rfav"))
            report = tmp_path / "report.jsonl"
            subprocess.run(
                ["rfasim", "evaluate", "--pred-dir", str(preds), "--truth-dir", str(truth),
                 "--kind", "lesion", "--out", str(report)],
                check=True,
                capture_output=True,
            )
            aggregate = json.loads(report.read_text().splitlines()[-1])
            assert aggregate["n"] == 40
            assert aggregate["dice"] >= 0.85, aggregate
            print(f"  held-out dice {aggregate['dice']:.4f} over {aggregate['n']} samples; "
                  f"inference p50 {summary['p50_ms']:.1f} ms")


class TestLatencyReport:
    def test_latency_report_produced(self, tiny_dataset, tmp_path):
        with criterion("inference-latency-report"):
            refs = list_samples(tiny_dataset)
            spec = NetSpec(arch="edcnn", task="lesion", base_width=4)
            ckpt = train(spec, refs[:8], [], tmp_path / "run", TrainConfig(batch_size=8, epochs=1))
            model, _ = load_checkpoint(ckpt)
            summary = predict(model, "lesion", refs[:4], tmp_path / "preds")
            lines = (tmp_path / "preds" / "latency.jsonl").read_text().splitlines()
            assert len(lines) == 5
            assert summary["p50_ms"] is not None  # reported, not asserted against hardware targets
            print(f"  p50 {summary['p50_ms']:.1f} ms on this host (hardware-dependent)")


def _env_with_threads():
    import os

    env = dict(os.environ)
    env.setdefault("RFA_THREADS", "2")
    return env
