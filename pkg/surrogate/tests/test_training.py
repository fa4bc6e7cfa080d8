import json

import pytest
import torch

from rfasurrogate.data import list_samples
from rfasurrogate.models import NetSpec
from rfasurrogate.predict import predict
from rfasurrogate.train import TrainConfig, load_checkpoint, train

from conftest import synthetic_dataset


def small_cfg(epochs, seed=0):
    return TrainConfig(batch_size=8, epochs=epochs, seed=seed)


@pytest.fixture(scope="module")
def smoke_dataset(tmp_path_factory):
    # 100-sample toy corpus for the loss-decrease smoke check
    root = tmp_path_factory.mktemp("smoke") / "data"
    return synthetic_dataset(root, n_tumors=2, per_tumor=50, seed=3)


class TestTrainingLoop:
    def test_loss_decreases_over_five_epochs(self, smoke_dataset, tmp_path):
        refs = list_samples(smoke_dataset)
        spec = NetSpec(arch="unet", task="lesion", base_width=4)
        out = tmp_path / "run"
        train(spec, refs[:90], refs[90:], out, small_cfg(epochs=5))
        rows = [json.loads(line) for line in (out / "history.jsonl").read_text().splitlines()]
        assert len(rows) == 5
        assert rows[4]["train_loss"] < rows[0]["train_loss"]

    def test_epoch1_loss_reproducible_to_1e6(self, tiny_dataset, tmp_path):
        refs = list_samples(tiny_dataset)
        spec = NetSpec(arch="edcnn", task="lesion", base_width=4)
        losses = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            train(spec, refs[:10], refs[10:], out, small_cfg(epochs=1, seed=42))
            rows = [json.loads(line) for line in (out / "history.jsonl").read_text().splitlines()]
            losses.append(rows[0]["train_loss"])
        assert abs(losses[0] - losses[1]) <= 1e-6

    def test_shape_errors_fail_before_epoch_one(self, tiny_dataset, tmp_path):
        import numpy as np

        from rfasurrogate.volio import Volume, write_volume

        bad = tiny_dataset / "samples" / "syn00" / "0" / "lesion.rfav"
        write_volume(bad, Volume(np.zeros((5, 5, 5), np.uint8), (1, 1, 1), (0, 0, 0)))
        refs = list_samples(tiny_dataset)
        spec = NetSpec(arch="unet", task="lesion", base_width=4)
        with pytest.raises(ValueError, match="shapes"):
            train(spec, refs, [], tmp_path / "run", small_cfg(epochs=1))
        assert not (tmp_path / "run" / "checkpoint.pt").exists()

    def test_checkpoint_round_trip(self, tiny_dataset, tmp_path):
        refs = list_samples(tiny_dataset)
        spec = NetSpec(arch="unet", task="temperature", base_width=4)
        ckpt = train(spec, refs[:8], refs[8:], tmp_path / "run", small_cfg(epochs=1))
        model, loaded_spec = load_checkpoint(ckpt)
        assert loaded_spec == spec
        with torch.no_grad():
            y = model(torch.zeros(1, 2, 21, 21, 21))
        assert y.shape == (1, 1, 21, 21, 21)


class TestPredict:
    def test_writes_containers_and_latency_report(self, tiny_dataset, tmp_path):
        refs = list_samples(tiny_dataset)
        spec = NetSpec(arch="edcnn", task="lesion", base_width=4)
        ckpt = train(spec, refs[:8], refs[8:10], tmp_path / "run", small_cfg(epochs=1))
        model, _ = load_checkpoint(ckpt)
        out = tmp_path / "preds"
        summary = predict(model, "lesion", refs[10:], out)
        assert summary["n"] == 2
        assert summary["p50_ms"] > 0
        from rfasurrogate.volio import read_volume

        import numpy as np

        files = sorted(out.glob("*.rfav"))
        assert [f.name for f in files] == ["syn01_4.rfav", "syn01_5.rfav"]
        vol = read_volume(files[0])
        assert vol.is_mask  # thresholded at 0.5 to a binary mask
        assert vol.data.shape == (21, 21, 21)
        lines = (out / "latency.jsonl").read_text().splitlines()
        assert len(lines) == 3  # two samples + summary
        assert "summary" in json.loads(lines[-1])

    def test_temperature_predictions_are_fields(self, tiny_dataset, tmp_path):
        refs = list_samples(tiny_dataset)
        spec = NetSpec(arch="edcnn", task="temperature", base_width=4)
        ckpt = train(spec, refs[:8], [], tmp_path / "run", small_cfg(epochs=1))
        model, _ = load_checkpoint(ckpt)
        predict(model, "temperature", refs[:2], tmp_path / "preds")
        from rfasurrogate.volio import read_volume

        vol = read_volume(sorted((tmp_path / "preds").glob("*.rfav"))[0])
        assert not vol.is_mask
