import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rfasim.dataset import volume_from_bytes, volume_to_bytes
from rfasim.grid import GridSpec, LabelVolume, ScalarVolume
from rfasim.service import ServiceConfig, create_app

from conftest import ball_labels


def tumor_bytes(dims=(21, 21, 21), radius=3.0) -> bytes:
    spec = GridSpec(dims=dims)
    center = tuple(d // 2 for d in dims)
    return volume_to_bytes(ball_labels(spec, center, radius))


@pytest.fixture
def client():
    config = ServiceConfig(pool_size=2, v_applied=38.0, duration=10.0, t_init=20.0,
                           t_boundary=20.0, material_preset="liver")
    app = create_app(config)
    with TestClient(app) as c:
        yield c


@pytest.fixture
def volume_id(client):
    r = client.post("/volumes?id=ball", content=tumor_bytes())
    assert r.status_code == 201
    return r.json()["id"]


def center_pose(vp=None):
    pose = {"center": [10.0, 10.0, 10.0], "direction": [0.0, 0.0, 1.0]}
    if vp is not None:
        pose["v_applied"] = vp
    return pose


class TestVolumes:
    def test_health(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_fresh_start_lists_nothing(self, client):
        assert client.get("/volumes").json() == []

    def test_upload_and_list(self, client, volume_id):
        listing = client.get("/volumes").json()
        assert [v["id"] for v in listing] == [volume_id]
        assert listing[0]["dims"] == [21, 21, 21]
        assert listing[0]["tumor_voxels"] > 0

    def test_upload_rejects_non_mask(self, client):
        spec = GridSpec(dims=(5, 5, 5))
        body = volume_to_bytes(ScalarVolume(spec, np.zeros(spec.dims, dtype=np.float32)))
        r = client.post("/volumes", content=body)
        assert r.status_code == 422

    def test_upload_rejects_garbage(self, client):
        r = client.post("/volumes", content=b"not a container")
        assert r.status_code == 422

    def test_slice_shape(self, client, volume_id):
        r = client.get(f"/volumes/{volume_id}/slice", params={"axis": "z", "index": 10})
        assert r.status_code == 200
        doc = r.json()
        assert doc["shape"] == [21, 21]
        assert len(doc["values"]) == 21 and len(doc["values"][0]) == 21
        assert any(any(row) for row in doc["values"])

    def test_slice_out_of_range_is_416(self, client, volume_id):
        r = client.get(f"/volumes/{volume_id}/slice", params={"axis": "z", "index": 21})
        assert r.status_code == 416

    def test_slice_unknown_volume_404(self, client):
        assert client.get("/volumes/nope/slice").status_code == 404

    def test_slice_bad_axis_422(self, client, volume_id):
        assert client.get(f"/volumes/{volume_id}/slice", params={"axis": "w"}).status_code == 422


class TestSimulate:
    def test_zero_potential_empty_lesion(self, client, volume_id):
        r = client.post("/simulate", json={"volume_id": volume_id, "pose": center_pose(vp=0.0)})
        assert r.status_code == 200
        doc = r.json()
        assert doc["summary"]["lesion_volume_mm3"] == 0.0
        assert doc["cached"] is False

    def test_repeat_request_is_cached_and_identical(self, client, volume_id):
        body = {"volume_id": volume_id, "pose": center_pose()}
        first = client.post("/simulate", json=body).json()
        second = client.post("/simulate", json=body).json()
        assert first["cached"] is False
        assert second["cached"] is True
        strip = lambda d: {k: v for k, v in d.items() if k != "cached"}
        assert strip(first) == strip(second)

    def test_payload_volumes_decode(self, client, volume_id):
        import base64

        doc = client.post("/simulate", json={"volume_id": volume_id, "pose": center_pose()}).json()
        lesion = volume_from_bytes(base64.b64decode(doc["lesion_b64"]))
        temp = volume_from_bytes(base64.b64decode(doc["temp_b64"]))
        assert isinstance(lesion, LabelVolume)
        assert lesion.spec.dims == (21, 21, 21)
        assert isinstance(temp, ScalarVolume)
        assert doc["summary"]["peak_temp_C"] == pytest.approx(float(temp.data.max()), rel=1e-5)
        assert doc["summary"]["lesion_volume_mm3"] == float(lesion.labels.sum())

    def test_unknown_volume_404(self, client):
        r = client.post("/simulate", json={"volume_id": "nope", "pose": center_pose()})
        assert r.status_code == 404

    def test_invalid_pose_422(self, client, volume_id):
        bad = {"center": [10.0, 10.0, 10.0], "direction": [1.0, 1.0, 1.0]}
        r = client.post("/simulate", json={"volume_id": volume_id, "pose": bad})
        assert r.status_code == 422

    def test_out_of_bounds_pose_422(self, client, volume_id):
        bad = dict(center_pose(), center=[10.0, 10.0, 19.0])
        r = client.post("/simulate", json={"volume_id": volume_id, "pose": bad})
        assert r.status_code == 422

    def test_unknown_override_422(self, client, volume_id):
        r = client.post(
            "/simulate",
            json={"volume_id": volume_id, "pose": center_pose(), "overrides": {"sigma": 1}},
        )
        assert r.status_code == 422

    def test_config_override_invalidates_cache(self, client, volume_id):
        body1 = {"volume_id": volume_id, "pose": center_pose()}
        body2 = {"volume_id": volume_id, "pose": center_pose(), "overrides": {"duration": 12.0}}
        r1 = client.post("/simulate", json=body1).json()
        r2 = client.post("/simulate", json=body2).json()
        assert r2["cached"] is False
        assert r1["result_id"] != r2["result_id"]

    def test_result_slice_readable(self, client, volume_id):
        doc = client.post("/simulate", json={"volume_id": volume_id, "pose": center_pose()}).json()
        r = client.get(
            f"/volumes/{volume_id}/slice",
            params={"axis": "z", "index": 10, "field": "temp", "result": doc["result_id"]},
        )
        assert r.status_code == 200
        values = np.asarray(r.json()["values"])
        assert values.shape == (21, 21)
        assert values.max() > 20.0


class TestQueue:
    def test_second_request_gets_202_and_completes(self):
        config = ServiceConfig(pool_size=1, v_applied=38.0, duration=10.0, t_init=20.0,
                               t_boundary=20.0, material_preset="liver")
        app = create_app(config)
        with TestClient(app) as client:
            client.post("/volumes?id=ball", content=tumor_bytes())
            # ~6000 FDTD steps keep the single slot busy for a few seconds
            slow = {"volume_id": "ball", "pose": center_pose(), "overrides": {"duration": 600.0}}
            fast = {"volume_id": "ball", "pose": center_pose(vp=1.0)}

            codes = {}

            def run_slow():
                codes["slow"] = client.post("/simulate", json=slow).status_code

            t = threading.Thread(target=run_slow)
            t.start()
            time.sleep(0.3)  # let the slow job occupy the single slot
            r = client.post("/simulate", json=fast)
            assert r.status_code == 202
            token = r.json()["token"]
            t.join(timeout=60)
            assert codes["slow"] == 200
            deadline = time.monotonic() + 60
            while time.monotonic() < deadline:
                poll = client.get(f"/jobs/{token}")
                if poll.status_code == 200:
                    assert poll.json()["summary"]["lesion_volume_mm3"] == 0.0
                    break
                assert poll.status_code == 202
                time.sleep(0.2)
            else:
                pytest.fail("queued job never completed")

    def test_unknown_token_404(self, client):
        assert client.get("/jobs/nope").status_code == 404


class TestPlan:
    def test_single_candidate(self, client, volume_id):
        r = client.post("/plan", json={"volume_id": volume_id, "n_candidates": 1, "seed": 3})
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["candidates"]) == 1
        assert doc["n_evaluated"] == 1

    def test_ranking_sorted_by_dice_then_healthy(self, client, volume_id):
        r = client.post("/plan", json={"volume_id": volume_id, "n_candidates": 6, "seed": 5})
        cands = r.json()["candidates"]
        keys = [(-c["summary"]["tumor_coverage_dice"], c["summary"]["healthy_ablated_mm3"]) for c in cands]
        assert keys == sorted(keys)
        assert cands[0]["summary"]["tumor_coverage_dice"] >= cands[-1]["summary"]["tumor_coverage_dice"]

    def test_deterministic_for_seed(self, client, volume_id):
        a = client.post("/plan", json={"volume_id": volume_id, "n_candidates": 3, "seed": 11}).json()
        b = client.post("/plan", json={"volume_id": volume_id, "n_candidates": 3, "seed": 11}).json()
        assert [c["pose"] for c in a["candidates"]] == [c["pose"] for c in b["candidates"]]

    def test_top_k_limits_results(self, client, volume_id):
        r = client.post("/plan", json={"volume_id": volume_id, "n_candidates": 4, "seed": 2, "top_k": 2})
        doc = r.json()
        assert len(doc["candidates"]) == 2
        assert doc["n_evaluated"] == 4

    def test_unknown_volume_404(self, client):
        assert client.post("/plan", json={"volume_id": "x", "n_candidates": 1}).status_code == 404


def test_config_from_toml(tmp_path):
    cfg_file = tmp_path / "svc.toml"
    cfg_file.write_text('host = "0.0.0.0"\nport = 9101\npool_size = 3\nv_applied = 40.0\n')
    cfg = ServiceConfig.from_toml(cfg_file)
    assert cfg.host == "0.0.0.0"
    assert cfg.port == 9101
    assert cfg.pool_size == 3
    assert cfg.v_applied == 40.0


def test_config_rejects_unknown_keys(tmp_path):
    cfg_file = tmp_path / "svc.toml"
    cfg_file.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="unknown config keys"):
        ServiceConfig.from_toml(cfg_file)
