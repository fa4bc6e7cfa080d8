"""HTTP API for simulation, placement planning, and volume access.

Request handling is synchronous per call, but simulations run on a bounded
worker pool: a request that finds a free simulation slot computes inline and
returns the payload; when every slot is busy the job is queued and the client
immediately receives 202 with a poll token instead of blocking behind other
requests. Results are cached by (volume content, pose, engine config) hashes,
so a repeated request returns the identical payload flagged as cached.
"""

from __future__ import annotations

import base64
import hashlib
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from . import __version__, simulator
from .bioheat import BioheatConfig
from .dataset import ContainerFormatError, canonical_json, volume_from_bytes, volume_to_bytes
from .electrode import ElectrodePose, sample_placements
from .grid import LabelVolume, MaterialTable
from .metrics import dice
from .necrosis import ArrheniusParams

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    pool_size: int = 0  # 0 = physical cores - 1
    v_applied: float = simulator.DEFAULT_V_APPLIED
    material_preset: str = "breast"
    material_table_path: str | None = None
    t_init: float = 37.0
    t_boundary: float = 37.0
    duration: float = 180.0
    dt: float = 0.1

    @classmethod
    def from_toml(cls, path: str | Path) -> "ServiceConfig":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def resolve_pool_size(self) -> int:
        if self.pool_size > 0:
            return self.pool_size
        import os

        return max(1, (os.cpu_count() or 2) - 1)

    def material_table(self) -> MaterialTable:
        if self.material_table_path:
            import json

            return MaterialTable.from_dict(json.loads(Path(self.material_table_path).read_text()))
        if self.material_preset == "breast":
            return MaterialTable.breast()
        if self.material_preset == "liver":
            return MaterialTable.liver()
        raise ValueError(f"unknown material preset {self.material_preset!r}")


class PoseModel(BaseModel):
    center: list[float] = Field(min_length=3, max_length=3)
    direction: list[float] = Field(min_length=3, max_length=3)
    tip_length: float = 10.0
    tip_radius: float = 0.5
    v_applied: float | None = None


class SimulateBody(BaseModel):
    volume_id: str
    pose: PoseModel
    overrides: dict[str, Any] = Field(default_factory=dict)


class PlanBody(BaseModel):
    volume_id: str
    n_candidates: int = 16
    seed: int = 0
    top_k: int = 10
    overrides: dict[str, Any] = Field(default_factory=dict)


_ALLOWED_OVERRIDES = {"v_applied", "duration", "dt", "t_init", "t_boundary", "preset"}


@dataclass
class _Entry:
    volume: LabelVolume
    content_hash: str


@dataclass
class ApiSession:
    """Shared mutable service state; registry and caches are lock-guarded."""

    config: ServiceConfig
    volumes: dict[str, _Entry] = field(default_factory=dict)
    cache: dict[str, dict] = field(default_factory=dict)
    results: dict[str, simulator.SimulationResult] = field(default_factory=dict)
    jobs: dict[str, Future] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self.pool_size = self.config.resolve_pool_size()
        self.executor = ThreadPoolExecutor(max_workers=self.pool_size)
        self.in_flight = 0


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _engine_config_hash(cfg: ServiceConfig, overrides: dict) -> tuple[str, dict]:
    bad = set(overrides) - _ALLOWED_OVERRIDES
    if bad:
        raise HTTPException(status_code=422, detail=f"unknown overrides: {sorted(bad)}")
    resolved = {
        "v_applied": overrides.get("v_applied", cfg.v_applied),
        "duration": overrides.get("duration", cfg.duration),
        "dt": overrides.get("dt", cfg.dt),
        "t_init": overrides.get("t_init", cfg.t_init),
        "t_boundary": overrides.get("t_boundary", cfg.t_boundary),
        "preset": overrides.get("preset", cfg.material_preset),
        "engine": __version__,
    }
    return _sha(canonical_json(resolved).encode()), resolved


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="rfasim", version=__version__)
    session = ApiSession(config=config)
    app.state.session = session

    def get_volume(volume_id: str) -> _Entry:
        with session.lock:
            entry = session.volumes.get(volume_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        return entry

    def build_request(entry: _Entry, pose: ElectrodePose, resolved: dict) -> simulator.SimulationRequest:
        preset = resolved["preset"]
        if preset == config.material_preset and config.material_table_path:
            table = config.material_table()
        elif preset == "liver":
            table = MaterialTable.liver()
        elif preset == "breast":
            table = MaterialTable.breast()
        else:
            raise HTTPException(status_code=422, detail=f"unknown preset {preset!r}")
        cfg = BioheatConfig(
            dt=resolved["dt"],
            duration=resolved["duration"],
            t_init=resolved["t_init"],
            t_boundary=resolved["t_boundary"],
        )
        return simulator.SimulationRequest(
            labels=entry.volume,
            pose=pose,
            table=table,
            bioheat=cfg,
            arrhenius=ArrheniusParams(),
        )

    def compute_payload(entry: _Entry, req: simulator.SimulationRequest, result_id: str) -> dict:
        result = simulator.run(req)
        lesion = result.lesion
        tumor = LabelVolume(entry.volume.spec, (entry.volume.labels == 1).astype(np.uint8))
        voxel = entry.volume.spec.voxel_volume_mm3
        lesion_n = int(lesion.labels.sum())
        healthy = int((lesion.labels.astype(bool) & ~(entry.volume.labels == 1)).sum())
        summary = {
            "lesion_volume_mm3": lesion_n * voxel,
            "tumor_coverage_dice": dice(lesion, tumor),
            "healthy_ablated_mm3": healthy * voxel,
            "peak_temp_C": float(result.t_final.data.max()),
            "wall_ms": result.diagnostics.wall_ms["total"],
            "cg_iters": result.diagnostics.cg_iters,
            "v_applied": req.pose.v_applied,
        }
        with session.lock:
            session.results[result_id] = result
        return {
            "result_id": result_id,
            "summary": summary,
            "pose": req.pose.to_json_dict(),
            "lesion_b64": base64.b64encode(volume_to_bytes(lesion)).decode(),
            "temp_b64": base64.b64encode(volume_to_bytes(result.t_final)).decode(),
        }

    def simulate_cached(entry: _Entry, pose: ElectrodePose, resolved: dict) -> tuple[dict, bool]:
        pose_hash = _sha(canonical_json(pose.to_json_dict()).encode())
        config_hash = _sha(canonical_json(resolved).encode())
        key = f"{entry.content_hash}-{pose_hash}-{config_hash}"
        with session.lock:
            hit = session.cache.get(key)
        if hit is not None:
            return hit, True
        req = build_request(entry, pose, resolved)
        try:
            payload = compute_payload(entry, req, key)
        except (ValueError, ContainerFormatError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except (RuntimeError, FloatingPointError) as exc:
            raise HTTPException(status_code=500, detail=f"stage failure: {exc}")
        with session.lock:
            session.cache[key] = payload
        return payload, False

    def parse_pose(model: PoseModel, resolved: dict) -> ElectrodePose:
        v = model.v_applied if model.v_applied is not None else resolved["v_applied"]
        try:
            return ElectrodePose(
                center=tuple(model.center),
                direction=tuple(model.direction),
                tip_length=model.tip_length,
                tip_radius=model.tip_radius,
                v_applied=v,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/volumes")
    def list_volumes():
        with session.lock:
            entries = sorted(session.volumes.items())
        return [
            {
                "id": vid,
                "dims": list(e.volume.spec.dims),
                "spacing": list(e.volume.spec.spacing),
                "origin": list(e.volume.spec.origin),
                "tumor_voxels": e.volume.tumor_voxel_count,
                "content_hash": e.content_hash,
            }
            for vid, e in entries
        ]

    @app.post("/volumes", status_code=201)
    async def upload_volume(request: Request, id: str | None = None):
        body = await request.body()
        try:
            volume = volume_from_bytes(body)
        except ContainerFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if not isinstance(volume, LabelVolume):
            raise HTTPException(status_code=422, detail="expected a u8 label volume (dtype code 0)")
        content_hash = _sha(body)
        volume_id = id or content_hash
        with session.lock:
            session.volumes[volume_id] = _Entry(volume=volume, content_hash=content_hash)
        return {"id": volume_id, "dims": list(volume.spec.dims), "tumor_voxels": volume.tumor_voxel_count}

    @app.get("/volumes/{volume_id}/slice")
    def get_slice(
        volume_id: str,
        axis: str = "z",
        index: int = 0,
        field: str = "labels",
        result: str | None = None,
    ):
        fieldname = field
        entry = get_volume(volume_id)
        axes = {"x": 0, "y": 1, "z": 2}
        if axis not in axes:
            raise HTTPException(status_code=422, detail=f"axis must be one of {sorted(axes)}")
        ax = axes[axis]
        dims = entry.volume.spec.dims
        if not (0 <= index < dims[ax]):
            raise HTTPException(status_code=416, detail=f"index {index} out of range [0, {dims[ax]})")
        if fieldname == "labels":
            plane = np.take(entry.volume.labels, index, axis=ax)
            values = plane.astype(int).tolist()
        elif fieldname in ("temp", "psi", "lesion"):
            if result is None:
                raise HTTPException(status_code=422, detail="field requires ?result=<result_id>")
            with session.lock:
                res = session.results.get(result)
            if res is None:
                raise HTTPException(status_code=404, detail=f"unknown result {result!r}")
            source = {"temp": res.t_final.data, "psi": res.psi.data, "lesion": res.lesion.labels}[fieldname]
            plane = np.take(source, index, axis=ax)
            values = np.round(plane.astype(float), 4).tolist()
        else:
            raise HTTPException(status_code=422, detail=f"unknown field {fieldname!r}")
        return {"axis": axis, "index": index, "shape": list(plane.shape), "values": values}

    def run_simulation_request(body: SimulateBody) -> tuple[dict, bool]:
        entry = get_volume(body.volume_id)
        _, resolved = _engine_config_hash(config, body.overrides)
        pose = parse_pose(body.pose, resolved)
        return simulate_cached(entry, pose, resolved)

    @app.post("/simulate")
    def simulate(body: SimulateBody, response: Response):
        """Simulate inline when a pool slot is free; otherwise queue with a poll token.

        Every simulation runs on the bounded executor, so concurrency never
        exceeds the pool size; the 202 path just avoids blocking a client
        behind someone else's job.
        """

        def job():
            try:
                return run_simulation_request(body)
            finally:
                with session.lock:
                    session.in_flight -= 1

        with session.lock:
            busy = session.in_flight >= session.pool_size
            session.in_flight += 1
            token = _sha(canonical_json({"body": body.model_dump(), "n": len(session.jobs)}).encode())
        future = session.executor.submit(job)
        if busy:
            with session.lock:
                session.jobs[token] = future
            response.status_code = 202
            return {"status": "queued", "token": token}
        payload, cached = future.result()
        return dict(payload, cached=cached)

    @app.get("/jobs/{token}")
    def poll_job(token: str, response: Response):
        with session.lock:
            future = session.jobs.get(token)
        if future is None:
            raise HTTPException(status_code=404, detail=f"unknown token {token!r}")
        if not future.done():
            response.status_code = 202
            return {"status": "pending", "token": token}
        payload, cached = future.result()  # re-raises HTTPException from the job
        return dict(payload, cached=cached)

    @app.post("/plan")
    def plan(body: PlanBody):
        entry = get_volume(body.volume_id)
        if entry.volume.tumor_voxel_count == 0:
            raise HTTPException(status_code=422, detail="empty tumor")
        _, resolved = _engine_config_hash(config, body.overrides)
        if body.n_candidates < 1:
            raise HTTPException(status_code=422, detail="n_candidates must be >= 1")
        try:
            poses = sample_placements(
                entry.volume, body.n_candidates, body.seed, v_applied=resolved["v_applied"]
            )
        except (ValueError, RuntimeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        ranked = []
        for pose in poses:
            payload, _ = simulate_cached(entry, pose, resolved)
            ranked.append(
                {
                    "pose": payload["pose"],
                    "summary": payload["summary"],
                    "result_id": payload["result_id"],
                }
            )
        ranked.sort(
            key=lambda c: (-c["summary"]["tumor_coverage_dice"], c["summary"]["healthy_ablated_mm3"])
        )
        return {"candidates": ranked[: body.top_k], "n_evaluated": len(ranked)}

    return app


def serve(config: ServiceConfig) -> None:
    """Run the API under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
