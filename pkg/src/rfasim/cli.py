"""Operator command line: simulate, calibrate, gen-data, split, evaluate, bench, serve.

Machine-readable output is JSON/JSONL written to files or stdout; human
tables go to stderr. Every run that writes an output directory also writes a
run manifest with the fully resolved configuration, so runs can be replayed
exactly. Exit codes: 2 validation error, 3 solver failure, 4 port conflict.

RFA_THREADS caps the dataset-generation worker pool.
"""

from __future__ import annotations

import argparse
import errno
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, simulator
from .bioheat import BioheatConfig
from .dataset import (
    GenerationConfig,
    SkippedSample,
    SplitConfig,
    canonical_json,
    make_splits,
    read_volume,
    synth_tumor,
    write_sample,
    write_volume,
)
from .electrode import ElectrodePose
from .grid import LabelVolume, MaterialTable
from .metrics import dice, dominant_axis, hausdorff, jaccard, morphometry, temp_metrics
from .necrosis import ArrheniusParams
from .service import ServiceConfig, serve

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_PORT = 4


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _write_manifest(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "engine_version": __version__, "config": resolved}
    (out_dir / "run_manifest.json").write_text(canonical_json(doc))


def _load_table(args) -> MaterialTable:
    if getattr(args, "material_table", None):
        return MaterialTable.from_dict(json.loads(Path(args.material_table).read_text()))
    if args.preset == "liver":
        return MaterialTable.liver()
    return MaterialTable.breast()


def _bioheat_config(args) -> BioheatConfig:
    if args.preset == "liver":
        t_init = t_boundary = 20.0
    else:
        t_init = t_boundary = 37.0
    return BioheatConfig(
        dt=args.dt,
        duration=args.duration,
        t_init=args.t_init if args.t_init is not None else t_init,
        t_boundary=args.t_boundary if args.t_boundary is not None else t_boundary,
    )


def _resolved_vp(args) -> float:
    if args.vp is not None:
        return args.vp
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        if "v_applied" in doc:
            return float(doc["v_applied"])
    return simulator.DEFAULT_V_APPLIED


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    out = Path(args.out)
    labels = read_volume(args.volume)
    if not isinstance(labels, LabelVolume):
        raise ValueError(f"{args.volume} is not a label volume")
    v_applied = _resolved_vp(args)
    if args.pose:
        raw = json.loads(Path(args.pose).read_text())
        pose = ElectrodePose.from_json_dict(raw)
        if args.vp is not None:
            pose = pose.with_v_applied(args.vp)
        elif "v_applied" not in raw:
            pose = pose.with_v_applied(v_applied)
    else:
        center = labels.spec.index_to_mm([(d - 1) / 2 for d in labels.spec.dims])
        pose = ElectrodePose(center=tuple(center), direction=(0.0, 0.0, 1.0), v_applied=v_applied)

    req = simulator.SimulationRequest(
        labels=labels,
        pose=pose,
        table=_load_table(args),
        bioheat=_bioheat_config(args),
        arrhenius=ArrheniusParams(),
    )
    result = simulator.run(req)

    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "lesion.rfav", result.lesion)
    write_volume(out / "temp.rfav", result.t_final)
    write_volume(out / "psi.rfav", result.psi)

    lesion_n = int(result.lesion.labels.sum())
    summary: dict = {
        "lesion_voxels": lesion_n,
        "lesion_volume_mm3": lesion_n * labels.spec.voxel_volume_mm3,
        "peak_temp_C": float(result.t_final.data.max()),
        "v_applied": pose.v_applied,
        "diagnostics": result.diagnostics.to_dict(),
    }
    if lesion_n:
        m = morphometry(result.lesion, vertical_axis=dominant_axis(pose.direction))
        summary["morphometry"] = m.to_dict()
    (out / "summary.json").write_text(canonical_json(summary))
    _write_manifest(
        out,
        "simulate",
        {
            "volume": str(args.volume),
            "pose": pose.to_json_dict(),
            "preset": args.preset,
            "dt": req.bioheat.dt,
            "duration": req.bioheat.duration,
            "t_init": req.bioheat.t_init,
            "t_boundary": req.bioheat.t_boundary,
        },
    )
    print(canonical_json(summary), end="")
    return 0


def cmd_calibrate(args) -> int:
    setup = simulator.liver_benchmark_request(v_applied=1.0)
    if args.preset != "liver":
        raise ValueError("calibration is defined on the liver preset")
    cal = simulator.calibrate_vp(args.target_area, setup, tol_mm2=args.tol)
    doc = {
        "v_applied": cal.v_applied,
        "achieved_area_mm2": cal.area_mm2,
        "target_area_mm2": cal.target_area_mm2,
        "preset": args.preset,
        "engine_version": __version__,
        "evaluations": [[v, a] for v, a in cal.evaluations],
    }
    text = canonical_json(doc)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")
    _eprint(f"calibrated v_applied = {cal.v_applied:.4f} V (area {cal.area_mm2:.0f} mm^2)")
    return 0


def _worker_count() -> int:
    env = os.environ.get("RFA_THREADS")
    if env:
        return max(1, int(env))
    return max(1, (os.cpu_count() or 2) - 1)


def _run_slot(task: tuple) -> tuple[str, int, str | None]:
    """Pool worker: simulate one dataset slot and write its sample files."""
    root, labels, tumor_id, t_idx, s_idx, seed, cfg_doc = task
    from .dataset import generate_slot

    outcome = generate_slot(labels, tumor_id, t_idx, s_idx, seed, GenerationConfig.from_dict(cfg_doc))
    if isinstance(outcome, SkippedSample):
        return (tumor_id, s_idx, outcome.reason)
    write_sample(root, outcome)
    return (tumor_id, s_idx, None)


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = ("ball", "ellipsoid", "lobulated")

    tumors: list[LabelVolume] = []
    tumor_ids: list[str] = []
    if args.import_tumors:
        paths = sorted(Path(args.import_tumors).glob("*.rfav"))
        if not paths:
            raise ValueError(f"no .rfav volumes in {args.import_tumors}")
        for p in paths:
            vol = read_volume(p)
            if not isinstance(vol, LabelVolume):
                raise ValueError(f"{p} is not a label volume")
            tumors.append(vol)
            tumor_ids.append(p.stem)
    else:
        for idx in range(args.tumors):
            kind = kinds[idx % len(kinds)]
            tumors.append(synth_tumor(kind, seed=args.seed * 1000 + idx))
            tumor_ids.append(f"{kind}{idx:02d}")

    (out / "tumors").mkdir(exist_ok=True)
    for tumor_id, vol in zip(tumor_ids, tumors):
        write_volume(out / "tumors" / f"{tumor_id}.rfav", vol)

    config = GenerationConfig(
        table=_load_table(args),
        bioheat=_bioheat_config(args),
        v_applied=_resolved_vp(args),
    )
    cfg_doc = config.to_dict()
    tasks = [
        (out, labels, tumor_id, t_idx, s_idx, args.seed, cfg_doc)
        for t_idx, (tumor_id, labels) in enumerate(zip(tumor_ids, tumors))
        for s_idx in range(args.per_tumor)
    ]
    if args.per_tumor < 1:
        raise ValueError("invalid count")

    t0 = time.perf_counter()
    workers = _worker_count()
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_slot, tasks, chunksize=4))
    else:
        results = []
        for i, task in enumerate(tasks, 1):
            results.append(_run_slot(task))
            if i % 50 == 0:
                _eprint(f"... {i}/{len(tasks)} samples ({time.perf_counter() - t0:.0f} s)")

    records: list[dict] = []
    n_ok = 0
    for tumor_id, s_idx, reason in results:
        if reason is None:
            records.append({"tumor_id": tumor_id, "index": s_idx, "status": "ok"})
            n_ok += 1
        else:
            records.append({"tumor_id": tumor_id, "index": s_idx, "status": "skipped", "reason": reason})
            _eprint(f"skipped {tumor_id}/{s_idx}: {reason}")

    manifest = {
        "command": "gen-data",
        "engine_version": __version__,
        "seed": args.seed,
        "per_tumor": args.per_tumor,
        "tumor_ids": tumor_ids,
        "config": cfg_doc,
        "samples": records,
    }
    (out / "dataset_manifest.json").write_text(canonical_json(manifest))
    _eprint(f"generated {n_ok} samples in {time.perf_counter() - t0:.1f} s -> {out}")
    return 0


def cmd_split(args) -> int:
    data = Path(args.data)
    manifest = json.loads((data / "dataset_manifest.json").read_text())
    records = [
        (f"{r['tumor_id']}/{r['index']}", r["tumor_id"])
        for r in manifest["samples"]
        if r["status"] == "ok"
    ]
    cfg = SplitConfig(
        train=args.train,
        val=args.val,
        test_foreseen=args.test_foreseen,
        test_unforeseen=args.test_unforeseen,
        unforeseen_tumors=args.unforeseen_tumors,
    )
    split = make_splits(records, cfg, args.seed)
    (data / "splits.json").write_text(canonical_json(split.to_dict()))
    _eprint(
        f"split {len(records)} samples: train {len(split.train)} (val {len(split.val)}), "
        f"foreseen {len(split.test_foreseen)}, unforeseen {len(split.test_unforeseen)}"
    )
    return 0


def _paired_files(pred_dir: Path, truth_dir: Path) -> list[tuple[str, Path, Path]]:
    preds = {p.name: p for p in sorted(pred_dir.rglob("*.rfav"))}
    pairs = []
    for t in sorted(truth_dir.rglob("*.rfav")):
        rel = t.relative_to(truth_dir)
        p = pred_dir / rel
        if p.exists():
            pairs.append((str(rel), p, t))
    if not pairs and preds:
        raise ValueError("no matching prediction/truth file names")
    return pairs


def cmd_evaluate(args) -> int:
    pred_dir, truth_dir = Path(args.pred_dir), Path(args.truth_dir)
    pairs = _paired_files(pred_dir, truth_dir)
    if not pairs:
        raise ValueError("no volume pairs found")
    out_fh = open(args.out, "w") if args.out else sys.stdout
    rows = []
    try:
        for name, p_path, t_path in pairs:
            pred = read_volume(p_path)
            truth = read_volume(t_path)
            if pred.spec.dims != truth.spec.dims:
                raise ValueError(f"shape mismatch for {name}")
            if args.kind == "lesion":
                rec = {
                    "id": name,
                    "dice": dice(pred, truth),
                    "jaccard": jaccard(pred, truth),
                }
                pm = pred.labels.any() if isinstance(pred, LabelVolume) else pred.data.any()
                tm = truth.labels.any() if isinstance(truth, LabelVolume) else truth.data.any()
                rec["hausdorff_mm"] = hausdorff(pred, truth) if (pm and tm) else None
            else:
                if isinstance(pred, LabelVolume) or isinstance(truth, LabelVolume):
                    raise ValueError(f"temperature evaluation needs f32 volumes: {name}")
                rec = {"id": name, **temp_metrics(pred, truth).to_dict()}
            rows.append(rec)
            out_fh.write(json.dumps(rec, sort_keys=True) + "\n")
        keys = [k for k in rows[0] if k != "id"]
        aggregate = {"id": "aggregate", "n": len(rows)}
        for k in keys:
            vals = [r[k] for r in rows if r[k] is not None]
            aggregate[k] = float(np.mean(vals)) if vals else None
        out_fh.write(json.dumps(aggregate, sort_keys=True) + "\n")
    finally:
        if args.out:
            out_fh.close()
    _eprint(f"{'id':>10}  " + "  ".join(f"{k:>12}" for k in keys))
    _eprint(f"{'mean':>10}  " + "  ".join(
        f"{aggregate[k]:>12.4f}" if aggregate[k] is not None else f"{'n/a':>12}" for k in keys
    ))
    return 0


def cmd_bench(args) -> int:
    spec_dims = (args.grid,) * 3
    from .grid import GridSpec

    spec = GridSpec(dims=spec_dims)
    labels = LabelVolume(spec, np.zeros(spec.dims, dtype=np.uint8))
    center = spec.index_to_mm([(d - 1) / 2 for d in spec.dims])
    pose = ElectrodePose(center=tuple(center), direction=(0.0, 0.0, 1.0), v_applied=_resolved_vp(args))
    cfg = BioheatConfig(dt=0.1, duration=args.steps * 0.1, t_init=20.0, t_boundary=20.0)
    req = simulator.SimulationRequest(
        labels=labels, pose=pose, table=MaterialTable.liver(), bioheat=cfg, arrhenius=ArrheniusParams()
    )
    simulator.run(req)  # warm-up: JIT compile + cache population
    stage_rows = []
    totals = []
    for _ in range(args.repeat):
        result = simulator.run(req)
        stage_rows.append(result.diagnostics.wall_ms)
        totals.append(result.diagnostics.wall_ms["total"])
    p50 = float(np.percentile(totals, 50))
    p95 = float(np.percentile(totals, 95))
    stages = sorted(k for k in stage_rows[0] if k != "total")
    report = {
        "grid": args.grid,
        "steps": args.steps,
        "repeat": args.repeat,
        "p50_ms": p50,
        "p95_ms": p95,
        "stages_p50_ms": {
            k: float(np.percentile([row[k] for row in stage_rows], 50)) for k in stages
        },
    }
    sums = [sum(row[k] for k in stages) for row in stage_rows]
    report["stage_sum_over_total_p50"] = float(
        np.percentile([s / t for s, t in zip(sums, totals)], 50)
    )
    print(canonical_json(report), end="")
    _eprint(f"p50 {p50:.0f} ms, p95 {p95:.0f} ms over {args.repeat} runs")
    if args.assert_budget and p50 > args.budget_ms:
        _eprint(f"budget exceeded: p50 {p50:.0f} ms > {args.budget_ms:.0f} ms")
        return 1
    return 0


def cmd_serve(args) -> int:
    import socket

    config = ServiceConfig.from_toml(args.config) if args.config else ServiceConfig()
    if args.port is not None:
        config = ServiceConfig(**{**config.__dict__, "port": args.port})
    # probe the port up front: uvicorn's own bind failure exits uncleanly
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        _eprint(f"cannot bind {config.host}:{config.port}: {exc}")
        return EXIT_PORT
    finally:
        probe.close()
    try:
        serve(config)
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            _eprint(f"cannot bind {config.host}:{config.port}: {exc}")
            return EXIT_PORT
        raise
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfasim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rfasim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_engine_flags(p):
        p.add_argument("--preset", choices=("breast", "liver"), default="breast")
        p.add_argument("--material-table", help="JSON material table path")
        p.add_argument("--vp", type=float, default=None, help="applied potential (V)")
        p.add_argument("--config", help="calibration JSON supplying v_applied")
        p.add_argument("--dt", type=float, default=0.1)
        p.add_argument("--duration", type=float, default=180.0)
        p.add_argument("--t-init", type=float, default=None)
        p.add_argument("--t-boundary", type=float, default=None)

    p = sub.add_parser("simulate", help="run one placement and write result volumes")
    p.add_argument("--volume", required=True, help="label volume (.rfav)")
    p.add_argument("--pose", help="pose JSON file (default: centered +z electrode)")
    p.add_argument("--out", required=True)
    add_engine_flags(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("calibrate", help="bisect v_applied against a target lesion area")
    p.add_argument("--target-area", type=float, default=261.0)
    p.add_argument("--tol", type=float, default=5.0)
    p.add_argument("--preset", choices=("breast", "liver"), default="liver")
    p.add_argument("--out", help="write calibration JSON here")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("gen-data", help="generate a surrogate-training dataset")
    p.add_argument("--tumors", type=int, default=11)
    p.add_argument("--per-tumor", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--import-tumors", help="directory of external label volumes (.rfav)")
    add_engine_flags(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("split", help="write train/val/test split manifest")
    p.add_argument("--data", required=True, help="dataset directory (with dataset_manifest.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=5000)
    p.add_argument("--val", type=int, default=200)
    p.add_argument("--test-foreseen", type=int, default=500)
    p.add_argument("--test-unforeseen", type=int, default=500)
    p.add_argument("--unforeseen-tumors", type=int, default=2)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("evaluate", help="score prediction volumes against truth volumes")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--truth-dir", required=True)
    p.add_argument("--kind", choices=("lesion", "temp"), required=True)
    p.add_argument("--out", help="JSONL output path (default stdout)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="time the full pipeline")
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--steps", type=int, default=1800)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--assert-budget", action="store_true")
    p.add_argument("--budget-ms", type=float, default=2000.0)
    p.add_argument("--vp", type=float, default=None)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the planning HTTP service")
    p.add_argument("--config", help="TOML service config")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _eprint(f"error: {exc}")
        return EXIT_VALIDATION
    except simulator.CalibrationError as exc:
        _eprint(f"calibration failed: {exc}")
        return EXIT_SOLVER
    except (RuntimeError, FloatingPointError) as exc:
        _eprint(f"solver failure: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
