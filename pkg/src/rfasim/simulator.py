"""Full ablation pipeline: materials, potential, heat source, thermal+damage co-integration.

One simulation runs the stages in order: rasterize the electrode tip, expand
material properties, solve the conduction problem (electrode at the applied
potential, grounded outer shell), derive the resistive heat source once, then
interleave explicit bio-heat steps with Arrhenius damage accumulation over
the ablation duration, and classify the lesion.

The applied potential magnitude is not a physical given of the model; it is
calibrated by bisection so the homogeneous liver benchmark reproduces a
target lesion cross-section area (see :func:`calibrate_vp`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .bioheat import BioheatConfig, BloodProperties, StepKernel, _apply_boundary
from .electrode import ElectrodePose, rasterize
from .electrostatics import (
    PotentialProblem,
    PotentialSolution,
    boundary_shell_mask,
    heat_source,
    solve_potential,
)
from .grid import GridSpec, LabelVolume, MaterialTable, ScalarVolume, assign_materials
from .metrics import dominant_axis, morphometry
from .necrosis import ArrheniusParams, classify

# Bisection-calibrated applied potential: reproduces the 261 mm^2 lesion
# cross-section of the ex vivo bovine-liver benchmark on the default grid
# (achieved area 263 mm^2). Recalibrate with `rfasim calibrate`.
DEFAULT_V_APPLIED = 37.923828125  # volts

SOLVER_TOL = 1.0e-8
SOLVER_MAX_ITERS = 2000


@dataclass(frozen=True)
class SimulationRequest:
    labels: LabelVolume
    pose: ElectrodePose
    table: MaterialTable
    bioheat: BioheatConfig
    arrhenius: ArrheniusParams

    def with_v_applied(self, v_applied: float) -> "SimulationRequest":
        return replace(self, pose=self.pose.with_v_applied(v_applied))


@dataclass(frozen=True)
class Diagnostics:
    cg_iters: int
    cg_residual: float
    wall_ms: dict[str, float]
    v_applied: float
    n_steps: int

    def to_dict(self) -> dict:
        return {
            "cg_iters": self.cg_iters,
            "cg_residual": self.cg_residual,
            "wall_ms": dict(self.wall_ms),
            "v_applied": self.v_applied,
            "n_steps": self.n_steps,
            "engine_version": __version__,
        }


@dataclass(frozen=True)
class SimulationResult:
    t_final: ScalarVolume
    psi: ScalarVolume
    lesion: LabelVolume
    electrode_mask: LabelVolume
    diagnostics: Diagnostics


def run(req: SimulationRequest) -> SimulationResult:
    """Execute the full pipeline for one electrode placement."""
    spec = req.labels.spec
    wall: dict[str, float] = {}
    t_total = time.perf_counter()

    t0 = time.perf_counter()
    electrode_mask = rasterize(req.pose, spec)
    wall["rasterize"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    labels_with_tip = req.labels.with_electrode(electrode_mask.labels != 0)
    props = assign_materials(labels_with_tip, req.table)
    wall["materials"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    dirichlet_mask = boundary_shell_mask(spec)
    dirichlet_values = np.zeros(spec.dims)
    tip = electrode_mask.labels != 0
    dirichlet_mask |= tip
    dirichlet_values[tip] = req.pose.v_applied
    problem = PotentialProblem(
        sigma=props.sigma,
        dirichlet_mask=dirichlet_mask,
        dirichlet_values=dirichlet_values,
        solver_tol=SOLVER_TOL,
        max_iters=SOLVER_MAX_ITERS,
    )
    solution: PotentialSolution = solve_potential(problem)
    wall["potential"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    q_r = heat_source(solution.potential, props.sigma)
    wall["heat_source"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    cfg = req.bioheat
    kernel = StepKernel(props, q_r.q_r.data, cfg, spec)
    t = np.full(spec.dims, cfg.t_init, dtype=np.float64)
    _apply_boundary(t, cfg.t_boundary)
    buf = t.copy()
    psi = np.zeros(spec.dims, dtype=np.float64)
    dt = cfg.dt
    params = req.arrhenius
    n_steps = cfg.n_steps
    for i in range(1, n_steps + 1):
        kernel.step_into(t, buf)
        t, buf = buf, t
        inc = params.rate(t)
        inc *= dt
        psi += inc
        if i % 200 == 0 and not np.all(np.isfinite(t)):
            raise FloatingPointError("divergence")
    if not np.all(np.isfinite(t)):
        raise FloatingPointError("divergence")
    wall["integrate"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    psi_vol = ScalarVolume(spec, psi)
    lesion = classify(psi_vol, params)
    wall["classify"] = (time.perf_counter() - t0) * 1e3
    wall["total"] = (time.perf_counter() - t_total) * 1e3

    return SimulationResult(
        t_final=ScalarVolume(spec, t),
        psi=psi_vol,
        lesion=lesion,
        electrode_mask=electrode_mask,
        diagnostics=Diagnostics(
            cg_iters=solution.iterations,
            cg_residual=solution.residual,
            wall_ms=wall,
            v_applied=req.pose.v_applied,
            n_steps=n_steps,
        ),
    )


def lesion_area_mm2(result: SimulationResult, pose: ElectrodePose) -> float:
    """Cross-section lesion area on the electrode plane; 0 for an empty lesion."""
    if not result.lesion.labels.any():
        return 0.0
    return morphometry(result.lesion, vertical_axis=dominant_axis(pose.direction)).area_mm2


@dataclass(frozen=True)
class CalibrationResult:
    v_applied: float
    area_mm2: float
    target_area_mm2: float
    evaluations: list[tuple[float, float]]  # (v, area) pairs in evaluation order


class CalibrationError(RuntimeError):
    pass


def calibrate_vp(
    target_area_mm2: float,
    setup: SimulationRequest,
    tol_mm2: float = 5.0,
    v_lo: float = 1.0,
    v_hi: float = 200.0,
    max_iters: int = 40,
) -> CalibrationResult:
    """Bisect the applied potential until the lesion cross-section area hits the target.

    The lesion area is monotone nondecreasing in the applied potential over
    the bracket (checked by probing both ends). Because the area is quantized
    to whole voxels, bisection returns the best achievable value once the
    bracket collapses; the achieved area is always reported alongside.
    """
    if target_area_mm2 < 0:
        raise ValueError("target area must be >= 0")

    evaluations: list[tuple[float, float]] = []

    def area_at(v: float) -> float:
        result = run(setup.with_v_applied(v))
        a = lesion_area_mm2(result, setup.pose)
        evaluations.append((v, a))
        return a

    area_lo = area_at(v_lo)
    area_hi = area_at(v_hi)
    if area_lo > area_hi or not (area_lo <= target_area_mm2 <= area_hi):
        raise CalibrationError(
            f"calibration bracket failed: area({v_lo} V) = {area_lo:.1f}, "
            f"area({v_hi} V) = {area_hi:.1f}, target {target_area_mm2:.1f} mm^2"
        )

    best_v, best_area = (v_lo, area_lo)
    if abs(area_hi - target_area_mm2) < abs(area_lo - target_area_mm2):
        best_v, best_area = (v_hi, area_hi)

    lo, hi = v_lo, v_hi
    for _ in range(max_iters):
        if abs(best_area - target_area_mm2) <= tol_mm2 and best_area > 0:
            break
        mid = 0.5 * (lo + hi)
        if hi - lo < 0.05:
            break
        area_mid = area_at(mid)
        if abs(area_mid - target_area_mm2) < abs(best_area - target_area_mm2):
            best_v, best_area = mid, area_mid
        if area_mid < target_area_mm2:
            lo = mid
        else:
            hi = mid
    return CalibrationResult(
        v_applied=best_v,
        area_mm2=best_area,
        target_area_mm2=target_area_mm2,
        evaluations=evaluations,
    )


def liver_benchmark_request(
    v_applied: float = DEFAULT_V_APPLIED,
    spec: GridSpec | None = None,
    t_boundary: float | None = None,
) -> SimulationRequest:
    """Homogeneous ex vivo liver setup: centered 10 mm tip, 180 s from 20 degC."""
    if spec is None:
        spec = GridSpec(dims=(41, 41, 41))
    labels = LabelVolume(spec, np.zeros(spec.dims, dtype=np.uint8))
    center = spec.index_to_mm([d // 2 for d in spec.dims])
    pose = ElectrodePose(center=tuple(center), direction=(0.0, 0.0, 1.0), v_applied=v_applied)
    cfg = BioheatConfig(
        dt=0.1,
        duration=180.0,
        t_init=20.0,
        t_boundary=20.0 if t_boundary is None else t_boundary,
        blood=BloodProperties(),
    )
    return SimulationRequest(
        labels=labels,
        pose=pose,
        table=MaterialTable.liver(),
        bioheat=cfg,
        arrhenius=ArrheniusParams(),
    )


def breast_request(
    labels: LabelVolume,
    pose: ElectrodePose,
    duration: float = 180.0,
    dt: float = 0.1,
) -> SimulationRequest:
    """Patient-geometry setup: breast tissue constants, body-temperature baseline."""
    cfg = BioheatConfig(dt=dt, duration=duration, t_init=37.0, t_boundary=37.0)
    return SimulationRequest(
        labels=labels,
        pose=pose,
        table=MaterialTable.breast(),
        bioheat=cfg,
        arrhenius=ArrheniusParams(),
    )
