"""Explicit FDTD integration of the Pennes bio-heat equation.

Per time step, each interior voxel gains a 7-point conduction increment using
the voxel's own thermal conductivity on all six neighbor differences, plus
blood-perfusion relaxation toward the blood temperature, metabolic heat, and
the resistive heat source. The outer one-voxel shell is held at a fixed
boundary temperature. The explicit step is stable only for
dt < ds^2 * min(rho*c) / (6 * max(k)); that bound is checked before any
update is applied.

The update is evaluated as increments on neighbor differences (never as a
folded decay coefficient) so a uniform field at the blood temperature with no
sources is a bit-exact fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .electrostatics import MM_TO_M, HeatSourceField
from .grid import GridSpec, LabelVolume, MaterialFields, MaterialTable, ScalarVolume, assign_materials


@dataclass(frozen=True)
class BloodProperties:
    rho_b: float = 1050.0  # kg/m^3
    c_b: float = 3617.0    # J/kg/K
    t_b: float = 37.0      # degC


@dataclass(frozen=True)
class BioheatConfig:
    """Time stepping and thermal boundary configuration."""

    dt: float = 0.1                # s
    duration: float = 180.0        # s
    t_init: float = 37.0           # degC
    t_boundary: float = 37.0       # degC
    blood: BloodProperties = field(default_factory=BloodProperties)
    record_final_only: bool = True
    snapshot_every: int = 10       # steps between recorded frames when recording

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.duration < self.dt:
            raise ValueError("duration must be >= dt")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "duration": self.duration,
            "t_init": self.t_init,
            "t_boundary": self.t_boundary,
            "blood": vars(self.blood).copy(),
            "record_final_only": self.record_final_only,
            "snapshot_every": self.snapshot_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BioheatConfig":
        d = dict(d)
        if "blood" in d:
            d["blood"] = BloodProperties(**d["blood"])
        return cls(**d)


def stability_limit(props: MaterialFields, spec: GridSpec) -> float:
    """Largest stable dt: ds^2 * min(rho*c) / (6 * max(k)), ds in meters."""
    ds_m = min(spec.spacing) * MM_TO_M
    max_k = float(props.k.data.max())
    if max_k == 0.0:
        return float("inf")
    return ds_m * ds_m * float(props.rho_c.min()) / (6.0 * max_k)


def check_stability(cfg: BioheatConfig, props: MaterialFields, spec: GridSpec) -> None:
    limit = stability_limit(props, spec)
    if cfg.dt >= limit:
        raise ValueError(f"unstable dt: {cfg.dt} s >= stability limit {limit:.6g} s")


class StepKernel:
    """Preallocated-buffer FDTD update shared by step() and the simulator loop.

    The update is evaluated as increments on neighbor differences with a fixed
    pairwise summation order, identically in the numba and numpy backends, so
    a uniform field at the blood temperature with no sources is a bit-exact
    fixed point and backend choice never changes results.
    """

    def __init__(self, props: MaterialFields, q_r: np.ndarray, cfg: BioheatConfig, spec: GridSpec):
        check_stability(cfg, props, spec)
        self.spec = spec
        self.cfg = cfg
        inner = (slice(1, -1),) * 3
        dt_over_rc = cfg.dt / props.rho_c[inner]
        blood = cfg.blood

        spacing = spec.spacing
        self.isotropic = spacing[0] == spacing[1] == spacing[2]
        k_inner = props.k.data[inner]
        self.alpha = [
            np.ascontiguousarray(k_inner / (spacing[ax] * MM_TO_M) ** 2 * dt_over_rc)
            for ax in range(3)
        ]
        self.perf = np.ascontiguousarray(
            dt_over_rc * (blood.rho_b * blood.c_b * props.omega_b.data[inner])
        )
        self.t_b = float(blood.t_b)
        self.source = np.ascontiguousarray(
            dt_over_rc * (props.q_m.data[inner] + np.asarray(q_r)[inner])
        )
        self._acc = np.empty_like(self.perf)
        self._tmp = np.empty_like(self.perf)

    def step_into(self, t: np.ndarray, out: np.ndarray) -> None:
        """One explicit update of full-grid t written into out (interior only).

        The caller keeps the shell of out at the boundary temperature.
        """
        if self.isotropic:
            _kernels.fdtd_step_iso(
                t, out, self.alpha[0], self.perf, self.t_b, self.source, self._acc, self._tmp
            )
        else:
            _kernels.fdtd_step_aniso(
                t, out, self.alpha[0], self.alpha[1], self.alpha[2],
                self.perf, self.t_b, self.source, self._acc, self._tmp,
            )


def _check_alignment(t: ScalarVolume, props: MaterialFields, q_r: HeatSourceField) -> None:
    if not (t.spec == props.spec == q_r.q_r.spec):
        raise ValueError("grid mismatch")


def step(
    t: ScalarVolume,
    props: MaterialFields,
    q_r: HeatSourceField,
    cfg: BioheatConfig,
) -> ScalarVolume:
    """Apply one explicit Pennes update; boundary voxels are held at t_boundary."""
    _check_alignment(t, props, q_r)
    t.require_finite("temperature")
    kernel = StepKernel(props, q_r.q_r.data, cfg, t.spec)
    out = np.full(t.spec.dims, cfg.t_boundary, dtype=np.float64)
    kernel.step_into(t.data, out)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("divergence")
    return ScalarVolume(t.spec, out)


@dataclass(frozen=True)
class BioheatResult:
    final: ScalarVolume
    snapshots: list[tuple[float, ScalarVolume]]


def integrate(
    labels: LabelVolume,
    table: MaterialTable,
    q_r: HeatSourceField,
    cfg: BioheatConfig,
) -> BioheatResult:
    """Integrate duration/dt explicit steps from a uniform t_init field.

    Returns the final temperature and, unless record_final_only is set,
    decimated snapshots every snapshot_every steps.
    """
    props = assign_materials(labels, table)
    _ = q_r.q_r.require_finite("heat source")
    if labels.spec != q_r.q_r.spec:
        raise ValueError("grid mismatch")
    kernel = StepKernel(props, q_r.q_r.data, cfg, labels.spec)

    t = np.full(labels.spec.dims, cfg.t_init, dtype=np.float64)
    _apply_boundary(t, cfg.t_boundary)
    buf = t.copy()
    snapshots: list[tuple[float, ScalarVolume]] = []
    n_steps = cfg.n_steps
    for i in range(1, n_steps + 1):
        kernel.step_into(t, buf)
        t, buf = buf, t
        if i % 100 == 0 and not np.all(np.isfinite(t)):
            raise FloatingPointError("divergence")
        if not cfg.record_final_only and i % cfg.snapshot_every == 0:
            snapshots.append((i * cfg.dt, ScalarVolume(labels.spec, t.copy())))
    if not np.all(np.isfinite(t)):
        raise FloatingPointError("divergence")
    return BioheatResult(final=ScalarVolume(labels.spec, t), snapshots=snapshots)


def _apply_boundary(t: np.ndarray, t_boundary: float) -> None:
    t[0, :, :] = t[-1, :, :] = t_boundary
    t[:, 0, :] = t[:, -1, :] = t_boundary
    t[:, :, 0] = t[:, :, -1] = t_boundary
