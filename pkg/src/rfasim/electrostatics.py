"""Variable-coefficient Laplace solver for the electric potential and resistive heat source.

The conduction problem div(sigma grad V) = 0 is discretized on the voxel grid
with a 7-point finite-volume stencil; face conductivities are harmonic means
of the two adjacent voxel conductivities, which keeps the assembled operator
symmetric positive definite. Grid faces without a Dirichlet value are
zero-flux (missing neighbors simply drop out of the stencil); grounding and
the electrode potential enter through an explicit Dirichlet mask.

The system is solved matrix-free with Jacobi-preconditioned conjugate
gradients. The resistive heat source is q_r = sigma * |grad V|^2 with central
differences in the interior and one-sided differences at the grid faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import GridSpec, ScalarVolume

MM_TO_M = 1.0e-3


class SolverStalled(RuntimeError):
    """Conjugate gradients failed to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"solver stalled: relative residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PotentialProblem:
    """Conduction problem: conductivity field plus Dirichlet mask/values."""

    sigma: ScalarVolume
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    solver_tol: float = 1.0e-8
    max_iters: int = 2000

    def __post_init__(self):
        dims = self.sigma.spec.dims
        mask = np.asarray(self.dirichlet_mask, dtype=bool)
        values = np.asarray(self.dirichlet_values, dtype=np.float64)
        if mask.shape != dims or values.shape != dims:
            raise ValueError("dirichlet mask/values shape must match the grid")
        if np.any(self.sigma.data <= 0):
            raise ValueError("sigma must be strictly positive everywhere")
        if not mask.any():
            raise ValueError("at least one Dirichlet voxel is required")
        if self.solver_tol <= 0 or self.max_iters < 1:
            raise ValueError("solver_tol must be > 0 and max_iters >= 1")
        object.__setattr__(self, "dirichlet_mask", mask)
        object.__setattr__(self, "dirichlet_values", values)


@dataclass(frozen=True)
class HeatSourceField:
    """Resistive volumetric heat source q_r (W/m^3), nonnegative by construction."""

    q_r: ScalarVolume

    def __post_init__(self):
        if np.any(self.q_r.data < 0):
            raise ValueError("q_r must be >= 0 everywhere")


@dataclass(frozen=True)
class PotentialSolution:
    """Solved potential plus conjugate-gradient convergence diagnostics."""

    potential: ScalarVolume
    iterations: int
    residual: float


def face_conductances(sigma: np.ndarray, spacing_mm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Harmonic-mean face conductivities divided by the squared face spacing (per axis).

    Returned arrays have one fewer entry along their own axis; entry f along
    axis 0 couples voxels (f, j, k) and (f+1, j, k).
    """
    w = []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        s0 = sigma[tuple(lo)]
        s1 = sigma[tuple(hi)]
        h = 2.0 * s0 * s1 / (s0 + s1)
        d = spacing_mm[axis] * MM_TO_M
        w.append(h / (d * d))
    return w[0], w[1], w[2]


def _stencil_apply(v: np.ndarray, wx: np.ndarray, wy: np.ndarray, wz: np.ndarray) -> np.ndarray:
    """S(v)[p] = sum over faces of w_f * (v_neighbor - v_p), zero-flux at grid faces."""
    out = np.zeros_like(v)
    for axis, w in ((0, wx), (1, wy), (2, wz)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        d = w * (v[tuple(hi)] - v[tuple(lo)])
        out[tuple(lo)] += d
        out[tuple(hi)] -= d
    return out


def solve_potential(problem: PotentialProblem) -> PotentialSolution:
    """Solve the discrete conduction system with Jacobi-preconditioned CG.

    Dirichlet voxels hold their prescribed values exactly; the free-voxel
    system is driven to a relative residual <= solver_tol or SolverStalled
    is raised carrying the final residual.
    """
    spec = problem.sigma.spec
    sigma = problem.sigma.data
    free = ~problem.dirichlet_mask
    free_u8 = free.astype(np.uint8)
    wx, wy, wz = face_conductances(sigma, spec.spacing)

    g = np.where(problem.dirichlet_mask, problem.dirichlet_values, 0.0)
    b = _stencil_apply(g, wx, wy, wz)
    b[~free] = 0.0

    # Jacobi preconditioner: inverse of the stencil diagonal, zeroed on
    # Dirichlet voxels so CG vectors stay supported on the free set.
    diag = np.zeros(spec.dims, dtype=np.float64)
    for axis, w in ((0, wx), (1, wy), (2, wz)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        diag[tuple(lo)] += w
        diag[tuple(hi)] += w
    inv_diag = np.where(free, 1.0 / diag, 0.0)

    b_norm = float(np.linalg.norm(b))
    x = np.zeros(spec.dims, dtype=np.float64)
    if b_norm == 0.0:
        v = np.where(problem.dirichlet_mask, problem.dirichlet_values, 0.0)
        return PotentialSolution(ScalarVolume(spec, v), 0, 0.0)

    q = np.empty(spec.dims, dtype=np.float64)
    r = b.copy()
    z = r * inv_diag
    p = z.copy()
    rz = float(np.vdot(r, z))
    residual = 1.0
    iterations = 0
    for iterations in range(1, problem.max_iters + 1):
        _kernels.neg_stencil_masked(p, wx, wy, wz, free_u8, q)
        alpha = rz / float(np.vdot(p, q))
        x += alpha * p
        r -= alpha * q
        residual = float(np.linalg.norm(r)) / b_norm
        if residual <= problem.solver_tol:
            break
        z = r * inv_diag
        rz_next = float(np.vdot(r, z))
        p = z + (rz_next / rz) * p
        rz = rz_next
    if residual > problem.solver_tol:
        raise SolverStalled(residual, iterations)

    v = np.where(problem.dirichlet_mask, problem.dirichlet_values, x)
    return PotentialSolution(ScalarVolume(spec, v).require_finite("potential"), iterations, residual)


def heat_source(v: ScalarVolume, sigma: ScalarVolume) -> HeatSourceField:
    """Resistive heating q_r = sigma * |grad V|^2 in W/m^3 (spacing converted to meters)."""
    if v.spec != sigma.spec:
        raise ValueError("grid mismatch")
    spacing_m = [s * MM_TO_M for s in v.spec.spacing]
    gx, gy, gz = np.gradient(v.data, *spacing_m, edge_order=1)
    q = sigma.data * (gx * gx + gy * gy + gz * gz)
    return HeatSourceField(ScalarVolume(v.spec, q).require_finite("heat source"))


def boundary_shell_mask(spec: GridSpec) -> np.ndarray:
    """Boolean mask of the outer one-voxel shell of the grid."""
    mask = np.zeros(spec.dims, dtype=bool)
    mask[0, :, :] = mask[-1, :, :] = True
    mask[:, 0, :] = mask[:, -1, :] = True
    mask[:, :, 0] = mask[:, :, -1] = True
    return mask


def dirichlet_current(
    solution: PotentialSolution, sigma: ScalarVolume, region: np.ndarray
) -> float:
    """Net current (A) flowing out of a voxel region, from discrete face fluxes.

    Fluxes are w_f * (V_inside - V_outside) summed over faces that cross the
    region boundary, times the face area. Used in tests to check discrete
    current conservation between the electrode and the grounded boundary.
    """
    spec = sigma.spec
    v = solution.potential.data
    wx, wy, wz = face_conductances(sigma.data, spec.spacing)
    region = np.asarray(region, dtype=bool)
    voxel_volume_m3 = spec.voxel_volume_mm3 * MM_TO_M**3
    total = 0.0
    for axis, w in ((0, wx), (1, wy), (2, wz)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        in_lo = region[tuple(lo)]
        in_hi = region[tuple(hi)]
        # current lo -> hi through one face: sigma_f * (V_lo - V_hi)/d * area = w * dV * voxel volume
        flux = w * (v[tuple(lo)] - v[tuple(hi)]) * voxel_volume_m3
        crossing_out = in_lo & ~in_hi
        crossing_in = ~in_lo & in_hi
        total += float(flux[crossing_out].sum()) - float(flux[crossing_in].sum())
    return total
