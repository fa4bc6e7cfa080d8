import numpy as np
import pytest

from rfasim import _kernels
from rfasim.bioheat import (
    BioheatConfig,
    BloodProperties,
    StepKernel,
    check_stability,
    integrate,
    stability_limit,
    step,
)
from rfasim.electrostatics import MM_TO_M, HeatSourceField
from rfasim.grid import (
    GridSpec,
    LabelVolume,
    MaterialFields,
    MaterialTable,
    ScalarVolume,
    assign_materials,
)


def make_fields(spec, rho=1000.0, c=1000.0, k=0.0, omega_b=0.0, q_m=0.0) -> MaterialFields:
    def vol(value):
        return ScalarVolume(spec, np.full(spec.dims, float(value)))

    return MaterialFields(sigma=vol(1.0), rho=vol(rho), c=vol(c), k=vol(k),
                          omega_b=vol(omega_b), q_m=vol(q_m))


def reference_step(t, props: MaterialFields, q_r, cfg: BioheatConfig, spec: GridSpec):
    """Oracle: scalar transliteration of the explicit update equation."""
    out = np.full(spec.dims, cfg.t_boundary, dtype=float)
    rho = props.rho.data
    c = props.c.data
    k = props.k.data
    omega = props.omega_b.data
    q_m = props.q_m.data
    blood = cfg.blood
    ds = [s * MM_TO_M for s in spec.spacing]
    for i in range(1, spec.dims[0] - 1):
        for j in range(1, spec.dims[1] - 1):
            for kk in range(1, spec.dims[2] - 1):
                conduction = (
                    k[i, j, kk] / ds[0] ** 2 * ((t[i + 1, j, kk] - t[i, j, kk]) - (t[i, j, kk] - t[i - 1, j, kk]))
                    + k[i, j, kk] / ds[1] ** 2 * ((t[i, j + 1, kk] - t[i, j, kk]) - (t[i, j, kk] - t[i, j - 1, kk]))
                    + k[i, j, kk] / ds[2] ** 2 * ((t[i, j, kk + 1] - t[i, j, kk]) - (t[i, j, kk] - t[i, j, kk - 1]))
                )
                perfusion = blood.rho_b * blood.c_b * omega[i, j, kk] * (blood.t_b - t[i, j, kk])
                rhs = conduction + perfusion + q_m[i, j, kk] + q_r[i, j, kk]
                out[i, j, kk] = t[i, j, kk] + cfg.dt * rhs / (rho[i, j, kk] * c[i, j, kk])
    return out


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="dt"):
            BioheatConfig(dt=0.0)
        with pytest.raises(ValueError, match="duration"):
            BioheatConfig(dt=1.0, duration=0.5)

    def test_n_steps(self):
        assert BioheatConfig(dt=0.1, duration=180.0).n_steps == 1800

    def test_round_trip_dict(self):
        cfg = BioheatConfig(dt=0.05, duration=10.0, t_init=20.0, t_boundary=20.0)
        assert BioheatConfig.from_dict(cfg.to_dict()) == cfg


class TestStability:
    def test_limit_formula(self, spec41):
        props = assign_materials(
            LabelVolume(spec41, np.zeros(spec41.dims, dtype=np.uint8)), MaterialTable.breast()
        )
        # ds^2 * min(rho c) / (6 max k), ds = 1 mm
        expected = (1e-3) ** 2 * (911.0 * 2348.0) / (6.0 * 0.21)
        assert stability_limit(props, spec41) == pytest.approx(expected)

    def test_guard_rejects_dt_at_limit(self, spec41):
        labels = LabelVolume(spec41, np.zeros(spec41.dims, dtype=np.uint8))
        props = assign_materials(labels, MaterialTable.breast())
        limit = stability_limit(props, spec41)
        with pytest.raises(ValueError, match="unstable dt"):
            check_stability(BioheatConfig(dt=limit, duration=limit), props, spec41)
        check_stability(BioheatConfig(dt=0.999 * limit, duration=limit), props, spec41)


class TestStep:
    def test_equilibrium_fixed_point_exact(self, spec9):
        props = make_fields(spec9, k=0.5, omega_b=0.2, q_m=0.0)
        cfg = BioheatConfig(dt=0.1, duration=1.0, t_init=37.0, t_boundary=37.0)
        t = ScalarVolume.full(spec9, 37.0)
        q = HeatSourceField(ScalarVolume.full(spec9, 0.0))
        out = step(t, props, q, cfg)
        assert np.array_equal(out.data, t.data)  # bit-exact fixed point

    def test_source_only_analytic_rise(self, spec9):
        props = make_fields(spec9, rho=1000.0, c=1000.0, k=0.0)
        cfg = BioheatConfig(dt=0.1, duration=1.0, t_init=37.0, t_boundary=37.0)
        q_data = np.zeros(spec9.dims)
        q_data[4, 4, 4] = 1.0e6
        out = step(ScalarVolume.full(spec9, 37.0), props, HeatSourceField(ScalarVolume(spec9, q_data)), cfg)
        assert out.data[4, 4, 4] == pytest.approx(37.1, rel=1e-12)
        others = np.delete(out.data.ravel(), np.ravel_multi_index((4, 4, 4), spec9.dims))
        assert np.all(others == 37.0)

    def test_matches_scalar_reference(self):
        spec = GridSpec(dims=(5, 5, 5))
        rng = np.random.default_rng(31)
        props = MaterialFields(
            sigma=ScalarVolume(spec, np.ones(spec.dims)),
            rho=ScalarVolume(spec, rng.uniform(900, 1100, spec.dims)),
            c=ScalarVolume(spec, rng.uniform(2000, 4000, spec.dims)),
            k=ScalarVolume(spec, rng.uniform(0.1, 0.6, spec.dims)),
            omega_b=ScalarVolume(spec, rng.uniform(0.0, 5.3, spec.dims)),
            q_m=ScalarVolume(spec, rng.uniform(0.0, 1e4, spec.dims)),
        )
        cfg = BioheatConfig(dt=0.05, duration=1.0, t_init=37.0, t_boundary=36.0)
        t = rng.uniform(20.0, 90.0, spec.dims)
        q_r = rng.uniform(0.0, 1e6, spec.dims)
        out = step(ScalarVolume(spec, t), props, HeatSourceField(ScalarVolume(spec, q_r)), cfg)
        expected = reference_step(t, props, q_r, cfg, spec)
        assert np.allclose(out.data, expected, rtol=1e-12, atol=0)

    def test_anisotropic_matches_scalar_reference(self):
        spec = GridSpec(dims=(5, 5, 5), spacing=(0.5, 1.0, 2.0))
        rng = np.random.default_rng(32)
        props = make_fields(spec, rho=1000, c=3000, k=0.3, omega_b=0.5, q_m=100.0)
        cfg = BioheatConfig(dt=0.05, duration=1.0, t_boundary=35.0)
        t = rng.uniform(20.0, 90.0, spec.dims)
        q_r = rng.uniform(0.0, 1e6, spec.dims)
        out = step(ScalarVolume(spec, t), props, HeatSourceField(ScalarVolume(spec, q_r)), cfg)
        expected = reference_step(t, props, q_r, cfg, spec)
        assert np.allclose(out.data, expected, rtol=1e-12, atol=0)

    def test_unstable_dt_rejected(self, spec9):
        props = make_fields(spec9, rho=1000.0, c=1000.0, k=10.0)
        cfg = BioheatConfig(dt=1.0, duration=2.0)
        with pytest.raises(ValueError, match="unstable dt"):
            step(ScalarVolume.full(spec9, 37.0), props, HeatSourceField(ScalarVolume.full(spec9, 0.0)), cfg)

    def test_divergent_source_detected(self, spec9):
        props = make_fields(spec9, rho=1.0, c=1.0, k=0.0)
        cfg = BioheatConfig(dt=0.1, duration=1.0)
        q = np.zeros(spec9.dims)
        q[4, 4, 4] = 1.0e308 * 8
        with pytest.raises(FloatingPointError, match="divergence"):
            step(ScalarVolume.full(spec9, 37.0), props, HeatSourceField(ScalarVolume(spec9, q)), cfg)

    def test_grid_mismatch_rejected(self, spec9):
        other = GridSpec(dims=(9, 9, 9), spacing=(2.0, 2.0, 2.0))
        props = make_fields(spec9)
        cfg = BioheatConfig()
        q = HeatSourceField(ScalarVolume.full(other, 0.0))
        with pytest.raises(ValueError, match="grid mismatch"):
            step(ScalarVolume.full(spec9, 37.0), props, q, cfg)

    def test_perfusion_strictly_cools_above_blood_temp(self, spec9):
        props = make_fields(spec9, k=0.0, omega_b=1.0)
        cfg = BioheatConfig(dt=0.001, duration=1.0, t_boundary=45.0)
        t = ScalarVolume.full(spec9, 45.0)  # everywhere above T_b = 37
        out = step(t, props, HeatSourceField(ScalarVolume.full(spec9, 0.0)), cfg)
        inner = out.data[1:-1, 1:-1, 1:-1]
        assert np.all(inner < 45.0)

    def test_maximum_principle_source_free(self, spec9):
        rng = np.random.default_rng(12)
        props = make_fields(spec9, rho=1000, c=1000, k=0.15, omega_b=0.0)
        cfg = BioheatConfig(dt=0.05, duration=1.0, t_boundary=30.0)
        t = rng.uniform(25.0, 60.0, spec9.dims)
        lo, hi = min(t.min(), 30.0), max(t.max(), 30.0)
        vol = ScalarVolume(spec9, t)
        q = HeatSourceField(ScalarVolume.full(spec9, 0.0))
        for _ in range(50):
            vol = step(vol, props, q, cfg)
            assert vol.data.min() >= lo - 1e-12
            assert vol.data.max() <= hi + 1e-12


class TestIntegrate:
    def _labels(self, spec):
        return LabelVolume(spec, np.zeros(spec.dims, dtype=np.uint8))

    def test_equilibrium_stays_exact(self, spec9):
        # liver table has no perfusion/metabolism; equal init and boundary at
        # 37 degC must be preserved exactly over many steps
        cfg = BioheatConfig(dt=0.1, duration=5.0, t_init=37.0, t_boundary=37.0)
        res = integrate(self._labels(spec9), MaterialTable.liver(), HeatSourceField(ScalarVolume.full(spec9, 0.0)), cfg)
        assert np.all(res.final.data == 37.0)

    def test_breast_equilibrium_without_metabolism(self, spec9):
        table = MaterialTable.breast()
        mats = {label: props for label, props in table.materials.items()}
        from dataclasses import replace

        zero_qm = {lab: replace(p, q_m=0.0) for lab, p in mats.items()}
        table0 = MaterialTable(materials=zero_qm)
        cfg = BioheatConfig(dt=0.1, duration=2.0, t_init=37.0, t_boundary=37.0)
        res = integrate(self._labels(spec9), table0, HeatSourceField(ScalarVolume.full(spec9, 0.0)), cfg)
        assert np.all(res.final.data == 37.0)

    def test_snapshots_decimated(self, spec9):
        cfg = BioheatConfig(
            dt=0.1, duration=2.0, t_init=37.0, t_boundary=37.0,
            record_final_only=False, snapshot_every=5,
        )
        res = integrate(self._labels(spec9), MaterialTable.liver(), HeatSourceField(ScalarVolume.full(spec9, 0.0)), cfg)
        assert len(res.snapshots) == 4
        assert res.snapshots[0][0] == pytest.approx(0.5)
        assert res.snapshots[-1][0] == pytest.approx(2.0)

    def test_linearity_in_sources(self, spec9):
        # constant coefficients: temperature rise above the no-source baseline
        # is additive in the heat source
        table = MaterialTable.liver()
        labels = self._labels(spec9)
        cfg = BioheatConfig(dt=0.1, duration=3.0, t_init=20.0, t_boundary=20.0)
        rng = np.random.default_rng(6)
        q1 = rng.uniform(0, 5e5, spec9.dims)
        q2 = rng.uniform(0, 5e5, spec9.dims)

        def final(q):
            return integrate(labels, table, HeatSourceField(ScalarVolume(spec9, q)), cfg).final.data

        base = final(np.zeros(spec9.dims))
        rise_sum = (final(q1) - base) + (final(q2) - base)
        rise_joint = final(q1 + q2) - base
        assert np.allclose(rise_joint, rise_sum, atol=1e-10)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not available")
class TestKernelBackends:
    def test_numba_and_numpy_paths_bit_identical(self):
        rng = np.random.default_rng(44)
        for spacing in ((1.0, 1.0, 1.0), (0.5, 1.0, 2.0)):
            spec = GridSpec(dims=(12, 11, 10), spacing=spacing)
            props = MaterialFields(
                sigma=ScalarVolume(spec, np.ones(spec.dims)),
                rho=ScalarVolume(spec, rng.uniform(900, 1100, spec.dims)),
                c=ScalarVolume(spec, rng.uniform(2000, 4000, spec.dims)),
                k=ScalarVolume(spec, rng.uniform(0.1, 0.5, spec.dims)),
                omega_b=ScalarVolume(spec, rng.uniform(0, 2, spec.dims)),
                q_m=ScalarVolume(spec, rng.uniform(0, 1e4, spec.dims)),
            )
            cfg = BioheatConfig(dt=0.02, duration=1.0, t_boundary=36.0)
            kernel = StepKernel(props, rng.uniform(0, 1e6, spec.dims), cfg, spec)
            t = rng.uniform(20, 80, spec.dims)
            out_numba = np.full(spec.dims, cfg.t_boundary)
            kernel.step_into(t, out_numba)
            out_numpy = np.full(spec.dims, cfg.t_boundary)
            if kernel.isotropic:
                _kernels.fdtd_step_iso_numpy(
                    t, out_numpy, kernel.alpha[0], kernel.perf, kernel.t_b,
                    kernel.source, kernel._acc, kernel._tmp,
                )
            else:
                _kernels.fdtd_step_aniso_numpy(
                    t, out_numpy, *kernel.alpha, kernel.perf, kernel.t_b,
                    kernel.source, kernel._acc, kernel._tmp,
                )
            assert out_numba.tobytes() == out_numpy.tobytes()
