"""Gauge transformations and covariance measurement."""

import numpy as np
import pytest

from matlat import algebra as alg
from matlat import fields as fl
from matlat import gauge as ga
from matlat import kernels as K
from matlat import systems as sy
from matlat.errors import GroupMismatchError, NotInAlgebraError

from test_systems import base_params, const_field, lat2, make_config

RNG_SEED = 41577


def constant_gauge(lat, group="SU2", seed=0):
    return ga.random_gauge(lat, seed + 17, group=group, cutoff=0)


class TestGaugeField:
    def test_membership_enforced(self):
        lat = lat2(8)
        not_unitary = const_field(lat, alg.E + 0.5 * alg.SIGMA1, "V")
        with pytest.raises(NotInAlgebraError):
            ga.GaugeField(not_unitary, "U2")

    def test_su2_requires_unit_det(self):
        lat = lat2(8)
        # global phase: unitary with det != 1, fine for U2, rejected for SU2
        phase = const_field(lat, np.exp(0.3j) * alg.E, "V")
        ga.GaugeField(phase, "U2")
        with pytest.raises(NotInAlgebraError):
            ga.GaugeField(phase, "SU2")

    def test_group_tag_validated(self):
        lat = lat2(8)
        with pytest.raises(ValueError):
            ga.GaugeField(const_field(lat, alg.E, "V"), "SO3")


class TestRandomGauge:
    def test_deterministic(self):
        lat = lat2(8)
        a = ga.random_gauge(lat, 5)
        b = ga.random_gauge(lat, 5)
        c = ga.random_gauge(lat, 6)
        np.testing.assert_array_equal(a.V.values, b.V.values)
        assert fl.max_norm(a.V.values - c.V.values) > 1e-6

    def test_su2_unit_det(self):
        lat = lat2(8)
        V = ga.random_gauge(lat, RNG_SEED, group="SU2")
        dets = K.det(V.V.values)
        assert np.max(np.abs(dets - 1.0)) < 1e-12

    def test_cutoff_zero_is_constant(self):
        lat = lat2(8)
        V = ga.random_gauge(lat, RNG_SEED, cutoff=0)
        assert fl.max_norm(V.V.values - V.V.values[0, 0]) < 1e-14

    def test_default_group_assignment(self):
        assert ga.default_group(sy.SystemKind.NEUTRINO2) == "SU2"
        assert ga.default_group(sy.SystemKind.ELECTRON3) == "U2"
        assert ga.default_group(sy.SystemKind.LEFT_CONSERVATIVE) == "U2"


class TestApplyGauge:
    def test_identity_gauge_is_identity(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = make_config(kind)
        V = ga.GaugeField(const_field(cfg.lattice, alg.E, "V"), "SU2")
        out = ga.apply_gauge(cfg, V, kind)
        np.testing.assert_allclose(out.phi.values, cfg.phi.values, atol=1e-14)
        np.testing.assert_allclose(out.N.values, cfg.N.values, atol=1e-14)
        for mu in range(2):
            np.testing.assert_allclose(
                out.A.component(mu).values, cfg.A.component(mu).values, atol=1e-14
            )

    def test_constant_v_conjugates_potential_exactly(self):
        kind = sy.SystemKind.NEUTRINO2
        cfg = make_config(kind)
        V = constant_gauge(cfg.lattice)
        out = ga.apply_gauge(cfg, V, kind)
        v = V.V.values
        for mu in range(2):
            expect = K.mul(K.dagger(v), K.mul(cfg.A.component(mu).values, v))
            assert fl.max_norm(out.A.component(mu).values - expect) < 1e-13

    def test_det_multiplicativity(self):
        # oracle: det from the generic LU route in numpy
        kind = sy.SystemKind.ELECTRON2
        cfg = make_config(kind)
        V = ga.random_gauge(cfg.lattice, RNG_SEED, group="U2", cutoff=1)
        out = ga.apply_gauge(cfg, V, kind)
        d0 = np.linalg.det(cfg.phi.values)
        dv = np.linalg.det(V.V.values)
        d1 = np.linalg.det(out.phi.values)
        np.testing.assert_allclose(d1, d0 * dv, atol=1e-12)

    def test_su2_preserves_abs_det(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = make_config(kind)
        V = ga.random_gauge(cfg.lattice, RNG_SEED, group="SU2", cutoff=1)
        out = ga.apply_gauge(cfg, V, kind)
        np.testing.assert_allclose(
            np.abs(K.det(out.phi.values)), np.abs(K.det(cfg.phi.values)), atol=1e-12
        )

    def test_group_mismatch_rejected(self):
        kind = sy.SystemKind.NEUTRINO2
        cfg = make_config(kind)
        V = ga.random_gauge(cfg.lattice, RNG_SEED, group="U2", cutoff=1)
        with pytest.raises(GroupMismatchError):
            ga.apply_gauge(cfg, V, kind)

    def test_su2_gauge_allowed_on_u2_kind(self):
        kind = sy.SystemKind.ELECTRON2
        cfg = make_config(kind)
        V = ga.random_gauge(cfg.lattice, RNG_SEED, group="SU2", cutoff=1)
        ga.apply_gauge(cfg, V, kind)

    def test_constant_group_action_composes(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = make_config(kind)
        V1 = constant_gauge(cfg.lattice, seed=1)
        V2 = constant_gauge(cfg.lattice, seed=2)
        two_steps = ga.apply_gauge(ga.apply_gauge(cfg, V1, kind), V2, kind)
        one_step = ga.apply_gauge(cfg, V1.compose(V2), kind)
        for attr in ("phi", "N", "Nminus"):
            a = getattr(two_steps, attr).values
            b = getattr(one_step, attr).values
            assert fl.max_norm(a - b) < 1e-11
        for mu in range(2):
            a = two_steps.A.component(mu).values
            b = one_step.A.component(mu).values
            assert fl.max_norm(a - b) < 1e-11

    def test_transformed_fields_keep_membership(self):
        # conjugation by unitary V preserves su(2) exactly; the potential
        # picks up only the O(h^2) defect of the discrete dV term
        kind = sy.SystemKind.NEUTRINO3
        defects = []
        for n in (16, 32):
            cfg = make_config(kind, n=n)
            V = ga.random_gauge(cfg.lattice, RNG_SEED, group="SU2", cutoff=1)
            out = ga.apply_gauge(cfg, V, kind)
            out.Nminus.require_algebra("su2", tol=1e-12)
            a = out.A.component(1).values
            anti = 0.5 * (a + K.dagger(a))
            trace_part = 0.5 * np.abs(K.trace(a))
            defects.append(max(fl.max_norm(anti), float(np.max(trace_part))))
        assert 3.0 < defects[0] / defects[1] < 5.0

    def test_constant_v_keeps_membership_exactly(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = make_config(kind)
        V = constant_gauge(cfg.lattice)
        out = ga.apply_gauge(cfg, V, kind)
        out.Nminus.require_algebra("su2", tol=1e-12)
        out.A.validate(tol=1e-12)


class TestFieldStrengthCovariance:
    def test_constant_v_exact(self):
        lat = lat2(12)
        A = fl.random_gauge_potential(lat, RNG_SEED, amp=0.4)
        V = constant_gauge(lat)
        v = V.V.values
        cfg = sy.FieldConfig(params=base_params(), A=A)
        out = ga.apply_gauge(cfg, V, sy.SystemKind.NEUTRINO2)
        F0 = fl.field_strength(A)
        F1 = fl.field_strength(out.A)
        expect = K.mul(K.dagger(v), K.mul(F0[0, 1], v))
        assert fl.max_norm(F1[0, 1] - expect) < 1e-12

    def test_smooth_v_second_order(self):
        devs = []
        for n in (16, 32):
            lat = lat2(n)
            A = fl.random_gauge_potential(lat, RNG_SEED, cutoff=1, amp=0.4)
            V = ga.random_gauge(lat, RNG_SEED + 3, cutoff=1, amp=0.5)
            v = V.V.values
            cfg = sy.FieldConfig(params=base_params(), A=A)
            out = ga.apply_gauge(cfg, V, sy.SystemKind.NEUTRINO2)
            F1 = fl.field_strength(out.A)
            expect = K.mul(K.dagger(v), K.mul(fl.field_strength(A)[0, 1], v))
            devs.append(fl.max_norm(F1[0, 1] - expect))
        assert 3.0 < devs[0] / devs[1] < 5.0


class TestCovarianceCheck:
    @pytest.mark.parametrize("kind", list(sy.SystemKind))
    def test_constant_v_every_kind(self, kind):
        cfg = make_config(kind, n=8)
        V = constant_gauge(cfg.lattice, group=ga.default_group(kind))
        out = ga.covariance_check(kind, cfg, V)
        assert out["deviation"] <= 1e-11, out["per_equation"]

    def test_identity_gauge_zero_deviation(self):
        kind = sy.SystemKind.NEUTRINO2
        cfg = make_config(kind, n=8)
        V = ga.GaugeField(const_field(cfg.lattice, alg.E, "V"), "SU2")
        out = ga.covariance_check(kind, cfg, V)
        assert out["deviation"] == 0.0

    def test_constant_v_preserves_spinor_residual_norm(self):
        kind = sy.SystemKind.ELECTRON3
        cfg = make_config(kind, n=8)
        V = constant_gauge(cfg.lattice, group="U2")
        b0 = sy.assemble(kind, cfg)
        b1 = sy.assemble(kind, ga.apply_gauge(cfg, V, kind))
        for name in ("phi", "theta"):
            n0 = fl.max_norm(b0.equations[name])
            n1 = fl.max_norm(b1.equations[name])
            assert abs(n0 - n1) < 1e-11

    @pytest.mark.parametrize(
        "kind", [sy.SystemKind.NEUTRINO3, sy.SystemKind.ELECTRON3, sy.SystemKind.YM_SCALAR]
    )
    def test_smooth_v_second_order(self, kind):
        devs = []
        for n in (16, 32):
            cfg = make_config(kind, n=n)
            V = ga.random_gauge(
                cfg.lattice, RNG_SEED + 11, group=ga.default_group(kind), cutoff=1, amp=0.1
            )
            devs.append(ga.covariance_check(kind, cfg, V)["deviation"])
        assert 3.0 < devs[0] / devs[1] < 5.0

    def test_report_shape(self):
        kind = sy.SystemKind.NEUTRINO2
        cfg = make_config(kind, n=8)
        out = ga.covariance_check(kind, cfg, constant_gauge(cfg.lattice))
        assert set(out) == {"deviation", "norms", "per_equation"}
        assert len(out["norms"]) == 2
