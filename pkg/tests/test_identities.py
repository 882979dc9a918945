"""Identity checks: conservation, current law, YM divergence, jdot, consistency."""

import dataclasses

import numpy as np
import pytest

from matlat import algebra as alg
from matlat import fields as fl
from matlat import identities as idn
from matlat import kernels as K
from matlat import systems as sy
from matlat.errors import ConstraintViolationError

from test_systems import const_field, lat2, spinor_field

RNG_SEED = 61409


def u2_field(lat, seed, amp=0.6, label="N"):
    vals = 1j * alg.SIGMA1 + fl.smooth_random_values(
        lat.shape, lat.lengths, seed, algebra="u2", cutoff=2, amp=amp
    )
    return fl.MatrixField(lat, vals, label)


KG_M0 = 4.0


def kg_wave_field(lat, scale=0.8):
    # two mass-shell modes (omega^2 - k^2 = m0^2 = 16) on distinct Pauli
    # directions; a single shared phase would make the commutator current
    # constant and the check trivially exact
    t, x = lat.grids()
    c1 = np.cos(4.0 * t + 0.3)[..., None, None]
    c2 = np.cos(5.0 * t - 3.0 * x + 0.7)[..., None, None]
    vals = scale * (c1 * (1j * alg.SIGMA1) + c2 * (1j * alg.SIGMA2))
    return fl.MatrixField(lat, vals, "Nminus")


class TestOrderFit:
    def test_quadratic_data_fits_two(self):
        h = [0.4, 0.2, 0.1]
        dev = [0.3 * x * x for x in h]
        assert abs(idn.fit_order(h, dev) - 2.0) < 1e-12

    def test_roundoff_data_gives_none(self):
        assert idn.fit_order([0.2, 0.1], [1e-16, 1e-16]) is None

    def test_report_serialization(self, tmp_path):
        lat = lat2(32)
        A = fl.random_gauge_potential(lat, RNG_SEED, algebra="su2", amp=0.4)
        report = idn.check_ym_divergence(A)
        blob = report.to_json()
        assert blob["name"] == "ym_divergence"
        assert len(blob["deviations"]) == 3
        assert blob["resolutions"][0] == [32, 32]
        assert isinstance(blob["passed"], bool)
        path = tmp_path / "dev.csv"
        report.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "level,shape,deviation"
        assert len(lines) == 4
        assert lines[1].startswith("0,32x32,")


class TestRestriction:
    def test_restriction_matches_coarse_generation(self):
        fine = fl.smooth_random_field(lat2(32), RNG_SEED, algebra="su2")
        coarse = fl.smooth_random_field(lat2(16), RNG_SEED, algebra="su2")
        got = idn.restrict_field(fine, 2)
        assert got.lattice == coarse.lattice
        assert fl.max_norm(got.values - coarse.values) < 1e-12

    def test_indivisible_extent_rejected(self):
        lat = fl.Lattice(shape=(9, 9), spacing=(0.1, 0.1))
        f = const_field(lat, alg.E)
        with pytest.raises(ValueError):
            idn.restrict_field(f, 2)

    def test_too_many_levels_rejected(self):
        A = fl.GaugePotential.zero(lat2(16))
        with pytest.raises(ValueError):
            idn.check_ym_divergence(A, levels=3)

    def test_config_restriction_slices_lambda_arrays(self):
        lat = lat2(32)
        phi = spinor_field(lat, RNG_SEED, "phi")
        d = np.abs(K.det(phi.values))
        p = sy.closure(0.12, 1.0, 1.3, det_phi_abs=d)
        cfg = sy.FieldConfig(params=p, phi=phi)
        small = idn.restrict_config(cfg, 2)
        assert np.asarray(small.params.lam1).shape == (16, 16)
        np.testing.assert_array_equal(small.params.lam1, np.asarray(p.lam1)[::2, ::2])
        np.testing.assert_array_equal(small.phi.values, phi.values[::2, ::2])


class TestConservationFree:
    def test_zero_field(self):
        lat = lat2(32)
        zero = fl.MatrixField(lat, np.zeros(lat.shape + (2, 2), dtype=np.complex128), "phi")
        N = const_field(lat, 1j * alg.SIGMA1, "N")
        report = idn.check_conservation_free("left", zero, N, m=1.0)
        assert report.passed and not report.inconclusive
        assert max(report.deviations) == 0.0

    @pytest.mark.parametrize("chirality", ["left", "right"])
    def test_plane_wave_current_is_conserved(self, chirality):
        lat = sy.plane_wave_lattice(32, m=1.0, k_mode=2)
        S, N, _, _ = sy.plane_wave_solution(lat, m=1.0, k_mode=2, chirality=chirality)
        report = idn.check_conservation_free(chirality, S, N, m=1.0)
        assert not report.inconclusive
        # the bilinear current of a single traveling wave is constant, so its
        # divergence sits at roundoff on every level
        assert report.deviations[0] <= 1e-11
        assert report.passed
        assert report.details["residual_norm"] < 0.2

    def test_random_field_is_inconclusive(self):
        lat = lat2(32)
        S = spinor_field(lat, RNG_SEED + 3, "phi")
        N = const_field(lat, 1j * alg.SIGMA1, "N")
        report = idn.check_conservation_free("left", S, N, m=1.0)
        assert report.inconclusive and not report.passed
        assert report.details["residual_norm"] > 0.2

    def test_bad_chirality_rejected(self):
        lat = lat2(32)
        N = const_field(lat, 1j * alg.SIGMA1, "N")
        with pytest.raises(ValueError):
            idn.check_conservation_free("up", N, N, m=1.0)


class TestCurrentConsequence:
    def test_constant_massless_exact(self):
        lat = lat2(32)
        S = const_field(lat, 1.6 * alg.E + 0.3 * alg.SIGMA1, "phi")
        N = const_field(lat, 1j * alg.SIGMA2, "N")
        report = idn.check_current_consequence(S, None, N, m=0.0, lam=1.0, chirality="left")
        assert report.passed
        assert max(report.deviations) < 1e-14

    def test_plane_wave_sides_cancel(self):
        lat = sy.plane_wave_lattice(32, m=1.0, k_mode=2)
        S, N, _, _ = sy.plane_wave_solution(lat, m=1.0, k_mode=2)
        report = idn.check_current_consequence(S, None, N, m=1.0, lam=1.0, chirality="left")
        assert report.passed
        assert report.deviations[0] <= 1e-11

    def test_random_smooth_left_order(self):
        lat = lat2(64)
        S = spinor_field(lat, RNG_SEED + 11, "phi")
        A = fl.random_gauge_potential(lat, RNG_SEED + 12, algebra="su2", amp=0.3)
        N = u2_field(lat, RNG_SEED + 13)
        report = idn.check_current_consequence(
            S, A, N, m=1.0, lam=0.8 + 0.6j, chirality="left"
        )
        assert report.deviations[0] > 1e-9  # genuinely the order branch
        assert 1.8 <= report.order <= 2.3
        assert report.passed

    def test_random_smooth_right_order_with_closure_lambda(self):
        lat = lat2(64)
        S = spinor_field(lat, RNG_SEED + 21, "theta")
        A = fl.random_gauge_potential(lat, RNG_SEED + 22, algebra="u2", amp=0.3)
        N = u2_field(lat, RNG_SEED + 23)
        eps = 0.12
        d = np.abs(K.det(S.values))
        p = sy.closure(eps, 1.0, 1.3, det_phi_abs=d, det_theta_abs=d)
        # right-handed factor carries the opposite imaginary part: eps2|det| = -eps
        assert np.max(np.abs(np.imag(p.lam2) * d + eps)) < 1e-12
        report = idn.check_current_consequence(
            S, A, N, m=1.0, lam=p.lam2, chirality="right"
        )
        assert 1.8 <= report.order <= 2.3
        assert report.passed

    def test_epsilon1_constant_over_lattice(self):
        lat = lat2(32)
        S = spinor_field(lat, RNG_SEED + 31, "phi")
        d = np.abs(K.det(S.values))
        p = sy.closure(0.12, 1.0, 1.3, det_phi_abs=d)
        assert np.max(np.abs(np.imag(p.lam1) * d - 0.12)) < 1e-12


class TestYMDivergence:
    def test_zero_potential(self):
        report = idn.check_ym_divergence(fl.GaugePotential.zero(lat2(32)))
        assert report.passed
        assert max(report.deviations) == 0.0

    def test_constant_potential_exact(self):
        lat = lat2(32)
        comps = (
            const_field(lat, 0.7j * alg.SIGMA1 + 0.2j * alg.SIGMA3, "A0"),
            const_field(lat, 0.5j * alg.SIGMA2, "A1"),
        )
        A = fl.GaugePotential(components=comps, algebra="su2")
        report = idn.check_ym_divergence(A)
        assert report.passed
        assert max(report.deviations) < 1e-12

    @pytest.mark.parametrize("algebra", ["su2", "u2"])
    def test_random_smooth_order(self, algebra):
        # the nested-commutator defect needs finer grids to go asymptotic
        lat = lat2(128)
        A = fl.random_gauge_potential(lat, RNG_SEED + 41, algebra=algebra, amp=0.4)
        report = idn.check_ym_divergence(A)
        assert report.deviations[0] > 1e-9
        assert 1.8 <= report.order <= 2.3
        assert report.passed


class TestJdot:
    def test_constant_field_exact(self):
        lat = lat2(32)
        Nminus = const_field(lat, 0.7j * alg.SIGMA1, "Nminus")
        report = idn.check_jdot(Nminus, None, beta=0.15, m0=1.3)
        assert report.passed
        assert max(report.deviations) < 1e-14

    def test_beta_zero_identically(self):
        lat = lat2(32)
        Nminus = fl.smooth_random_field(lat, RNG_SEED + 51, algebra="su2", label="Nminus")
        A = fl.random_gauge_potential(lat, RNG_SEED + 52, algebra="su2", amp=0.3)
        report = idn.check_jdot(Nminus, A, beta=0.0, m0=1.3)
        assert report.passed
        assert max(report.deviations) == 0.0

    def test_kg_wave_order(self):
        lat = lat2(256)
        Nminus = kg_wave_field(lat)
        report = idn.check_jdot(Nminus, None, beta=0.3, m0=KG_M0)
        assert 1.8 <= report.order <= 2.3
        assert report.passed

    def test_arbitrary_fields_order(self):
        lat = lat2(128)
        Nminus = fl.smooth_random_field(
            lat, RNG_SEED + 53, algebra="su2", amp=0.6, label="Nminus"
        )
        A = fl.random_gauge_potential(lat, RNG_SEED + 54, algebra="su2", amp=0.3)
        report = idn.check_jdot(Nminus, A, beta=0.3, m0=1.3)
        assert report.deviations[0] > 1e-9
        assert 1.8 <= report.order <= 2.3
        assert report.passed


def bounded_nminus(lat, seed, label="Nminus"):
    # n1^2 + n2^2 stays >= 1.1 so the central branch n0 = sqrt(nsq - 1)
    # remains real and smooth
    g = fl.band_limited_scalars(lat.shape, lat.lengths, seed, channels=2, cutoff=2)
    g = [c / np.max(np.abs(c)) for c in g]
    f1 = 1.3 + 0.25 * g[0]
    f2 = 0.4 * g[1]
    vals = f1[..., None, None] * (1j * alg.SIGMA1) + f2[..., None, None] * (1j * alg.SIGMA2)
    return fl.MatrixField(lat, vals, label)


def consistency_config(kind, n=64, seed=RNG_SEED, eps=0.12):
    info = sy.KIND_INFO[kind]
    lat = lat2(n)
    phi = spinor_field(lat, seed + 61, "phi")
    theta = spinor_field(lat, seed + 62, "theta")
    params = sy.closure(
        eps,
        1.0,
        1.3,
        det_phi_abs=np.abs(K.det(phi.values)),
        det_theta_abs=np.abs(K.det(theta.values)),
        beta=0.15,
    )
    A = fl.random_gauge_potential(lat, seed + 63, algebra=info.gauge_algebra, amp=0.3)
    return sy.FieldConfig(
        params=params,
        phi=phi,
        theta=theta if kind is sy.SystemKind.ELECTRON3 else None,
        Nminus=bounded_nminus(lat, seed + 64),
        A=A,
    )


class TestConsistencyCondition:
    @pytest.mark.parametrize("kind", [sy.SystemKind.NEUTRINO3, sy.SystemKind.ELECTRON3])
    def test_closure_order(self, kind):
        cfg = consistency_config(kind)
        report = idn.check_consistency_condition(kind, cfg)
        assert report.deviations[0] > 1e-9
        assert 1.8 <= report.order <= 2.3
        assert report.passed

    def test_alpha_perturbation_detected(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = consistency_config(kind)
        p = cfg.params
        broken = cfg.with_(params=dataclasses.replace(p, alpha=p.alpha + 0.1))
        report = idn.check_consistency_condition(kind, broken)
        floor = 0.09 * p.m0**2 * np.min(alg.frobenius(cfg.Nminus.values))
        assert report.deviations[0] >= floor
        assert not report.passed

    def test_zero_nminus_trivial(self):
        lat = lat2(16)
        phi = const_field(lat, 1.6 * alg.E + 0.3 * alg.SIGMA1, "phi")
        params = sy.closure(0.12, 1.0, 1.3, det_phi_abs=np.abs(K.det(phi.values)))
        cfg = sy.FieldConfig(
            params=params,
            phi=phi,
            N=const_field(lat, 1j * alg.E, "N"),  # central: no traceless part
            Nminus=fl.MatrixField(lat, np.zeros(lat.shape + (2, 2), dtype=np.complex128), "Nminus"),
            A=fl.GaugePotential.zero(lat),
        )
        report = idn.check_consistency_condition(sy.SystemKind.NEUTRINO3, cfg, levels=2)
        assert report.passed
        assert max(report.deviations) < 1e-12

    def test_wrong_kind_rejected(self):
        cfg = consistency_config(sy.SystemKind.NEUTRINO3)
        with pytest.raises(ValueError):
            idn.check_consistency_condition(sy.SystemKind.YM_SCALAR, cfg)

    def test_supplied_lambda_rejected(self):
        cfg = consistency_config(sy.SystemKind.NEUTRINO3)
        supplied = dataclasses.replace(
            cfg.params, lam1=0.8 + 0.6j, lam2=0.8 - 0.6j, lam_mode="supplied"
        )
        with pytest.raises(ValueError):
            idn.check_consistency_condition(sy.SystemKind.NEUTRINO3, cfg.with_(params=supplied))

    def test_small_det_propagates(self):
        # lambda left to in-place closure; a det dipping under epsilon must raise
        kind = sy.SystemKind.NEUTRINO3
        cfg = consistency_config(kind)
        starved = dataclasses.replace(
            cfg.params, lam1=None, lam2=None, lam_mode="supplied"
        )
        shrunk = fl.MatrixField(cfg.phi.lattice, 0.05 * cfg.phi.values, "phi")
        with pytest.raises(ConstraintViolationError):
            idn.check_consistency_condition(kind, cfg.with_(params=starved, phi=shrunk))

    def test_in_place_closure_matches_array_params(self):
        kind = sy.SystemKind.NEUTRINO3
        cfg = consistency_config(kind)
        inplace = dataclasses.replace(cfg.params, lam1=None, lam2=None)
        a = idn.check_consistency_condition(kind, cfg)
        b = idn.check_consistency_condition(kind, cfg.with_(params=inplace))
        np.testing.assert_allclose(a.deviations, b.deviations, rtol=0, atol=1e-13)
