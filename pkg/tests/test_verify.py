import numpy as np
import pytest

from sosattractor.attractor import Certificate, SolveParams
from sosattractor.polycore import PolynomialMap, parse_polynomial
from sosattractor.semialg import SemialgebraicSet, moments
from sosattractor.verify import (DivergenceError, EmptySampleError, attractor_samples, check_interior,
                                 check_invariance, check_residuals, estimate_volume, iterate_map, simulate_ode,
                                 verify_certificate)


def P(text):
    return parse_polynomial(text, 2)


def hand_cert(system, X, J="x1^2 + x2^2", eps=0.0, v="0", w="1"):
    return Certificate(system, X, SolveParams.continuous(2, 0.5), P(w), P(J), P(v), eps, 0.0, "optimal")


def decay_error(h):
    f = PolynomialMap.parse(["-x1"], 1)
    return abs(simulate_ode(f, [1.0], 1.0, h).final[0] - np.exp(-1.0))


class TestSimulate:
    def test_exponential(self):
        assert decay_error(0.01) < 1e-9

    def test_order(self):
        assert decay_error(0.02) / decay_error(0.01) >= 12

    def test_zero_field(self):
        traj = simulate_ode(PolynomialMap.parse(["0", "0"], 2), [0.3, -1.0], 1.0, 0.1)
        assert np.all(traj.states == [0.3, -1.0])

    def test_harmonic_period(self):
        traj = simulate_ode(PolynomialMap.parse(["x2", "-x1"], 2), [1.0, 0.0], 2 * np.pi, 0.001)
        assert np.linalg.norm(traj.final - [1.0, 0.0]) < 1e-7
        assert traj.times[-1] == pytest.approx(2 * np.pi, abs=1e-12)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            simulate_ode(PolynomialMap.parse(["x1^2"], 1), [1.0], 2.0, 0.01)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            simulate_ode(PolynomialMap.parse(["x1"], 1), [1.0], 1.0, 0.0)


class TestIterate:
    def test_henon_step(self, henon_system):
        traj = iterate_map(henon_system.f, [0.0, 0.0], 1)
        np.testing.assert_allclose(traj.final, [2 / 3, 0.0], atol=1e-15)

    def test_identity(self):
        traj = iterate_map(PolynomialMap.parse(["x1", "x2"], 2), [0.2, 0.7], 5)
        assert np.all(traj.states == [0.2, 0.7])

    def test_zero_steps(self):
        traj = iterate_map(PolynomialMap.parse(["x1", "x2"], 2), [0.2, 0.7], 0)
        assert traj.states.shape == (1, 2)


class TestAttractorSamples:
    def test_vdp_inside_annulus(self, vdp_system, annulus):
        A = attractor_samples(vdp_system, annulus, 100, 30.0, 2000, seed=0)
        r = np.linalg.norm(A, axis=1)
        assert len(A) == 2000 and np.all((r >= 0.4) & (r <= 2))

    def test_contraction_collapses(self, contraction, unit_disk):
        A = attractor_samples(contraction, unit_disk, 50, 20.0, 100, seed=0)
        assert np.max(np.abs(A)) < 1e-6

    def test_deterministic(self, vdp_system, annulus):
        a = attractor_samples(vdp_system, annulus, 20, 5.0, 300, seed=3)
        b = attractor_samples(vdp_system, annulus, 20, 5.0, 300, seed=3)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.xfail(raises=EmptySampleError, strict=True,
                       reason="every Henon orbit leaves [0,1]^2 within a few dozen steps")
    def test_henon_unit_box(self, henon_system):
        X = SemialgebraicSet.box([0, 0], [1, 1], np.sqrt(2))
        A = attractor_samples(henon_system, X, 1000, 1000, 10_000, seed=0)
        assert len(A) > 0

    def test_henon_symmetric_box(self, henon_system, square):
        A = attractor_samples(henon_system, square, 1000, 1000, 10_000, seed=0)
        assert len(A) == 10_000 and np.all(np.abs(A) <= 1)


class TestResiduals:
    def test_hand_certificate(self, contraction, unit_disk):
        res = check_residuals(hand_cert(contraction, unit_disk), n_samples=20_000)
        assert len(res.minima) == 5 and all(m >= 0 for m in res.minima.values()) and res.ok

    def test_w_zero_flagged(self, contraction, unit_disk):
        res = check_residuals(hand_cert(contraction, unit_disk, w="0"), n_samples=20_000)
        assert "w+J-v-1" in res.flagged

    def test_monotone_refinement(self, vdp_certs):
        pts = np.random.default_rng(0).uniform(-2, 2, (40_000, 2))
        pts = pts[vdp_certs[6].X.inequalities[0](pts) >= 0]
        small = check_residuals(vdp_certs[6], points=pts[:1000]).minima
        big = check_residuals(vdp_certs[6], points=pts).minima
        assert all(big[k] <= small[k] for k in small)


class TestInvariance:
    def test_hand_certificate(self, contraction, unit_disk):
        inv = check_invariance(hand_cert(contraction, unit_disk), n_points=500, horizon=20.0)
        assert inv.violations == 0

    def test_vdp(self, vdp_certs):
        assert check_invariance(vdp_certs[8], n_points=500, horizon=20.0).violations == 0

    def test_shrunken_epsilon_negative_control(self, vdp_certs):
        assert check_invariance(vdp_certs[8], n_points=500, horizon=20.0, epsilon_scale=0.01).violations > 0

    def test_map(self, henon_system, square):
        cert = Certificate(henon_system, square, SolveParams.discrete(2), P("1"), P("x1^2 + x2^2"), P("0"),
                           4.0, 0.0, "optimal")
        inv = check_invariance(cert, n_points=50, horizon=5)
        assert inv.horizon == 5 and inv.n_points == 50


class TestVolume:
    def test_full_and_empty(self, square):
        vol, se = estimate_volume(None, square, n_mc=5000, predicate=lambda p: np.ones(len(p), bool))
        assert abs(vol - moments(square, 0).volume) <= 3 * se + 1e-12
        assert vol == 4.0
        assert estimate_volume(None, square, n_mc=5000, predicate=lambda p: np.zeros(len(p), bool))[0] == 0

    def test_minimum_samples(self, square):
        with pytest.raises(ValueError):
            estimate_volume(None, square, n_mc=999, predicate=lambda p: np.ones(len(p), bool))

    def test_half(self, square):
        vol, se = estimate_volume(None, square, n_mc=100_000, predicate=lambda p: p[:, 0] > 0)
        assert abs(vol - 2) < 4 * se

    def test_vdp_tightening(self, vdp_certs):
        v6, s6 = estimate_volume(vdp_certs[6], n_mc=100_000)
        v8, s8 = estimate_volume(vdp_certs[8], n_mc=100_000)
        assert v8 <= v6 + 3 * np.hypot(s6, s8)


class TestInterior:
    def test_radial(self, contraction, unit_disk):
        assert check_interior(hand_cert(contraction, unit_disk, eps=0.25), delta=0.02)

    def test_zero_J(self, contraction, unit_disk):
        assert not check_interior(hand_cert(contraction, unit_disk, J="0", eps=0.0))

    def test_large_epsilon(self, contraction, unit_disk):
        assert not check_interior(hand_cert(contraction, unit_disk, eps=5.0))


def test_report(vdp_certs):
    rep = verify_certificate(vdp_certs[8], residual_samples=20_000, attractor_init=50, keep=500,
                             invariance_points=50, volume_samples=20_000)
    assert rep.containment_fraction == 1.0 and rep.invariance_violations == 0
    d = rep.to_dict()
    assert set(d) >= {"residuals", "volume", "volume_stderr", "interior"}
    assert "verification report" in rep.to_text()
