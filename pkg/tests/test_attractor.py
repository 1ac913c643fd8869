import json

import numpy as np
import pytest

from sosattractor import conic
from sosattractor.attractor import (Certificate, DynamicalSystem, SolveParams, build_continuous,
                                    hardening_margins, violation_bounds,
                                    build_discrete, certificate_from_dict,
                                    constraint_polynomials, intersect_members, load_certificate, member,
                                    member_interior_variant, save_certificate, solve_attractor)
from sosattractor.polycore import basis, parse_polynomial
from sosattractor.semialg import SemialgebraicSet, sample
from sosattractor.sosprog import to_conic
from sosattractor.verify import attractor_samples


def P(text):
    return parse_polynomial(text, 2)


def hand_cert(system, X, J="x1^2 + x2^2", eps=0.0, v="0", w="1", params=None):
    params = params or SolveParams.continuous(2, 0.5)
    return Certificate(system, X, params, P(w), P(J), P(v), eps, 0.0, "optimal")


class TestBuild:
    def test_vdp_k12_sizes(self, vdp_system, annulus):
        ap = build_continuous(vdp_system, annulus, SolveParams.continuous(12, 0.2))
        prog = ap.program
        assert [len(v.monomials) for v in prog.poly_vars] == [91, 91, 91]
        assert len(prog.scalar_vars) == 1
        assert len(prog.constraints) == 5
        assert all(len(c.blocks) == 4 for c in prog.constraints)

    def test_hand_solution_feasible_pointwise(self, contraction, unit_disk):
        build_continuous(contraction, unit_disk, SolveParams.continuous(2, 0.5))
        cert = hand_cert(contraction, unit_disk)
        pts = sample(unit_disk, 2000, 0)
        for name, p in constraint_polynomials(cert).items():
            assert np.min(p(pts)) >= 0, name

    def test_kind_checks(self, henon_system, vdp_system, annulus):
        X = SemialgebraicSet.box([0, 0], [1, 1], np.sqrt(2))
        with pytest.raises(ValueError):
            build_continuous(henon_system, X, SolveParams.continuous(4))
        with pytest.raises(ValueError):
            build_discrete(vdp_system, annulus, SolveParams.discrete(4))
        with pytest.raises(ValueError):
            build_continuous(vdp_system, annulus, SolveParams.discrete(4))

    def test_henon_composition_degree(self, henon_system):
        X = SemialgebraicSet.box([0, 0], [1, 1], np.sqrt(2))
        ap = build_discrete(henon_system, X, SolveParams.discrete(6), rescale=False)
        lyap = ap.program.constraints[3]
        assert lyap.expr.degree == 12 and lyap.budget == 12

    def test_identity_map_constraint(self):
        ident = DynamicalSystem.parse("discrete", ["x1", "x2"])
        cert = Certificate(ident, SemialgebraicSet.ball(2, 1.0), SolveParams.discrete(2, 0.1, 0.5),
                           P("0"), P("x1^2"), P("x2"), 0.4, 0.0, "optimal")
        # (1 - gamma) eps - J o f + gamma J - v = 0.5 eps - 0.5 J - v
        assert constraint_polynomials(cert)["lyapunov"] == P("0.2 - 0.5*x1^2 - x2")

    @pytest.mark.parametrize("kw", [{"gamma": 1.0}, {"alpha": 0.0}, {"gamma": -0.1}])
    def test_discrete_param_range(self, kw):
        with pytest.raises(ValueError):
            SolveParams.discrete(4, **kw)

    def test_degree_cap(self, henon_system):
        X = SemialgebraicSet.box([0, 0], [1, 1], np.sqrt(2))
        with pytest.raises(ValueError, match="cap"):
            build_discrete(henon_system, X, SolveParams.discrete(22))


class TestSolve:
    def test_contraction(self, contraction, unit_disk):
        cert = solve_attractor(contraction, unit_disk, SolveParams.continuous(4, 0.5))
        assert cert.status == "optimal"
        assert cert.epsilon >= 0
        assert member(cert, [0.0, 0.0])
        assert cert.d_k >= -1e-6

    def test_hardening(self, vdp_system, annulus):
        params = SolveParams.continuous(6, 0.1)
        raw = solve_attractor(vdp_system, annulus, params, harden=False)
        hard = solve_attractor(vdp_system, annulus, params)
        m = hard.info["margins"]
        assert raw.d_k == hard.info["solver_objective"]
        assert hard.d_k == pytest.approx(raw.d_k + (m["w"] + m["eps"]) * annulus.volume(), rel=1e-12)
        assert hard.recomputed_objective() == pytest.approx(hard.d_k, rel=1e-9)
        assert hard.epsilon == pytest.approx(raw.epsilon + m["eps"], abs=1e-15)
        pts = sample(annulus, 50_000, 0)
        for name, p in constraint_polynomials(hard).items():
            assert p(pts).min() >= -1e-12, name
        assert np.all(member(hard, pts) >= member(raw, pts))

    def test_margin_formulas(self):
        eta = dict(zip(("w+J-v-1", "w", "J", "lyapunov", "discount"), (1.0, 0.5, 2.0, 3.0, 4.0)))
        c = hardening_margins("continuous", SolveParams.continuous(4, 0.5), eta)
        assert c == {"v": 8.0, "J": 2.0, "eps": 13.0, "w": 9.0}
        d = hardening_margins("discrete", SolveParams.discrete(4, alpha=0.5, gamma=0.5), eta)
        assert d == {"v": 8.0, "J": 2.0, "eps": 2.0 + 11.0 / 0.5, "w": 9.0}
        zero = hardening_margins("continuous", SolveParams.continuous(4), dict.fromkeys(eta, 0.0))
        assert set(zero.values()) == {0.0}

    def test_violation_bounds_exact_data(self, contraction, unit_disk):
        ap = build_continuous(contraction, unit_disk, SolveParams.continuous(2, 0.5))
        prob = to_conic(ap.program)
        # only w = 1 and sigma_0 = 1 in the first constraint: the identity w + J - v - 1 = 0 holds exactly
        x = np.zeros(prob.n)
        x[prob.symbol_columns[0]] = 1.0
        eta = violation_bounds(ap, prob, x)
        assert eta["w+J-v-1"] == 0.0 and eta["J"] == 0.0
        assert eta["w"] == pytest.approx(1.0)

    def test_vdp_containment_every_level(self, vdp_certs, vdp_system, annulus):
        A = attractor_samples(vdp_system, annulus, 200, 30.0, 2000, seed=2)
        for k, cert in vdp_certs.items():
            assert np.all(member(cert, A)), k

    def test_iteration_limit_raises(self, contraction, unit_disk):
        with pytest.raises(conic.SolverError) as err:
            solve_attractor(contraction, unit_disk, SolveParams.continuous(4, 0.5),
                            conic.SolverSettings(max_iterations=2))
        assert err.value.status == "iteration_limit"

    def test_vdp_k8(self, vdp_certs, vdp_system, annulus):
        cert = vdp_certs[8]
        assert cert.status == "optimal"
        A = attractor_samples(vdp_system, annulus, 200, 30.0, 2000, seed=1)
        assert np.all(member(cert, A))

    def test_recomputed_objective(self, vdp_certs):
        for cert in vdp_certs.values():
            assert cert.recomputed_objective() == pytest.approx(cert.d_k, rel=1e-6, abs=1e-6)

    def test_hierarchy_monotone(self, vdp_certs):
        d = [vdp_certs[k].d_k for k in (4, 6, 8)]
        assert d[0] >= d[1] * (1 - 1e-5) and d[1] >= d[2] * (1 - 1e-5)

    def test_rescaling_does_not_change_optimum(self, vdp_system, annulus):
        a = solve_attractor(vdp_system, annulus, SolveParams.continuous(4, 0.2), rescale=True)
        b = solve_attractor(vdp_system, annulus, SolveParams.continuous(4, 0.2), rescale=False)
        assert a.d_k == pytest.approx(b.d_k, rel=1e-3)


class TestMember:
    @pytest.fixture
    def cert(self, contraction):
        X = SemialgebraicSet.box([-1, -1], [1, 1], np.sqrt(2))
        return hand_cert(contraction, X, eps=0.25, v="1")

    def test_examples(self, cert):
        assert member(cert, [0, 0])
        assert not member(cert, [1, 1])
        assert member(cert, [0.5, 0])

    def test_batch_and_dimension(self, cert):
        np.testing.assert_array_equal(member(cert, np.array([[0, 0], [1, 1]])), [True, False])
        with pytest.raises(ValueError):
            member(cert, [0, 0, 0])

    def test_interior_variant(self, cert):
        assert member_interior_variant(cert, [0.4, 0])
        assert not member_interior_variant(cert, [2, 2])
        pts = sample(cert.X, 500, 0)
        np.testing.assert_array_equal(member_interior_variant(cert, pts), member(cert, pts))

    def test_scale(self, cert):
        assert not member(cert, [0.6, 0])
        assert member(cert, [0.6, 0], epsilon_scale=2.0)

    def test_intersection(self, cert, contraction):
        empty = hand_cert(contraction, cert.X, eps=0.25, v="-1")
        assert intersect_members([cert], [0.1, 0]) == member(cert, [0.1, 0])
        assert not intersect_members([cert, empty], [0.1, 0])
        other = hand_cert(contraction, SemialgebraicSet.ball(2, 2.0), eps=0.25)
        with pytest.raises(ValueError):
            intersect_members([cert, other], [0, 0])

    def test_beta_intersection_subset(self, vdp_system, annulus, vdp_certs):
        c2 = solve_attractor(vdp_system, annulus, SolveParams.continuous(8, 0.1))
        c1 = vdp_certs[8]
        pts = sample(annulus, 20_000, 4)
        both = intersect_members([c1, c2], pts)
        assert np.all(both <= member(c1, pts)) and np.all(both <= member(c2, pts))


def test_serialization_roundtrip(vdp_certs, tmp_path):
    cert = vdp_certs[6]
    path = tmp_path / "c.json"
    save_certificate(cert, path)
    back = load_certificate(path)
    assert back.J == cert.J and back.v == cert.v and back.w == cert.w
    assert back.epsilon == cert.epsilon and back.params == cert.params and back.X == cert.X
    pts = sample(cert.X, 1000, 0)
    np.testing.assert_array_equal(member(back, pts), member(cert, pts))
    d = json.loads(path.read_text())
    assert d["monomial_order"] == "grlex" and len(d["J"]) == len(basis(2, d["basis_degree"]))
    with pytest.raises(ValueError):
        certificate_from_dict({**d, "format": "other"})
