"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed at the end of the run."""

import time

import numpy as np
import pytest

from sosattractor import SemialgebraicSet, SolveParams, solve_attractor
from sosattractor.attractor import Certificate, member
from sosattractor.cli import RunConfig, grid_points, load_config
from sosattractor.polycore import Polynomial, PolynomialMap, basis, parse_polynomial
from sosattractor.semialg import contains, mc_moments, moments
from sosattractor.sosprog import add_putinar_constraint, new_program, reconstruct, set_objective, svec, to_conic
from sosattractor.verify import (attractor_samples, check_invariance, check_residuals, estimate_volume,
                                 simulate_ode)

crit = pytest.mark.criterion


@pytest.fixture(scope="module")
def vdp8(vdp_system, annulus):
    t0 = time.perf_counter()
    cert = solve_attractor(vdp_system, annulus, SolveParams.continuous(8, 0.2))
    return cert, time.perf_counter() - t0


@pytest.fixture(scope="module")
def henon_cert():
    cfg = RunConfig.from_dict(load_config("henon"))
    return cfg, solve_attractor(cfg.system, cfg.set, cfg.params(6), cfg.solver, rescale=cfg.rescale)


@pytest.fixture(scope="module")
def npl_cert(npl_system, square):
    return solve_attractor(npl_system, square, SolveParams.continuous(8, 0.2))


@crit(1, "Van der Pol k=8: optimal, limit cycle in K, grid fraction < 0.95, runtime <= 5 min")
def test_criterion_1(vdp8, vdp_system, annulus):
    t0 = time.perf_counter()
    cert, solve_time = vdp8
    A = attractor_samples(vdp_system, annulus, 200, 30.0, 2000, seed=1, h=0.01)
    pts = grid_points(annulus, 400)
    pts = pts[contains(annulus, pts)]
    frac = np.mean(member(cert, pts))
    elapsed = solve_time + time.perf_counter() - t0
    print(f"status={cert.status} d_k={cert.d_k:.6g} containment={np.mean(member(cert, A))} "
          f"grid fraction={frac:.4f} runtime={elapsed:.1f}s")
    assert cert.status == "optimal"
    assert len(A) == 2000 and np.all(member(cert, A))
    assert frac < 0.95
    assert elapsed <= 300


@crit(2, "Henon on [0,1]^2 k=6: optimal, 1e4 orbit points in K, vol(K) < vol(X) - 3 stderr")
def test_criterion_2(henon_cert):
    cfg, cert = henon_cert
    vol, se = estimate_volume(cert, n_mc=100_000)
    volX = cfg.set.volume()
    failures = []
    if cert.status != "optimal":
        failures.append(f"status {cert.status}")
    if not vol < volX - 3 * se:
        failures.append(f"vol(K)={vol} not below vol(X)-3se")
    try:
        A = attractor_samples(cfg.system, cfg.set, 1000, 1000, 10_000, seed=1)
        if len(A) < 10_000 or not np.all(member(cert, A)):
            failures.append(f"{len(A)} orbit points, containment {np.mean(member(cert, A))}")
    except Exception as exc:
        failures.append(f"orbit sampling: {exc}")
    print(f"status={cert.status} d_k={cert.d_k:.6g} vol(K)={vol:.5g}+-{se:.2g} vol(X)={volX}")
    assert not failures, "; ".join(failures)


def _enters_and_remains(cert, f, x0, scale, T=50.0):
    traj = simulate_ode(f, x0, T, 0.01)
    inside = member(cert, traj.states, epsilon_scale=scale)
    if not inside[-1]:
        return False
    outside = np.flatnonzero(~inside)
    return len(outside) == 0 or outside[-1] < len(inside) - 1


@crit(3, "no-polynomial-Lyapunov system k=8: completes, origin in K, corner trajectories enter and stay")
def test_criterion_3(npl_cert, npl_system):
    cert = npl_cert
    assert cert.status in ("optimal", "near_optimal")
    corners = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    for scale in (1.0, 2.0, 4.0, 8.0):
        ok = member(cert, [0.0, 0.0], epsilon_scale=scale) and all(
            _enters_and_remains(cert, npl_system.f, c, scale) for c in corners)
        if ok:
            break
    print(f"status={cert.status} eps={cert.epsilon:.4g} scale used={scale}")
    assert member(cert, [0.0, 0.0], epsilon_scale=scale)
    assert all(_enters_and_remains(cert, npl_system.f, c, scale) for c in corners)
    inv = check_invariance(cert, n_points=500, horizon=20.0, epsilon_scale=scale)
    assert inv.violations == 0


@crit(4, "Van der Pol hierarchy: d_k and vol(K) nonincreasing for k = 4, 6, 8")
def test_criterion_4(vdp_certs):
    d = [vdp_certs[k].d_k for k in (4, 6, 8)]
    vols = [estimate_volume(vdp_certs[k], n_mc=100_000) for k in (4, 6, 8)]
    print("d_k:", d, "volumes:", vols)
    for a, b in zip(d, d[1:]):
        assert b <= a * (1 + 1e-5)
    for (va, sa), (vb, sb) in zip(vols, vols[1:]):
        assert vb <= va + 3 * np.hypot(sa, sb)


@crit(5, "hand certificate for f = -x on the unit ball: exact residuals, no invariance violations")
def test_criterion_5(contraction, unit_disk):
    one = parse_polynomial("1", 2)
    cert = Certificate(contraction, unit_disk, SolveParams.continuous(2, 0.5), one,
                       parse_polynomial("x1^2 + x2^2", 2), Polynomial(2, {}), 0.0, 0.0, "optimal")
    res = check_residuals(cert, n_samples=100_000)
    assert len(res.minima) == 5 and all(m >= 0 for m in res.minima.values()), res.minima
    assert check_invariance(cert, n_points=500, horizon=20.0).violations == 0


@crit(6, "Van der Pol k=8: 500 points of K stay in {J <= eps} for T = 20")
def test_criterion_6(vdp8):
    inv = check_invariance(vdp8[0], n_points=500, horizon=20.0, h=0.01)
    print(f"violations={inv.violations} worst excess={inv.worst_excess:.3e}")
    assert inv.violations == 0


@crit(7, "closed-form moments agree with 1e6-sample Monte Carlo within 3 stderr, |alpha| <= 8")
def test_criterion_7():
    sets = [SemialgebraicSet.box([-1, -1], [1, 1], np.sqrt(2)), SemialgebraicSet.annulus(2, 0.4, 2.0)]
    for X in sets:
        exact = moments(X, 8)
        mc = mc_moments(X, 8, 1_000_000, seed=0)
        z = np.abs(mc.values - exact.values) / np.maximum(mc.stderr, 1e-300)
        print(f"{X.shape}: max |z| = {z.max():.2f}")
        assert np.all(np.abs(mc.values - exact.values) <= 3 * mc.stderr)


@crit(8, "every optimal certificate satisfies its five constraints on 1e5 samples of X")
def test_criterion_8(vdp_certs, vdp8, henon_cert, npl_cert):
    certs = [c for c in (*vdp_certs.values(), vdp8[0], henon_cert[1], npl_cert) if c.status == "optimal"]
    assert certs
    for cert in certs:
        res = check_residuals(cert, n_samples=100_000)
        for name, m in res.minima.items():
            assert m >= -1e-6 * res.scales[name], (cert.system.f, name, m)


def _gram_cases():
    for side in range(1, 16):
        yield 1, side - 1
    for d in (0, 1, 2, 3, 4):
        yield 2, d


@crit(9, "random PSD Gram matrices reconstruct to polynomials matching the equalities to 1e-12")
def test_criterion_9():
    rng = np.random.default_rng(0)
    for n, d in _gram_cases():
        z = basis(n, d)
        for _ in range(5):
            G = rng.standard_normal((len(z), len(z)))
            Q = G @ G.T
            p = reconstruct(Q, z)
            prog = new_program(n)
            add_putinar_constraint(prog, p, [], 2 * d)
            set_objective(prog, {})
            prob = to_conic(prog)
            r = prob.A @ svec(Q) - prob.b
            assert np.max(np.abs(r), initial=0.0) <= 1e-12, (n, d)


@crit(10, "RK4 endpoint error on x' = -x drops at least 12x from h = 0.02 to h = 0.01")
def test_criterion_10():
    f = PolynomialMap.parse(["-x1"], 1)
    e = [abs(simulate_ode(f, [1.0], 1.0, h).final[0] - np.exp(-1)) for h in (0.02, 0.01)]
    print(f"errors {e}, ratio {e[0] / e[1]:.2f}")
    assert e[0] / e[1] >= 12


def test_henon_symmetric_box(henon_system, square):
    """Same Henon certificate problem on [-1,1]^2, where the attractor does live."""
    cert = solve_attractor(henon_system, square, SolveParams.discrete(6))
    A = attractor_samples(henon_system, square, 1000, 1000, 10_000, seed=1)
    vol, se = estimate_volume(cert, n_mc=100_000)
    assert cert.status == "optimal"
    assert len(A) == 10_000 and np.all(member(cert, A))
    assert vol < 4 - 3 * se
