"""Simulation-based checks of computed outer approximations.

Everything here is independent of the SOS machinery: trajectories come
from a fixed-step RK4 integrator (or plain iteration for maps) and sets
are probed by uniform Monte-Carlo sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .attractor import Certificate, DynamicalSystem, constraint_polynomials, member
from .polycore import PolynomialMap
from .semialg import EmptySetError, SemialgebraicSet, contains, moments, sample

__all__ = [
    "Trajectory",
    "DivergenceError",
    "EmptySampleError",
    "simulate_ode",
    "iterate_map",
    "attractor_samples",
    "check_residuals",
    "check_invariance",
    "estimate_volume",
    "check_interior",
    "sample_in_K",
    "VerificationReport",
    "verify_certificate",
]

BLOWUP = 1e8


class DivergenceError(RuntimeError):
    def __init__(self, time):
        super().__init__(f"state norm exceeded {BLOWUP:g} at t={time}")
        self.time = time


class EmptySampleError(RuntimeError):
    """Every simulated trajectory left X before the transient ended."""


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _rk4_step(f: PolynomialMap, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _nsteps(T: float, h: float) -> tuple[int, float]:
    if h <= 0:
        raise ValueError("step must be positive")
    if T < 0:
        raise ValueError("duration must be nonnegative")
    n = max(int(math.ceil(T / h - 1e-9)), 0)
    return n, (T / n if n else h)


def simulate_ode(f: PolynomialMap, x0, T: float, h: float) -> Trajectory:
    """Classical RK4 with uniform step.

    The number of steps is ``ceil(T/h)`` and the step is shrunk to ``T/n``
    so that the last state is exactly at time T.
    """
    n, h = _nsteps(T, h)
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((n + 1,) + x.shape)
    states[0] = x
    for i in range(1, n + 1):
        x = _rk4_step(f, x, h)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
            raise DivergenceError(i * h)
        states[i] = x
    return Trajectory(np.arange(n + 1) * h, states)


def iterate_map(f: PolynomialMap, x0, N: int) -> Trajectory:
    """Orbit ``x0, f(x0), ..., f^N(x0)``."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((N + 1,) + x.shape)
    states[0] = x
    for i in range(1, N + 1):
        x = f(x)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
            raise DivergenceError(i)
        states[i] = x
    return Trajectory(np.arange(N + 1, dtype=float), states)


class _Stepper:
    """Advance a batch of states, marking rows that leave X or blow up."""

    def __init__(self, system: DynamicalSystem, h: float):
        self.system = system
        self.h = h

    def __call__(self, x):
        if self.system.kind == "continuous":
            return _rk4_step(self.system.f, x, self.h)
        return self.system.f(x)


def attractor_samples(sys: DynamicalSystem, X: SemialgebraicSet, n_init: int, transient, keep: int,
                      seed: int, h: float = 0.01, every: int | None = None) -> np.ndarray:
    """Post-transient states of trajectories that never leave X.

    Parameters
    ----------
    transient : float or int
        Duration (continuous) or number of steps (discrete) to discard.
    keep : int
        Number of samples to return.
    every : int, optional
        Record every `every`-th step after the transient; default 10 for
        ODEs and 1 for maps.

    Raises
    ------
    EmptySampleError
        If no trajectory stays in X through the transient.
    """
    if sys.kind == "continuous":
        nt, h = _nsteps(float(transient), h)
    else:
        nt = int(transient)
    every = every or (10 if sys.kind == "continuous" else 1)
    step = _Stepper(sys, h)
    x = sample(X, n_init, seed)
    alive = np.ones(len(x), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(nt):
            x = np.where(alive[:, None], x, 0.0)
            x = step(x)
            alive &= np.all(np.isfinite(x), axis=1) & contains(X, np.nan_to_num(x))
            if not alive.any():
                break
        if not alive.any():
            raise EmptySampleError(f"all {n_init} trajectories left X during the transient")
        x = x[alive]
        out = []
        got = 0
        rounds = 0
        max_rounds = 100 * every * (keep // max(len(x), 1) + 1)
        while got < keep and len(x) and rounds < max_rounds:
            x = step(x)
            ok = np.all(np.isfinite(x), axis=1) & contains(X, np.nan_to_num(x))
            x = x[ok]
            rounds += 1
            if rounds % every == 0 and len(x):
                out.append(x.copy())
                got += len(x)
    if got == 0:
        raise EmptySampleError("no trajectory stayed in X after the transient")
    return np.concatenate(out)[:keep]


# ---------------------------------------------------------------------------

@dataclass
class ResidualSection:
    minima: dict
    scales: dict
    flagged: list
    n_samples: int

    @property
    def ok(self) -> bool:
        return not self.flagged


def check_residuals(cert: Certificate, X: SemialgebraicSet | None = None, n_samples: int = 100_000,
                    seed: int = 0, points=None) -> ResidualSection:
    """Minimum of each of the five constraint polynomials over samples of X.

    A constraint is flagged when its minimum is below
    ``-1e-6 * (1 + max |coefficient|)``.
    """
    X = X or cert.X
    pts = sample(X, n_samples, seed) if points is None else np.asarray(points, dtype=float)
    minima, scales, flagged = {}, {}, []
    for name, p in constraint_polynomials(cert).items():
        m = float(np.min(p(pts))) if p.terms else 0.0
        s = 1.0 + p.max_abs_coefficient()
        minima[name] = m
        scales[name] = s
        if m < -1e-6 * s:
            flagged.append(name)
    return ResidualSection(minima, scales, flagged, len(pts))


def sample_in_K(cert: Certificate, count: int, seed: int, epsilon_scale: float | None = None,
                max_proposals: int = 2_000_000) -> np.ndarray:
    """Points of K, by rejection from X.

    When K is too thin for plain rejection (e.g. eps = 0), proposals are
    zoomed onto the region of smallest J: repeatedly keep the best tenth of
    a batch and shrink the proposal box to their bounding box.  Samples are
    then uniform on the part of K inside the final box.
    """
    def accept(p):
        return member(cert, p, epsilon_scale)

    try:
        return sample(cert.X, count, seed, max_proposals=max_proposals, accept=accept)
    except EmptySetError:
        pass
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(10 ** 6,)))
    lo, hi = cert.X.bounding_box()
    batch = 20000
    for _ in range(60):
        pts = lo + (hi - lo) * rng.random((batch, cert.nvars))
        pts = pts[contains(cert.X, pts)]
        if not len(pts):
            break
        inside = member(cert, pts, epsilon_scale)
        if inside.mean() > 0.05:
            break
        score = cert.J(pts) - np.where(cert.v(pts) >= 0, 0.0, np.inf)
        best = pts[np.argsort(score)[: max(len(pts) // 10, 2)]]
        pad = 0.05 * (best.max(axis=0) - best.min(axis=0)) + 1e-12
        lo, hi = np.maximum(lo, best.min(axis=0) - pad), np.minimum(hi, best.max(axis=0) + pad)
    out = []
    got = 0
    for _ in range(1000):
        pts = lo + (hi - lo) * rng.random((batch, cert.nvars))
        pts = pts[contains(cert.X, pts)]
        pts = pts[member(cert, pts, epsilon_scale)]
        out.append(pts)
        got += len(pts)
        if got >= count:
            return np.concatenate(out)[:count]
    raise EmptySetError("could not sample points of K")


@dataclass
class InvarianceSection:
    n_points: int
    horizon: float
    violations: int
    worst_excess: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_invariance(cert: Certificate, sys: DynamicalSystem | None = None, n_points: int = 500,
                     horizon: float = 20.0, seed: int = 0, h: float = 0.01,
                     epsilon_scale: float | None = None, points=None) -> InvarianceSection:
    """Simulate points of K and record how far ``J(x(t))`` rises above ``s*eps``.

    A point violates invariance when ``max_t J(x(t)) - s*eps`` exceeds
    ``1e-4 * (1 + eps)``.  For maps, `horizon` is a number of steps.
    """
    sys = sys or cert.system
    s = cert.params.epsilon_scale if epsilon_scale is None else epsilon_scale
    level = s * cert.epsilon
    tol = 1e-4 * (1.0 + cert.epsilon)
    x = sample_in_K(cert, n_points, seed, epsilon_scale) if points is None else np.atleast_2d(np.asarray(points, float))
    worst = cert.J(x) - level
    if sys.kind == "continuous":
        n, h = _nsteps(horizon, h)
    else:
        n = int(horizon)
    step = _Stepper(sys, h)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            x = step(x)
            val = np.where(np.all(np.isfinite(x), axis=1), cert.J(np.nan_to_num(x)), np.inf)
            worst = np.maximum(worst, val - level)
    return InvarianceSection(len(worst), float(horizon), int(np.sum(worst > tol)), float(np.max(worst)), tol)


def estimate_volume(cert: Certificate | None, X: SemialgebraicSet | None = None, n_mc: int = 100_000,
                    seed: int = 0, predicate=None) -> tuple[float, float]:
    """``vol(X) * (fraction of uniform X samples in K)`` with binomial stderr.

    `predicate` replaces membership in K (vectorized, points -> bool).
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    X = X or cert.X
    pred = predicate or (lambda p: member(cert, p))
    pts = sample(X, n_mc, seed)
    frac = float(np.mean(np.asarray(pred(pts), dtype=bool)))
    vol = X.volume()
    if vol is None:
        vol = moments(X, 0, mc_samples=n_mc, seed=seed + 1).volume
    return vol * frac, vol * math.sqrt(frac * (1 - frac) / n_mc)


def check_interior(cert: Certificate, X: SemialgebraicSet | None = None, n_boundary_samples: int = 2000,
                   delta: float | None = None, seed: int = 0, epsilon_scale: float | None = None) -> bool:
    """Heuristic test that ``{J <= s*eps}`` stays away from the boundary of X.

    Samples the shell ``{x in X : min_i g_i(x) <= delta}`` and returns True
    only if ``J > s*eps`` at every sample.  False means "inconclusive".
    """
    X = X or cert.X
    delta = 1e-2 * X.ball_radius if delta is None else delta
    s = cert.params.epsilon_scale if epsilon_scale is None else epsilon_scale

    def shell(p):
        return np.min(np.stack([np.atleast_1d(g(p)) for g in X.inequalities]), axis=0) <= delta

    try:
        pts = sample(X, n_boundary_samples, seed, accept=shell)
    except EmptySetError:
        return False
    return bool(np.all(cert.J(pts) > s * cert.epsilon))


# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    residuals: dict
    residuals_flagged: list
    containment_fraction: float | None
    n_attractor_samples: int
    invariance_violations: int | None
    invariance_worst_excess: float | None
    volume: float
    volume_stderr: float
    volume_X: float
    interior: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_text(self) -> str:
        lines = ["verification report", "==================="]
        lines.append("constraint residual minima over samples of X:")
        for k, v in self.residuals.items():
            mark = "  FLAGGED" if k in self.residuals_flagged else ""
            lines.append(f"  {k:<10s} {v: .3e}{mark}")
        if self.containment_fraction is None:
            lines.append("attractor containment: not available")
        else:
            lines.append(f"attractor containment: {self.containment_fraction:.4f} of {self.n_attractor_samples} samples")
        if self.invariance_violations is None:
            lines.append("invariance: not checked")
        else:
            lines.append(f"invariance: {self.invariance_violations} violations, worst excess {self.invariance_worst_excess:.3e}")
        lines.append(f"vol(K) = {self.volume:.5g} +- {self.volume_stderr:.2g}   (vol(X) = {self.volume_X:.5g})")
        lines.append(f"{{J <= eps}} inside interior of X (sampled): {self.interior}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def verify_certificate(cert: Certificate, *, residual_samples=100_000, attractor_init=200, transient=None,
                       keep=2000, h=0.01, invariance_points=500, horizon=None, volume_samples=100_000,
                       seed=0) -> VerificationReport:
    """Run every check and collect the figures of merit."""
    notes = []
    res = check_residuals(cert, n_samples=residual_samples, seed=seed)
    discrete = cert.kind == "discrete"
    transient = transient if transient is not None else (1000 if discrete else 30.0)
    horizon = horizon if horizon is not None else (100 if discrete else 20.0)
    try:
        A = attractor_samples(cert.system, cert.X, attractor_init, transient, keep, seed + 1, h=h)
        frac, nA = float(np.mean(member(cert, A))), len(A)
    except EmptySampleError as exc:
        frac, nA = None, 0
        notes.append(str(exc))
    try:
        inv = check_invariance(cert, n_points=invariance_points, horizon=horizon, seed=seed + 2, h=h)
        nviol, worst = inv.violations, inv.worst_excess
    except EmptySetError as exc:
        nviol, worst = None, None
        notes.append(f"invariance not checked: {exc}")
    vol, se = estimate_volume(cert, n_mc=volume_samples, seed=seed + 3)
    volX = cert.X.volume() or moments(cert.X, 0, mc_samples=volume_samples, seed=seed + 4).volume
    interior = check_interior(cert, seed=seed + 5)
    return VerificationReport(res.minima, res.flagged, frac, nA, nviol, worst, vol, se, volX, interior, notes)
