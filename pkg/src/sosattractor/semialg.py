"""Compact basic semialgebraic sets, Lebesgue moments and uniform sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Sequence

import numpy as np

from .polycore import Polynomial, basis, evaluate, parse_polynomial

__all__ = [
    "SemialgebraicSet",
    "MomentVector",
    "moments",
    "contains",
    "sample",
    "ball_volume",
    "EmptySetError",
]

# draws per RNG chunk; chunk i always uses SeedSequence(seed, spawn_key=(i,))
# so the stream does not depend on how chunks are distributed over workers
CHUNK = 65536


class EmptySetError(ValueError):
    """Sampling or Monte-Carlo integration found (numerically) no points of X."""


def _norm2(nvars: int) -> Polynomial:
    return Polynomial(nvars, {tuple(2 if j == i else 0 for j in range(nvars)): 1.0 for i in range(nvars)})


def _ball_poly(nvars: int, radius: float) -> Polynomial:
    return Polynomial.constant(nvars, radius ** 2) - _norm2(nvars)


@dataclass(frozen=True)
class SemialgebraicSet:
    """``X = {x : g_i(x) >= 0 for all i}`` with a bounding-ball inequality.

    Prefer the constructors `box`, `ball`, `annulus` and `generic`; they
    append ``R^2 - |x|^2`` to the inequality list and record a shape hint
    used for closed-form moments.
    """

    nvars: int
    inequalities: tuple
    ball_radius: float
    shape: str = "generic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nvars < 1:
            raise ValueError("nvars must be >= 1")
        if self.ball_radius <= 0:
            raise ValueError("ball_radius must be positive")
        if self.shape not in ("box", "ball", "annulus", "generic"):
            raise ValueError(f"unknown shape hint {self.shape!r}")
        for g in self.inequalities:
            if g.nvars != self.nvars:
                raise ValueError("inequality has wrong number of variables")
        ball = _ball_poly(self.nvars, self.ball_radius)
        if not any(g == ball for g in self.inequalities):
            raise ValueError("inequalities must include R_X^2 - |x|^2 exactly")
        if self.shape != "generic":
            regen = _shape_inequalities(self.nvars, self.shape, self.params, self.ball_radius)
            if tuple(regen) != tuple(self.inequalities):
                raise ValueError("shape parameters do not regenerate the inequality list")

    # constructors
    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], ball_radius: float) -> "SemialgebraicSet":
        lower = [float(a) for a in lower]
        upper = [float(b) for b in upper]
        if len(lower) != len(upper):
            raise ValueError("lower and upper bounds differ in length")
        if any(a >= b for a, b in zip(lower, upper)):
            raise ValueError("box bounds must satisfy lower < upper")
        n = len(lower)
        params = {"lower": tuple(lower), "upper": tuple(upper)}
        _check_radius_covers(ball_radius, np.max(np.abs([lower, upper]), axis=0))
        return cls(n, tuple(_shape_inequalities(n, "box", params, ball_radius)), float(ball_radius), "box", params)

    @classmethod
    def ball(cls, nvars: int, radius: float, ball_radius: float | None = None) -> "SemialgebraicSet":
        ball_radius = radius if ball_radius is None else ball_radius
        if radius <= 0:
            raise ValueError("radius must be positive")
        if ball_radius < radius:
            raise ValueError("ball_radius must be at least the ball's radius")
        params = {"radius": float(radius)}
        return cls(nvars, tuple(_shape_inequalities(nvars, "ball", params, ball_radius)), float(ball_radius), "ball", params)

    @classmethod
    def annulus(cls, nvars: int, inner: float, outer: float, ball_radius: float | None = None) -> "SemialgebraicSet":
        ball_radius = outer if ball_radius is None else ball_radius
        if not 0 <= inner < outer:
            raise ValueError("annulus radii must satisfy 0 <= inner < outer")
        if ball_radius < outer:
            raise ValueError("ball_radius must be at least the outer radius")
        params = {"inner": float(inner), "outer": float(outer)}
        return cls(nvars, tuple(_shape_inequalities(nvars, "annulus", params, ball_radius)), float(ball_radius), "annulus", params)

    @classmethod
    def generic(cls, inequalities: Sequence[Polynomial | str], ball_radius: float, nvars: int | None = None) -> "SemialgebraicSet":
        """Set from arbitrary inequalities; the bounding ball is appended if absent."""
        gs = []
        for g in inequalities:
            if isinstance(g, str):
                if nvars is None:
                    raise ValueError("nvars is required when inequalities are strings")
                g = parse_polynomial(g, nvars)
            gs.append(g)
        if nvars is None:
            if not gs:
                raise ValueError("nvars is required for an empty inequality list")
            nvars = gs[0].nvars
        ball = _ball_poly(nvars, ball_radius)
        if not any(g == ball for g in gs):
            gs.append(ball)
        return cls(nvars, tuple(gs), float(ball_radius), "generic", {})

    # geometry
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape == "box":
            return np.array(self.params["lower"]), np.array(self.params["upper"])
        r = {"ball": self.params.get("radius"), "annulus": self.params.get("outer")}.get(self.shape, self.ball_radius)
        return -r * np.ones(self.nvars), r * np.ones(self.nvars)

    def volume(self) -> float | None:
        """Analytic Lebesgue volume, or None for generic sets."""
        if self.shape == "box":
            return float(np.prod(np.subtract(self.params["upper"], self.params["lower"])))
        if self.shape == "ball":
            return ball_volume(self.nvars, self.params["radius"])
        if self.shape == "annulus":
            return ball_volume(self.nvars, self.params["outer"]) - ball_volume(self.nvars, self.params["inner"])
        return None

    def to_dict(self) -> dict:
        d = {"nvars": self.nvars, "shape": self.shape, "ball_radius": self.ball_radius}
        if self.shape == "box":
            d.update(lower=list(self.params["lower"]), upper=list(self.params["upper"]))
        elif self.shape == "ball":
            d.update(radius=self.params["radius"])
        elif self.shape == "annulus":
            d.update(inner=self.params["inner"], outer=self.params["outer"])
        else:
            d.update(inequalities=[g.to_string() for g in self.inequalities])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SemialgebraicSet":
        n = int(d["nvars"])
        shape = d.get("shape", "generic")
        R = float(d["ball_radius"])
        if shape == "box":
            return cls.box(d["lower"], d["upper"], R)
        if shape == "ball":
            return cls.ball(n, float(d["radius"]), R)
        if shape == "annulus":
            return cls.annulus(n, float(d["inner"]), float(d["outer"]), R)
        if shape == "generic":
            return cls.generic(d["inequalities"], R, nvars=n)
        raise ValueError(f"unknown shape {shape!r}")


def _check_radius_covers(ball_radius, absmax):
    if ball_radius ** 2 < float(np.sum(np.square(absmax))) * (1 - 1e-12):
        raise ValueError("ball_radius does not cover the set; R_X^2 - |x|^2 would cut it")


def _shape_inequalities(nvars, shape, params, ball_radius) -> list[Polynomial]:
    x = [Polynomial.variable(nvars, i) for i in range(1, nvars + 1)]
    if shape == "box":
        gs = [(xi - a) * (b - xi) for xi, a, b in zip(x, params["lower"], params["upper"])]
    elif shape == "ball":
        gs = [_ball_poly(nvars, params["radius"])]
    elif shape == "annulus":
        gs = [_norm2(nvars) - params["inner"] ** 2, _ball_poly(nvars, params["outer"])]
    else:
        raise ValueError(shape)
    gs.append(_ball_poly(nvars, ball_radius))
    return gs


def ball_volume(nvars: int, radius: float) -> float:
    return pi ** (nvars / 2) / gamma(nvars / 2 + 1) * radius ** nvars


def contains(X: SemialgebraicSet, x) -> bool | np.ndarray:
    """True where every ``g_i(x) >= 0`` (boundary inclusive, no tolerance)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != X.nvars:
        raise ValueError(f"point dimension {x.shape[-1]} does not match nvars={X.nvars}")
    ok = np.ones(np.atleast_2d(x).shape[0], dtype=bool)
    for g in X.inequalities:
        ok &= np.atleast_1d(evaluate(g, x)) >= 0
    return bool(ok[0]) if x.ndim == 1 else ok


@dataclass
class MomentVector:
    """Lebesgue moments ``int_X x^alpha dx`` indexed by ``basis(nvars, max_degree)``."""

    nvars: int
    max_degree: int
    values: np.ndarray
    method: str
    stderr: np.ndarray | None = None

    @property
    def monomials(self):
        return basis(self.nvars, self.max_degree)

    @property
    def volume(self) -> float:
        return float(self.values[0])

    def __len__(self):
        return len(self.values)


def _interval_moment(a: float, b: float, k: int) -> float:
    return (b ** (k + 1) - a ** (k + 1)) / (k + 1)


def _ball_moment(alpha, radius: float) -> float:
    # int_{|x|<=R} x^alpha dx = R^(|a|+n)/(|a|+n) * int_{S^{n-1}} x^alpha dS
    # with int_S x^alpha dS = 2 prod Gamma(b_i) / Gamma(sum b_i), b_i = (a_i+1)/2
    if any(a % 2 for a in alpha):
        return 0.0
    n = len(alpha)
    d = sum(alpha)
    b = [(a + 1) / 2 for a in alpha]
    sphere = 2.0 * np.prod([gamma(bi) for bi in b]) / gamma(sum(b))
    return radius ** (d + n) / (d + n) * sphere


def moments(X: SemialgebraicSet, max_degree: int, mc_samples: int | None = None, seed: int | None = None) -> MomentVector:
    """Moment vector of the Lebesgue measure on `X` up to `max_degree`.

    Box, ball and annulus sets use closed forms.  Generic sets need
    ``mc_samples`` and are integrated by rejection sampling inside the
    bounding ball; the result then carries per-entry standard errors.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    mons = basis(X.nvars, max_degree)
    if X.shape == "box":
        lo, hi = X.params["lower"], X.params["upper"]
        vals = np.array([np.prod([_interval_moment(a, b, k) for a, b, k in zip(lo, hi, m)]) for m in mons])
        return MomentVector(X.nvars, max_degree, vals, "closed_form")
    if X.shape == "ball":
        vals = np.array([_ball_moment(m, X.params["radius"]) for m in mons])
        return MomentVector(X.nvars, max_degree, vals, "closed_form")
    if X.shape == "annulus":
        vals = np.array([_ball_moment(m, X.params["outer"]) - _ball_moment(m, X.params["inner"]) for m in mons])
        return MomentVector(X.nvars, max_degree, vals, "closed_form")
    if mc_samples is None:
        raise ValueError("generic sets need mc_samples for Monte-Carlo moments")
    return mc_moments(X, max_degree, mc_samples, seed or 0)


def mc_moments(X: SemialgebraicSet, max_degree: int, n_samples: int, seed: int = 0) -> MomentVector:
    """Monte-Carlo moments: uniform proposals in the bounding ball, indicator of X."""
    mons = basis(X.nvars, max_degree)
    exps = np.array(mons)
    vol_ball = ball_volume(X.nvars, X.ball_radius)
    s1 = np.zeros(len(mons))
    s2 = np.zeros(len(mons))
    done = 0
    chunk = 0
    while done < n_samples:
        m = min(CHUNK, n_samples - done)
        pts = _uniform_ball(_rng(seed, chunk), m, X.nvars, X.ball_radius)
        inside = contains(X, pts)
        vals = np.prod(pts[:, None, :] ** exps[None, :, :], axis=2) * inside[:, None]
        s1 += vals.sum(axis=0)
        s2 += (vals ** 2).sum(axis=0)
        done += m
        chunk += 1
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean ** 2, 0.0)
    values = vol_ball * mean
    stderr = vol_ball * np.sqrt(var / n_samples)
    if values[0] <= 3 * stderr[0]:
        raise EmptySetError("Monte-Carlo volume estimate is not positive at 3 sigma; X looks empty")
    return MomentVector(X.nvars, max_degree, values, "monte_carlo", stderr)


def _rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _uniform_ball(rng: np.random.Generator, m: int, n: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(m) ** (1.0 / n)
    return g * r[:, None]


def sample(X: SemialgebraicSet, count: int, seed: int, max_proposals: int | None = None, accept=None) -> np.ndarray:
    """Uniform i.i.d. points of `X` by rejection, shape ``(count, nvars)``.

    Proposals come from the box itself for box sets and from the bounding
    ball otherwise.  `accept` optionally narrows the target to a subset of
    X (a vectorized predicate), which is how sublevel sets are sampled.

    Raises
    ------
    EmptySetError
        If the acceptance rate is below 1e-6 once `max_proposals` draws
        have been made.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if max_proposals is None:
        max_proposals = max(10 ** 7, 1000 * count)
    out = []
    got = 0
    proposed = 0
    chunk = 0
    while got < count:
        rng = _rng(seed, chunk)
        if X.shape == "box":
            lo, hi = X.bounding_box()
            pts = lo + (hi - lo) * rng.random((CHUNK, X.nvars))
        else:
            pts = _uniform_ball(rng, CHUNK, X.nvars, X.ball_radius)
        ok = contains(X, pts)
        if accept is not None:
            ok &= np.asarray(accept(pts), dtype=bool)
        out.append(pts[ok])
        got += int(ok.sum())
        proposed += CHUNK
        chunk += 1
        if proposed >= max_proposals and got / proposed < 1e-6:
            raise EmptySetError(f"acceptance rate {got / proposed:.2e} after {proposed} proposals")
    return np.concatenate(out)[:count]
