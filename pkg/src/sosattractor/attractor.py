"""Outer approximations of global attractors by positively invariant sets.

For a continuous system ``x' = f(x)`` on a compact set X the degree-k SOS
program reads

    minimize    int_X w dx + eps * vol(X)
    subject to  w + J - v - 1       >= 0  on X
                w                   >= 0  on X
                J                   >= 0  on X
                eps - grad J.f - J - v >= 0  on X
                beta*v - grad v.f   >= 0  on X
                eps >= 0

with w, J, v polynomials of degree k.  Any feasible point gives the set
``K = {J <= eps} & {v >= 0} & X`` which contains the attractor, and
``{J <= eps}`` is positively invariant.

Discrete maps ``x+ = f(x)`` replace the two dynamic constraints by

    (1 - gamma)*eps - J o f + gamma*J - v >= 0,     v - alpha * v o f >= 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import conic
from .polycore import Polynomial, PolynomialMap, basis, lie_derivative, compose
from .semialg import SemialgebraicSet, contains, moments
from .sosprog import (AffineRescaling, SosProgram, add_poly_var, add_putinar_constraint,
                      add_scalar_var, extract, gram_matrices, new_program, set_objective, to_conic)

__all__ = [
    "DynamicalSystem",
    "SolveParams",
    "Certificate",
    "build_continuous",
    "build_discrete",
    "solve_attractor",
    "violation_bounds",
    "hardening_margins",
    "member",
    "member_interior_variant",
    "intersect_members",
    "constraint_polynomials",
    "save_certificate",
    "load_certificate",
    "VAN_DER_POL",
    "HENON",
    "NO_POLY_LYAPUNOV",
]

log = logging.getLogger(__name__)

CONSTRAINT_NAMES = ("w+J-v-1", "w", "J", "lyapunov", "discount")


def _even_ceil(d: int) -> int:
    d = max(d, 0)
    return d + (d % 2)


@dataclass(frozen=True)
class DynamicalSystem:
    kind: str
    f: PolynomialMap

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise ValueError(f"kind must be 'continuous' or 'discrete', got {self.kind!r}")
        if not self.f.is_square:
            raise ValueError("the map must have as many components as variables")

    @property
    def nvars(self) -> int:
        return self.f.nvars

    @classmethod
    def parse(cls, kind: str, exprs: Sequence[str]) -> "DynamicalSystem":
        return cls(kind, PolynomialMap.parse(exprs, len(exprs)))


# Systems used in the numerical examples (x1 = x, x2 = y).
VAN_DER_POL = ["2*x2", "-0.8*x1 - 10*(x1^2 - 0.21)*x2"]
HENON = [repr(2 / 3) + "*(1 + x2) - 2.1*x1^2", "0.45*x1"]
NO_POLY_LYAPUNOV = [
    "-2*x2*(-x1^4 + 2*x1^2*x2^2 + x2^4) - 2*x1*(x1^2 + x2^2)*(x1^4 + 2*x1^2*x2^2 - x2^2)",
    "2*x1*(x1^4 + 2*x1^2*x2^2 - x2^4) - 2*x2*(x1^2 + x2^2)*(-x1^4 + 2*x1^2*x2^2 + x2^4)",
]


@dataclass(frozen=True)
class SolveParams:
    """Hierarchy degree and discount parameters.

    Continuous systems use ``beta``; discrete ones use ``alpha`` and
    ``gamma``.  ``epsilon_scale`` multiplies eps in membership tests.
    """

    degree: int
    beta: float | None = None
    alpha: float | None = None
    gamma: float | None = None
    epsilon_scale: float = 1.0

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if self.epsilon_scale <= 0:
            raise ValueError("epsilon_scale must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        for name in ("alpha", "gamma"):
            val = getattr(self, name)
            if val is not None and not 0 < val < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")

    @classmethod
    def continuous(cls, degree: int, beta: float = 0.2, epsilon_scale: float = 1.0) -> "SolveParams":
        return cls(degree, beta=beta, epsilon_scale=epsilon_scale)

    @classmethod
    def discrete(cls, degree: int, alpha: float = 0.002, gamma: float = 0.05, epsilon_scale: float = 1.0) -> "SolveParams":
        return cls(degree, alpha=alpha, gamma=gamma, epsilon_scale=epsilon_scale)

    def check_for(self, kind: str):
        if kind == "continuous":
            if self.beta is None or self.alpha is not None or self.gamma is not None:
                raise ValueError("continuous systems take beta only")
        else:
            if self.alpha is None or self.gamma is None or self.beta is not None:
                raise ValueError("discrete systems take alpha and gamma only")

    def to_dict(self) -> dict:
        d = {"degree": self.degree, "epsilon_scale": self.epsilon_scale}
        for name in ("beta", "alpha", "gamma"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d


@dataclass
class AttractorProgram:
    """An assembled SOS program plus what is needed to read it back."""

    program: SosProgram
    system: DynamicalSystem
    X: SemialgebraicSet
    params: SolveParams
    rescaling: AffineRescaling | None
    volume: float


def _working_data(sys: DynamicalSystem, X: SemialgebraicSet, rescale: bool):
    if rescale:
        tr = AffineRescaling.from_set(X)
        f = tr.pull_field(sys.f) if sys.kind == "continuous" else tr.pull_map(sys.f)
        gs = [tr.pull(g) for g in X.inequalities]
    else:
        tr = None
        f, gs = sys.f, list(X.inequalities)
    return tr, f, gs


def _objective_for_w(X, k, tr, mc_samples, seed):
    """Coefficients c with ``c . w_coeffs = int_X w dx`` in working coordinates."""
    mom = moments(X, k, mc_samples=mc_samples, seed=seed)
    mons = basis(X.nvars, k)
    if tr is None:
        return mom.values, mom.volume
    index = {m: i for i, m in enumerate(mons)}
    c = np.zeros(len(mons))
    for j, m in enumerate(mons):
        pushed = tr.push(Polynomial(X.nvars, {m: 1.0}))
        c[j] = sum(coef * mom.values[index[mm]] for mm, coef in pushed.terms.items())
    return c, mom.volume


def _common(sys, X, params, rescale, mc_samples, seed):
    if sys.nvars != X.nvars:
        raise ValueError("system and constraint set have different dimensions")
    params.check_for(sys.kind)
    tr, f, gs = _working_data(sys, X, rescale)
    prog = new_program(sys.nvars)
    k = params.degree
    w = add_poly_var(prog, "w", k)
    J = add_poly_var(prog, "J", k)
    v = add_poly_var(prog, "v", k)
    eps = add_scalar_var(prog, "eps", nonneg=True)
    cw, vol = _objective_for_w(X, k, tr, mc_samples, seed)
    set_objective(prog, {"w": cw, "eps": vol})
    for name, expr in zip(CONSTRAINT_NAMES[:3], (w + J - v - 1.0, w.expr, J.expr)):
        add_putinar_constraint(prog, expr, gs, _even_ceil(expr.degree), name)
    return prog, tr, f, gs, (w, J, v, eps), vol


def build_continuous(sys: DynamicalSystem, X: SemialgebraicSet, params: SolveParams, rescale: bool = False,
                     mc_samples: int | None = None, seed: int = 0, max_degree: int = 40) -> AttractorProgram:
    """Assemble the degree-k program for ``x' = f(x)``.

    With ``rescale`` the problem is posed in coordinates where the bounding
    box of X is ``[-1, 1]^n``.  The optimum is unchanged; only conditioning
    differs, and on the bundled examples it gets worse, hence off by default.
    """
    if sys.kind != "continuous":
        raise ValueError("build_continuous needs a continuous-time system")
    if params.beta is None:
        raise ValueError("continuous systems need beta")
    prog, tr, f, gs, (w, J, v, eps), vol = _common(sys, X, params, rescale, mc_samples, seed)
    lyap = eps.expr - J.lie(f) - J - v
    disc = v * params.beta - v.lie(f)
    for name, expr in zip(CONSTRAINT_NAMES[3:], (lyap, disc)):
        budget = _even_ceil(params.degree - 1 + f.degree)
        if budget > max_degree:
            raise ValueError(f"degree budget {budget} exceeds cap {max_degree}; use a smaller k")
        if budget > 24:
            log.warning("degree budget %d is large; expect a slow and ill-conditioned SDP", budget)
        add_putinar_constraint(prog, expr, gs, max(budget, _even_ceil(expr.degree)), name)
    return AttractorProgram(prog, sys, X, params, tr, vol)


def build_discrete(sys: DynamicalSystem, X: SemialgebraicSet, params: SolveParams, rescale: bool = False,
                   mc_samples: int | None = None, seed: int = 0, max_degree: int = 40) -> AttractorProgram:
    """Assemble the degree-k program for ``x+ = f(x)``."""
    if sys.kind != "discrete":
        raise ValueError("build_discrete needs a discrete-time system")
    params.check_for("discrete")
    budget = _even_ceil(max(params.degree * max(sys.f.degree, 1), params.degree))
    if budget > max_degree:
        raise ValueError(f"composition degree {budget} exceeds cap {max_degree}; use a smaller k")
    prog, tr, f, gs, (w, J, v, eps), vol = _common(sys, X, params, rescale, mc_samples, seed)
    a, g = params.alpha, params.gamma
    lyap = eps.expr * (1.0 - g) - J.compose(f) + J * g - v
    disc = v - v.compose(f) * a
    for name, expr in zip(CONSTRAINT_NAMES[3:], (lyap, disc)):
        add_putinar_constraint(prog, expr, gs, max(budget, _even_ceil(expr.degree)), name)
    return AttractorProgram(prog, sys, X, params, tr, vol)


@dataclass
class Certificate:
    """Solved ``(w, J, eps, v)`` in the original coordinates."""

    system: DynamicalSystem
    X: SemialgebraicSet
    params: SolveParams
    w: Polynomial
    J: Polynomial
    v: Polynomial
    epsilon: float
    d_k: float
    status: str
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def nvars(self) -> int:
        return self.X.nvars

    @property
    def kind(self) -> str:
        return self.system.kind

    def recomputed_objective(self) -> float:
        """``int_X w dx + eps * vol(X)`` from the moment vector."""
        mom = moments(self.X, max(self.w.degree, 0), mc_samples=self.info.get("mc_samples"), seed=self.info.get("seed", 0))
        return float(self.w.coefficients(mom.monomials) @ mom.values + self.epsilon * mom.volume)

    def with_scale(self, epsilon_scale: float) -> "Certificate":
        return replace(self, params=replace(self.params, epsilon_scale=epsilon_scale))


def violation_bounds(ap: AttractorProgram, problem, x: np.ndarray) -> dict:
    """Upper bounds on how far each constraint can dip below zero on X.

    The computed data satisfy ``p = sum_i s_i g_i + r`` exactly, with ``r``
    the equality residual and ``s_i = z_i' Q_i z_i``.  On X, with ``B`` a
    bound on ``|x_j|`` over X in working coordinates,

        p >= -sum |r_a| B^a - sum_i max(0, -lambda_min(Q_i)) max|z_i|^2 max g_i.
    """
    prog = ap.program
    lo, hi = ap.X.bounding_box()
    if ap.rescaling is not None:
        lo, hi = ap.rescaling.to_y(lo), ap.rescaling.to_y(hi)
    B = np.maximum(np.abs(lo), np.abs(hi))

    def bound(mons):
        return np.prod(B[None, :] ** np.asarray(mons, dtype=float).reshape(len(mons), -1), axis=1)

    resid = problem.A @ x - problem.b
    grams = gram_matrices(prog, problem, x)
    out = {}
    row = 0
    for con in prog.constraints:
        r = resid[row:row + len(con.rows)]
        row += len(con.rows)
        eta = float(np.abs(r) @ bound(con.rows))
        for bi in con.blocks:
            blk = prog.gram_blocks[bi]
            lam = float(np.linalg.eigvalsh(grams[bi])[0])
            if lam < 0:
                zmax = float(np.sum(bound([tuple(2 * e for e in m) for m in blk.monomials])))
                gm, gc = zip(*blk.g.terms.items())
                gmax = float(np.abs(gc) @ bound(gm))
                eta += -lam * zmax * gmax
        out[con.name] = eta
    return out


def hardening_margins(kind: str, params: SolveParams, eta: dict) -> dict:
    """Constant shifts making ``(w, J, v, eps)`` exactly feasible given `eta`.

    Shifting v by ``m_v`` adds ``beta*m_v`` (or ``(1-alpha)*m_v``) to the
    discount constraint; J, w and eps then absorb the knock-on effects.
    """
    e1, e2, e3, e4, e5 = (eta[n] for n in CONSTRAINT_NAMES)
    if kind == "continuous":
        m_v = e5 / params.beta
        m_J = e3
        m_eps = e4 + m_J + m_v
    else:
        m_v = e5 / (1.0 - params.alpha)
        m_J = e3
        m_eps = m_J + (e4 + m_v) / (1.0 - params.gamma)
    m_w = max(e1 + m_v, e2)
    return {"w": m_w, "J": m_J, "v": m_v, "eps": m_eps}


def solve_attractor(sys: DynamicalSystem, X: SemialgebraicSet, params: SolveParams,
                    settings: conic.SolverSettings | None = None, rescale: bool = False,
                    mc_samples: int | None = None, seed: int = 0, harden: bool = True) -> Certificate:
    """Build, solve and extract a certificate.

    The optimal v vanishes on the maximal positively invariant set, so the
    sign of the raw v there is solver noise.  With `harden` (default) the
    certificate is shifted by constants from `hardening_margins` so that the
    five constraints hold exactly on X despite solver residuals; the shifts
    and the raw solver objective are recorded in ``info``.

    Raises
    ------
    conic.SolverError
        Unless the solver returns an optimal or near-optimal point.
    """
    build = build_continuous if sys.kind == "continuous" else build_discrete
    ap = build(sys, X, params, rescale=rescale, mc_samples=mc_samples, seed=seed)
    problem = to_conic(ap.program)
    sol = conic.solve(problem, settings)
    log.info("k=%d status=%s obj=%.6g iters=%d time=%.2fs", params.degree, sol.status,
             sol.objective_value, sol.iterations, sol.solve_time)
    if not sol.usable:
        raise conic.SolverError(sol.status)
    vals = extract(ap.program, problem, sol.x)
    polys = {}
    for name in ("w", "J", "v"):
        p = vals[name]
        polys[name] = ap.rescaling.push(p) if ap.rescaling is not None else p
    eps = max(vals["eps"], 0.0)
    d_k = sol.objective_value
    info = {"iterations": sol.iterations, "solve_time": sol.solve_time, "residuals": sol.residuals,
            "rescaled": rescale, "mc_samples": mc_samples, "seed": seed, "solver_objective": d_k}
    if harden:
        eta = violation_bounds(ap, problem, sol.x)
        m = hardening_margins(sys.kind, params, eta)
        for name in ("w", "J", "v"):
            polys[name] = polys[name] + m[name]
        eps += m["eps"]
        d_k += (m["w"] + m["eps"]) * ap.volume
        info.update(violation_bounds=eta, margins=m)
    return Certificate(sys, X, params, polys["w"], polys["J"], polys["v"], eps, d_k, sol.status, info)


def constraint_polynomials(cert: Certificate) -> dict:
    """The five polynomials that must be nonnegative on X, in x coordinates."""
    w, J, v, eps = cert.w, cert.J, cert.v, cert.epsilon
    f = cert.system.f
    p = cert.params
    out = {"w+J-v-1": w + J - v - 1.0, "w": w, "J": J}
    if cert.kind == "continuous":
        out["lyapunov"] = eps - lie_derivative(J, f) - J - v
        out["discount"] = v * p.beta - lie_derivative(v, f)
    else:
        out["lyapunov"] = (1.0 - p.gamma) * eps - compose(J, f) + J * p.gamma - v
        out["discount"] = v - compose(v, f) * p.alpha
    return out


def _tau(eps: float) -> float:
    return 1e-9 * (1.0 + abs(eps))


def _points(cert, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cert.nvars:
        raise ValueError(f"point dimension {x.shape[-1]} does not match nvars={cert.nvars}")
    return x


def member(cert: Certificate, x, epsilon_scale: float | None = None):
    """Membership in ``K = {J <= s*eps} & {v >= 0} & X`` (slack 1e-9*(1+eps))."""
    x = _points(cert, x)
    s = cert.params.epsilon_scale if epsilon_scale is None else epsilon_scale
    tau = _tau(cert.epsilon)
    ok = (np.asarray(cert.J(x)) <= s * cert.epsilon + tau) & (np.asarray(cert.v(x)) >= -tau) & contains(cert.X, x)
    return bool(ok) if x.ndim == 1 else ok


def member_interior_variant(cert: Certificate, x, epsilon_scale: float | None = None):
    """Membership in ``{J <= s*eps}`` alone.

    Valid as an outer approximation only when ``{J <= eps}`` lies in the
    interior of X (see `verify.check_interior`).
    """
    x = _points(cert, x)
    s = cert.params.epsilon_scale if epsilon_scale is None else epsilon_scale
    ok = np.asarray(cert.J(x)) <= s * cert.epsilon + _tau(cert.epsilon)
    return bool(ok) if x.ndim == 1 else ok


def intersect_members(certs: Sequence[Certificate], x):
    """Membership in the intersection of several outer approximations."""
    if not certs:
        raise ValueError("need at least one certificate")
    ref = certs[0].X.to_dict()
    for c in certs[1:]:
        if c.X.to_dict() != ref:
            raise ValueError("certificates are defined on different sets X")
    result = member(certs[0], x)
    for c in certs[1:]:
        result = result & member(c, x)
    return result


# ---------------------------------------------------------------------------
# serialization

FORMAT = "sosattractor-certificate/1"


def _poly_to_list(p: Polynomial, k: int) -> list:
    return [float(c) for c in p.coefficients(basis(p.nvars, k))]


def certificate_to_dict(cert: Certificate) -> dict:
    k = max(cert.params.degree, cert.w.degree, cert.J.degree, cert.v.degree)
    return {
        "format": FORMAT,
        "nvars": cert.nvars,
        "kind": cert.kind,
        "monomial_order": "grlex",
        "basis_degree": k,
        "dynamics": [c.to_string() for c in cert.system.f],
        "set": cert.X.to_dict(),
        "params": cert.params.to_dict(),
        "w": _poly_to_list(cert.w, k),
        "J": _poly_to_list(cert.J, k),
        "v": _poly_to_list(cert.v, k),
        "epsilon": cert.epsilon,
        "d_k": cert.d_k,
        "status": cert.status,
        "info": cert.info,
    }


def certificate_from_dict(d: dict) -> Certificate:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a certificate document (format={d.get('format')!r})")
    if d.get("monomial_order") != "grlex":
        raise ValueError("only grlex monomial order is supported")
    n = int(d["nvars"])
    mons = basis(n, int(d["basis_degree"]))
    system = DynamicalSystem(d["kind"], PolynomialMap.parse(d["dynamics"], n))
    polys = {name: Polynomial.from_coefficients(n, mons, d[name]) for name in ("w", "J", "v")}
    return Certificate(system, SemialgebraicSet.from_dict(d["set"]), SolveParams(**d["params"]),
                       polys["w"], polys["J"], polys["v"], float(d["epsilon"]), float(d["d_k"]),
                       d["status"], d.get("info", {}))


def save_certificate(cert: Certificate, path) -> None:
    Path(path).write_text(json.dumps(certificate_to_dict(cert), indent=1))


def load_certificate(path) -> Certificate:
    return certificate_from_dict(json.loads(Path(path).read_text()))
