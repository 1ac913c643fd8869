"""Compile polynomial nonnegativity constraints into a conic program.

A constraint ``p(x) >= 0 on X`` where ``p`` is affine in unknown polynomial
coefficients is replaced by the Putinar certificate

    p = s_0 + sum_i s_i * g_i,    s_i = z_i' Q_i z_i,  Q_i PSD,

and one linear equality per monomial matching the coefficients of both
sides.  Gram matrices are vectorized as the lower triangle, row by row,
with off-diagonal entries scaled by sqrt(2) so that the Euclidean inner
product of two vectorizations equals the trace inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .polycore import Polynomial, PolynomialMap, basis, compose, lie_derivative, multiply, _PowerCache
from .semialg import SemialgebraicSet

__all__ = [
    "PolyExpr",
    "PolyVariable",
    "ScalarVariable",
    "GramBlock",
    "SosProgram",
    "ConicProblem",
    "new_program",
    "add_poly_var",
    "add_scalar_var",
    "add_putinar_constraint",
    "set_objective",
    "to_conic",
    "reconstruct",
    "svec",
    "smat",
    "AffineRescaling",
]

SQRT2 = sqrt(2.0)


def svec(Q: np.ndarray) -> np.ndarray:
    """Lower-triangular row-major vectorization with sqrt(2) off-diagonal scaling."""
    Q = np.asarray(Q, dtype=float)
    i, j = np.tril_indices(Q.shape[0])
    return Q[i, j] * np.where(i == j, 1.0, SQRT2)


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of `svec`."""
    v = np.asarray(v, dtype=float)
    s = int(round((sqrt(8 * len(v) + 1) - 1) / 2))
    if s * (s + 1) // 2 != len(v):
        raise ValueError("length is not a triangular number")
    i, j = np.tril_indices(s)
    Q = np.zeros((s, s))
    vals = v / np.where(i == j, 1.0, SQRT2)
    Q[i, j] = vals
    Q[j, i] = vals
    return Q


def reconstruct(Q: np.ndarray, z: Sequence[tuple]) -> Polynomial:
    """Expand ``z' Q z`` for a monomial vector `z`."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != len(z):
        raise ValueError(f"Gram matrix of shape {Q.shape} does not match {len(z)} monomials")
    if not z:
        raise ValueError("empty monomial vector")
    n = len(z[0])
    terms: dict = {}
    for a, za in enumerate(z):
        for b, zb in enumerate(z):
            if Q[a, b] != 0.0:
                m = tuple(p + q for p, q in zip(za, zb))
                terms[m] = terms.get(m, 0.0) + Q[a, b]
    return Polynomial(n, terms)


class PolyExpr:
    """Polynomial whose coefficients are affine in decision symbols.

    ``parts`` maps a symbol index to the known polynomial it multiplies;
    the key ``None`` holds the constant (symbol-free) part.
    """

    __slots__ = ("nvars", "parts")

    def __init__(self, nvars: int, parts: Mapping | None = None):
        self.nvars = nvars
        self.parts = {k: p for k, p in (parts or {}).items() if not p.is_zero()}

    @classmethod
    def lift(cls, obj, nvars: int | None = None) -> "PolyExpr":
        if isinstance(obj, PolyExpr):
            return obj
        if isinstance(obj, (PolyVariable, ScalarVariable)):
            return obj.expr
        if isinstance(obj, Polynomial):
            return cls(obj.nvars, {None: obj})
        if isinstance(obj, (int, float, np.floating, np.integer)) and nvars is not None:
            return cls(nvars, {None: Polynomial.constant(nvars, float(obj))})
        raise TypeError(f"cannot use {type(obj).__name__} in a polynomial expression")

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.parts.values()), default=-1)

    def symbols(self):
        return [k for k in self.parts if k is not None]

    def constant_part(self) -> Polynomial:
        return self.parts.get(None, Polynomial(self.nvars))

    def _combine(self, other, sign: float):
        other = PolyExpr.lift(other, self.nvars)
        if other.nvars != self.nvars:
            raise ValueError("dimension mismatch")
        parts = dict(self.parts)
        for k, p in other.parts.items():
            q = p if sign > 0 else -p
            parts[k] = parts[k] + q if k in parts else q
        return PolyExpr(self.nvars, parts)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return PolyExpr.lift(other, self.nvars)._combine(self, -1.0)

    def __neg__(self):
        return PolyExpr(self.nvars, {k: -p for k, p in self.parts.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return PolyExpr(self.nvars, {k: p * float(other) for k, p in self.parts.items()})
        if isinstance(other, Polynomial):
            return PolyExpr(self.nvars, {k: multiply(p, other) for k, p in self.parts.items()})
        return NotImplemented

    __rmul__ = __mul__

    def lie(self, f: PolynomialMap) -> "PolyExpr":
        """``grad(expr) . f`` term by term."""
        return PolyExpr(self.nvars, {k: lie_derivative(p, f) for k, p in self.parts.items()})

    def compose(self, f: PolynomialMap) -> "PolyExpr":
        """``expr o f`` term by term."""
        cache = _PowerCache(f)
        return PolyExpr(f.nvars, {k: compose(p, f, cache) for k, p in self.parts.items()})

    def evaluate(self, values: Mapping[int, float]) -> Polynomial:
        """Substitute numeric values for the symbols."""
        out = self.constant_part()
        for k, p in self.parts.items():
            if k is not None:
                out = out + p * float(values[k])
        return out


@dataclass
class PolyVariable:
    """Unknown polynomial of bounded degree; one symbol per basis monomial."""

    name: str
    nvars: int
    degree: int
    start: int
    monomials: list

    @property
    def coefficient_indices(self) -> slice:
        return slice(self.start, self.start + len(self.monomials))

    @property
    def expr(self) -> PolyExpr:
        return PolyExpr(self.nvars, {self.start + j: Polynomial(self.nvars, {m: 1.0}) for j, m in enumerate(self.monomials)})

    def __add__(self, other):
        return self.expr + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr - other

    def __rsub__(self, other):
        return other - self.expr if isinstance(other, PolyExpr) else PolyExpr.lift(other, self.nvars) - self.expr

    def __neg__(self):
        return -self.expr

    def __mul__(self, other):
        return self.expr * other

    __rmul__ = __mul__

    def lie(self, f):
        return self.expr.lie(f)

    def compose(self, f):
        return self.expr.compose(f)


@dataclass
class ScalarVariable:
    name: str
    nvars: int
    index: int
    nonneg: bool = False

    @property
    def expr(self) -> PolyExpr:
        return PolyExpr(self.nvars, {self.index: Polynomial.constant(self.nvars, 1.0)})

    def __add__(self, other):
        return self.expr + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr - other

    def __rsub__(self, other):
        return PolyExpr.lift(other, self.nvars) - self.expr

    def __neg__(self):
        return -self.expr

    def __mul__(self, other):
        return self.expr * other

    __rmul__ = __mul__


@dataclass
class GramBlock:
    constraint: int
    multiplier: int  # 0 for s_0, i for the multiplier of g_i
    monomials: list
    g: Polynomial

    @property
    def side(self) -> int:
        return len(self.monomials)

    @property
    def size(self) -> int:
        return self.side * (self.side + 1) // 2


@dataclass
class _Constraint:
    name: str
    expr: PolyExpr
    budget: int
    blocks: list  # indices into SosProgram.gram_blocks
    rows: list  # monomials, one equality row each


@dataclass
class SosProgram:
    """Symbolic SOS program: unknown polynomials, scalars, Putinar constraints."""

    nvars: int
    poly_vars: list = field(default_factory=list)
    scalar_vars: list = field(default_factory=list)
    gram_blocks: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: dict | None = None
    nsymbols: int = 0

    def __post_init__(self):
        if self.nvars < 1:
            raise ValueError("nvars must be >= 1")

    def variable(self, name: str):
        for v in self.poly_vars + self.scalar_vars:
            if v.name == name:
                return v
        raise KeyError(f"unknown variable {name!r}")

    @property
    def n_equalities(self) -> int:
        return sum(len(c.rows) for c in self.constraints)

    @property
    def decision_dimension(self) -> int:
        return self.nsymbols + sum(b.size for b in self.gram_blocks)


def new_program(nvars: int) -> SosProgram:
    return SosProgram(nvars)


def _check_name(prog: SosProgram, name: str):
    if any(v.name == name for v in prog.poly_vars + prog.scalar_vars):
        raise ValueError(f"variable name {name!r} already used")


def add_poly_var(prog: SosProgram, name: str, degree: int) -> PolyVariable:
    """Register an unknown polynomial with ``C(n + degree, n)`` free coefficients."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    _check_name(prog, name)
    mons = basis(prog.nvars, degree)
    v = PolyVariable(name, prog.nvars, degree, prog.nsymbols, mons)
    prog.nsymbols += len(mons)
    prog.poly_vars.append(v)
    return v


def add_scalar_var(prog: SosProgram, name: str, nonneg: bool = False) -> ScalarVariable:
    _check_name(prog, name)
    v = ScalarVariable(name, prog.nvars, prog.nsymbols, nonneg)
    prog.nsymbols += 1
    prog.scalar_vars.append(v)
    return v


def _inequalities(X) -> list[Polynomial]:
    if isinstance(X, SemialgebraicSet):
        return list(X.inequalities)
    return list(X)


def add_putinar_constraint(prog: SosProgram, expr, X, degree_budget: int, name: str | None = None) -> int:
    """Require ``expr >= 0`` on X through a Putinar certificate.

    Parameters
    ----------
    expr : PolyExpr, PolyVariable or Polynomial
        Affine in the program's unknowns.
    X : SemialgebraicSet or sequence of Polynomial
        The inequalities ``g_i >= 0`` describing the set.
    degree_budget : int
        Even bound on the degree of both sides of the identity.

    Returns
    -------
    int
        Constraint id.
    """
    expr = PolyExpr.lift(expr, prog.nvars)
    if expr.nvars != prog.nvars:
        raise ValueError("expression has the wrong number of variables")
    if degree_budget < 0 or degree_budget % 2:
        raise ValueError(f"degree budget must be a nonnegative even integer, got {degree_budget}")
    if expr.degree > degree_budget:
        raise ValueError(f"expression degree {expr.degree} exceeds budget {degree_budget}")
    cid = len(prog.constraints)
    rows = basis(prog.nvars, degree_budget)
    blocks = []
    one = Polynomial.constant(prog.nvars, 1.0)
    for i, g in enumerate([one] + _inequalities(X)):
        half = (degree_budget - max(g.degree, 0)) // 2
        if half < 0:
            continue
        prog.gram_blocks.append(GramBlock(cid, i, basis(prog.nvars, half), g))
        blocks.append(len(prog.gram_blocks) - 1)
    prog.constraints.append(_Constraint(name or f"c{cid}", expr, degree_budget, blocks, rows))
    return cid


def set_objective(prog: SosProgram, terms: Mapping[str, object]) -> None:
    """Linear objective, e.g. ``{"w": moment_vector, "eps": volume}``.

    Poly variables take a coefficient vector in their basis order, scalar
    variables a number.  An empty mapping gives a feasibility problem.
    """
    obj = {}
    for name, coef in terms.items():
        v = prog.variable(name)
        if isinstance(v, PolyVariable):
            coef = np.asarray(coef, dtype=float)
            if coef.shape != (len(v.monomials),):
                raise ValueError(f"objective for {name!r} needs {len(v.monomials)} entries, got {coef.shape}")
        else:
            coef = float(coef)
        obj[name] = coef
    prog.objective = obj


@dataclass
class ConicProblem:
    """``min c'x  s.t.  A x = b,  x in K`` with K a product of cones.

    ``cones`` lists ``(kind, dim)`` in column order; kind is ``"free"``,
    ``"nonneg"`` or ``"psd"`` (dim is the matrix side; the block occupies
    ``dim*(dim+1)/2`` columns in `svec` layout).
    """

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: list
    symbol_columns: np.ndarray | None = None
    gram_offsets: list | None = None

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    def blocks(self):
        """Yield ``(kind, dim, slice)`` for each cone."""
        start = 0
        for kind, dim in self.cones:
            size = dim * (dim + 1) // 2 if kind == "psd" else dim
            yield kind, dim, slice(start, start + size)
            start += size

    def psd_dims(self) -> list[int]:
        return [d for k, d in self.cones if k == "psd"]


def _symbol_layout(prog: SosProgram):
    """Columns: free symbols first (registration order), then nonneg scalars."""
    nonneg = {v.index for v in prog.scalar_vars if v.nonneg}
    free = [s for s in range(prog.nsymbols) if s not in nonneg]
    order = free + sorted(nonneg)
    cols = np.empty(prog.nsymbols, dtype=int)
    cols[order] = np.arange(prog.nsymbols)
    return cols, len(free), len(nonneg)


def to_conic(prog: SosProgram) -> ConicProblem:
    """Assemble ``c, A, b`` and the cone list for the compiled program."""
    if prog.objective is None:
        raise ValueError("objective not set; use set_objective (empty mapping for feasibility)")
    cols, nfree, nnonneg = _symbol_layout(prog)
    offsets = []
    pos = prog.nsymbols
    for blk in prog.gram_blocks:
        offsets.append(pos)
        pos += blk.size
    ncols = pos

    rows_i, cols_j, vals = [], [], []
    b = []
    row0 = 0
    for con in prog.constraints:
        index = {m: row0 + r for r, m in enumerate(con.rows)}
        # expression side: + coefficient of each symbol
        for k, p in con.expr.parts.items():
            if k is None:
                continue
            for m, coef in p.terms.items():
                rows_i.append(index[m])
                cols_j.append(cols[k])
                vals.append(coef)
        rhs = np.zeros(len(con.rows))
        for m, coef in con.expr.constant_part().terms.items():
            rhs[index[m] - row0] = -coef
        # certificate side: - sum over Gram entries
        for bi in con.blocks:
            blk = prog.gram_blocks[bi]
            z = blk.monomials
            ti, tj = np.tril_indices(len(z))
            scale = np.where(ti == tj, 1.0, SQRT2)
            for e, (a, c2) in enumerate(zip(ti, tj)):
                zz = tuple(p + q for p, q in zip(z[a], z[c2]))
                for gm, gc in blk.g.terms.items():
                    m = tuple(p + q for p, q in zip(zz, gm))
                    rows_i.append(index[m])
                    cols_j.append(offsets[bi] + e)
                    vals.append(-scale[e] * gc)
        b.append(rhs)
        row0 += len(con.rows)

    A = sp.csr_matrix((vals, (rows_i, cols_j)), shape=(row0, ncols))
    A.sum_duplicates()
    c = np.zeros(ncols)
    for name, coef in prog.objective.items():
        v = prog.variable(name)
        if isinstance(v, PolyVariable):
            c[cols[v.start:v.start + len(v.monomials)]] += coef
        else:
            c[cols[v.index]] += coef
    cones = []
    if nfree:
        cones.append(("free", nfree))
    if nnonneg:
        cones.append(("nonneg", nnonneg))
    cones += [("psd", blk.side) for blk in prog.gram_blocks]
    return ConicProblem(c, A, np.concatenate(b) if b else np.zeros(0), cones, cols, offsets)


def extract(prog: SosProgram, problem: ConicProblem, x: np.ndarray) -> dict:
    """Read unknown polynomials and scalars out of a primal vector."""
    x = np.asarray(x, dtype=float)
    out = {}
    for v in prog.poly_vars:
        out[v.name] = Polynomial.from_coefficients(prog.nvars, v.monomials, x[problem.symbol_columns[v.start:v.start + len(v.monomials)]])
    for v in prog.scalar_vars:
        out[v.name] = float(x[problem.symbol_columns[v.index]])
    return out


def gram_matrices(prog: SosProgram, problem: ConicProblem, x: np.ndarray) -> list[np.ndarray]:
    return [smat(x[off:off + blk.size]) for off, blk in zip(problem.gram_offsets, prog.gram_blocks)]


class AffineRescaling:
    """Coordinate change ``x = center + scale * y`` (per-coordinate scale).

    Pulls polynomials and vector fields into the ``y`` coordinates where the
    set's bounding box becomes ``[-1, 1]^n``, and pushes solutions back.
    """

    def __init__(self, center, scale):
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")
        self.nvars = len(self.center)

    @classmethod
    def from_set(cls, X: SemialgebraicSet) -> "AffineRescaling":
        lo, hi = X.bounding_box()
        return cls((lo + hi) / 2, (hi - lo) / 2)

    @property
    def jacobian(self) -> float:
        """``|det dx/dy|``, the volume factor."""
        return float(np.prod(self.scale))

    def _forward_map(self) -> PolynomialMap:
        n = self.nvars
        return PolynomialMap([Polynomial.constant(n, c) + Polynomial.variable(n, i + 1) * s
                              for i, (c, s) in enumerate(zip(self.center, self.scale))])

    def _inverse_map(self) -> PolynomialMap:
        n = self.nvars
        return PolynomialMap([(Polynomial.variable(n, i + 1) - c) * (1.0 / s)
                              for i, (c, s) in enumerate(zip(self.center, self.scale))])

    def pull(self, p: Polynomial) -> Polynomial:
        """``p(center + scale*y)`` as a polynomial in y."""
        return compose(p, self._forward_map())

    def push(self, q: Polynomial) -> Polynomial:
        """``q((x - center)/scale)`` as a polynomial in x."""
        return compose(q, self._inverse_map())

    def pull_field(self, f: PolynomialMap) -> PolynomialMap:
        """Vector field in y: ``f(center + scale*y) / scale``."""
        return PolynomialMap([self.pull(fi) * (1.0 / s) for fi, s in zip(f, self.scale)], self.nvars)

    def pull_map(self, f: PolynomialMap) -> PolynomialMap:
        """Discrete map in y: ``(f(center + scale*y) - center) / scale``."""
        return PolynomialMap([(self.pull(fi) - c) * (1.0 / s) for fi, c, s in zip(f, self.center, self.scale)], self.nvars)

    def to_y(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def to_x(self, y):
        return self.center + self.scale * np.asarray(y, dtype=float)
