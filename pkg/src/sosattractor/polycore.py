"""Sparse multivariate polynomials over the reals.

Polynomials are stored as a mapping ``exponent tuple -> float`` with no
zero coefficients.  Monomials are ordered graded-lexicographically with the
constant monomial first, so ``basis(2, 2)`` is ``[1, x1, x2, x1^2, x1*x2,
x2^2]``.
"""

from __future__ import annotations

import re
from itertools import combinations_with_replacement
from math import comb
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Polynomial",
    "PolynomialMap",
    "PolynomialSyntaxError",
    "parse_polynomial",
    "basis",
    "grlex_key",
    "evaluate",
    "multiply",
    "differentiate",
    "lie_derivative",
    "compose",
]

Monomial = tuple  # tuple[int, ...], one exponent per variable


def grlex_key(m: Monomial):
    """Sort key for graded lexicographic order (constant first, x1 > x2)."""
    return (sum(m), tuple(-e for e in m))


def basis(nvars: int, max_degree: int) -> list[Monomial]:
    """All monomials in `nvars` variables of degree <= `max_degree`, grlex.

    >>> basis(2, 2)
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    """
    if nvars < 1:
        raise ValueError("nvars must be >= 1")
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    out = []
    for d in range(max_degree + 1):
        # combinations of variable indices with repetition come out in
        # lexicographic order of indices, i.e. descending exponent tuples
        for idx in combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in idx:
                e[i] += 1
            out.append(tuple(e))
    assert len(out) == comb(nvars + max_degree, nvars)
    return out


class Polynomial:
    """Real polynomial in ``nvars`` variables ``x1..xn``.

    Parameters
    ----------
    nvars : int
        Number of variables.
    terms : mapping, optional
        ``{exponent tuple: coefficient}``.  Zero coefficients are dropped.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Monomial, float] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        self.nvars = int(nvars)
        clean = {}
        if terms:
            for m, c in terms.items():
                m = tuple(int(e) for e in m)
                if len(m) != nvars:
                    raise ValueError(f"monomial {m} has length {len(m)}, expected {nvars}")
                if any(e < 0 for e in m):
                    raise ValueError(f"negative exponent in {m}")
                c = float(c)
                if c != 0.0:
                    clean[m] = clean.get(m, 0.0) + c
            clean = {m: c for m, c in clean.items() if c != 0.0}
        self.terms = clean

    # construction helpers
    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        """The coordinate polynomial ``x_i`` (1-based index)."""
        if not 1 <= i <= nvars:
            raise ValueError(f"variable index {i} out of range 1..{nvars}")
        e = [0] * nvars
        e[i - 1] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def from_coefficients(cls, nvars: int, monomials: Sequence[Monomial], coeffs) -> "Polynomial":
        coeffs = np.asarray(coeffs, dtype=float)
        if len(monomials) != len(coeffs):
            raise ValueError("monomial list and coefficient vector differ in length")
        return cls(nvars, {m: c for m, c in zip(monomials, coeffs.tolist())})

    # queries
    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, m: Monomial) -> float:
        return self.terms.get(tuple(m), 0.0)

    def coefficients(self, monomials: Sequence[Monomial]) -> np.ndarray:
        """Coefficient vector in the given monomial order."""
        return np.array([self.terms.get(m, 0.0) for m in monomials])

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.terms.items(), key=lambda t: grlex_key(t[0]))

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # arithmetic
    def _check(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise ValueError(f"dimension mismatch: {self.nvars} vs {other.nvars} variables")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = float(other)
            return Polynomial(self.nvars, {m: c * other for m, c in self.terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        return multiply(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("power must be a nonnegative integer")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.to_string()!r})"

    def __str__(self):
        return self.to_string()

    def to_string(self) -> str:
        """Render in the expression grammar accepted by `parse_polynomial`.

        Coefficients use ``repr(float)`` so that parsing the result gives
        back exactly the same polynomial.
        """
        if not self.terms:
            return "0"
        parts = []
        for k, (m, c) in enumerate(self.sorted_terms()):
            factors = [f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(m) if e]
            mag = abs(c)
            if factors:
                body = "*".join(factors) if mag == 1.0 else repr(mag) + "*" + "*".join(factors)
            else:
                body = repr(mag)
            if k == 0:
                parts.append("-" + body if c < 0 else body)
            else:
                parts.append((" - " if c < 0 else " + ") + body)
        return "".join(parts)


def _check_point(p: Polynomial, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.nvars,) and not (p.nvars == 0 and x.ndim == 0):
        raise ValueError(f"point dimension {x.shape[-1:] } does not match nvars={p.nvars}")
    return x


def evaluate(p: Polynomial, x):
    """Evaluate `p` at a point of shape ``(n,)`` or a batch of shape ``(N, n)``."""
    x = _check_point(p, x)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if not p.terms:
        out = np.zeros(pts.shape[0])
    else:
        exps = np.array(list(p.terms.keys()), dtype=int)
        coef = np.array(list(p.terms.values()))
        maxdeg = int(exps.max())
        # per-variable power tables: pw[i] has shape (N, maxdeg + 1)
        out = np.zeros(pts.shape[0])
        prod = np.ones((pts.shape[0], len(coef)))
        for i in range(p.nvars):
            col = exps[:, i]
            if not col.any():
                continue
            pw = pts[:, i:i + 1] ** np.arange(maxdeg + 1)
            prod *= pw[:, col]
        out = prod @ coef
    return float(out[0]) if single else out


def multiply(p: Polynomial, q: Polynomial) -> Polynomial:
    """Product of two polynomials."""
    p._check(q)
    terms: dict = {}
    for m1, c1 in p.terms.items():
        for m2, c2 in q.terms.items():
            m = tuple(a + b for a, b in zip(m1, m2))
            terms[m] = terms.get(m, 0.0) + c1 * c2
    return Polynomial(p.nvars, terms)


def differentiate(p: Polynomial, i: int) -> Polynomial:
    """Partial derivative with respect to ``x_i`` (1-based)."""
    if not 1 <= i <= p.nvars:
        raise ValueError(f"variable index {i} out of range 1..{p.nvars}")
    k = i - 1
    terms = {}
    for m, c in p.terms.items():
        if m[k]:
            dm = m[:k] + (m[k] - 1,) + m[k + 1:]
            terms[dm] = c * m[k]
    return Polynomial(p.nvars, terms)


def gradient(p: Polynomial) -> list[Polynomial]:
    return [differentiate(p, i) for i in range(1, p.nvars + 1)]


class PolynomialMap:
    """A vector of polynomials sharing the same variables."""

    __slots__ = ("nvars", "components")

    def __init__(self, components: Sequence[Polynomial], nvars: int | None = None):
        components = list(components)
        if nvars is None:
            if not components:
                raise ValueError("cannot infer nvars from an empty component list")
            nvars = components[0].nvars
        for c in components:
            if c.nvars != nvars:
                raise ValueError("all components must have the same nvars")
        self.nvars = nvars
        self.components = components

    @classmethod
    def parse(cls, exprs: Sequence[str], nvars: int) -> "PolynomialMap":
        return cls([parse_polynomial(e, nvars) for e in exprs], nvars)

    @property
    def is_square(self) -> bool:
        return len(self.components) == self.nvars

    @property
    def degree(self) -> int:
        return max((c.degree for c in self.components), default=-1)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __eq__(self, other):
        if not isinstance(other, PolynomialMap):
            return NotImplemented
        return self.nvars == other.nvars and self.components == other.components

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = [evaluate(c, x) for c in self.components]
        if x.ndim == 1:
            return np.array(vals)
        return np.stack(vals, axis=-1)

    def __repr__(self):
        return f"PolynomialMap({[c.to_string() for c in self.components]!r})"


def lie_derivative(p: Polynomial, f: PolynomialMap) -> Polynomial:
    """Directional derivative ``grad(p) . f``."""
    if not f.is_square or f.nvars != p.nvars:
        raise ValueError("vector field must be square with the polynomial's nvars")
    out = Polynomial(p.nvars)
    for i, fi in enumerate(f.components, start=1):
        d = differentiate(p, i)
        if d.terms and fi.terms:
            out = out + multiply(d, fi)
    return out


class _PowerCache:
    """Memoized powers of the components of a polynomial map."""

    def __init__(self, f: PolynomialMap):
        self.f = f
        self.cache: dict = {}

    def power(self, i: int, e: int) -> Polynomial:
        key = (i, e)
        if key not in self.cache:
            if e == 0:
                self.cache[key] = Polynomial.constant(self.f.nvars, 1.0)
            elif e == 1:
                self.cache[key] = self.f.components[i]
            else:
                half = self.power(i, e // 2)
                sq = multiply(half, half)
                self.cache[key] = multiply(sq, self.f.components[i]) if e % 2 else sq
        return self.cache[key]

    def monomial(self, m: Monomial) -> Polynomial:
        key = ("m", m)
        if key not in self.cache:
            result = Polynomial.constant(self.f.nvars, 1.0)
            for i, e in enumerate(m):
                if e:
                    result = multiply(result, self.power(i, e))
            self.cache[key] = result
        return self.cache[key]


def compose(p: Polynomial, f: PolynomialMap, _cache: _PowerCache | None = None) -> Polynomial:
    """Substitute ``x_i -> f_i(y)``, returning ``p(f(y))`` expanded."""
    if len(f) != p.nvars:
        raise ValueError(f"map has {len(f)} components, polynomial has {p.nvars} variables")
    cache = _cache if _cache is not None else _PowerCache(f)
    terms: dict = {}
    for m, c in p.terms.items():
        for mm, cc in cache.monomial(m).terms.items():
            terms[mm] = terms.get(mm, 0.0) + c * cc
    return Polynomial(f.nvars, terms)


# ---------------------------------------------------------------------------
# parsing

class PolynomialSyntaxError(ValueError):
    """Malformed polynomial expression; ``pos`` is the offending offset."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?P<idx>\d+))"
    r"|(?P<op>[-+*^()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise PolynomialSyntaxError(f"unexpected character {text[start]!r}", text, start)
        start = m.end() - len(m.group(0).lstrip())
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), start))
        elif m.group("var") is not None:
            tokens.append(("var", int(m.group("idx")), start))
        else:
            tokens.append(("op", m.group("op"), start))
        pos = m.end()
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int):
        self.text = text
        self.nvars = nvars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise PolynomialSyntaxError(msg, self.text, tok[2])

    def expr(self) -> Polynomial:
        negate = False
        if self.peek()[:2] == ("op", "-"):
            self.take()
            negate = True
        result = self.term()
        if negate:
            result = -result
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            t = self.term()
            result = result + t if op == "+" else result - t
        return result

    def term(self) -> Polynomial:
        result = self.factor()
        while self.peek()[:2] == ("op", "*"):
            self.take()
            result = result * self.factor()
        return result

    def factor(self) -> Polynomial:
        b = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.error("exponent must be a nonnegative integer literal", tok)
            b = b ** int(tok[1])
        return b

    def base(self) -> Polynomial:
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Polynomial.constant(self.nvars, float(val))
        if kind == "var":
            if not 1 <= val <= self.nvars:
                self.error(f"variable x{val} exceeds nvars={self.nvars}", tok)
            return Polynomial.variable(self.nvars, val)
        if kind == "op" and val == "(":
            inner = self.expr()
            close = self.take()
            if close[:2] != ("op", ")"):
                self.error("expected ')'", close)
            return inner
        self.error("expected a number, variable or '('", tok)

    def parse(self) -> Polynomial:
        result = self.expr()
        if self.peek()[0] != "end":
            self.error("unexpected trailing input")
        return result


def parse_polynomial(text: str, nvars: int) -> Polynomial:
    """Parse an expression such as ``"-0.8*x1 - 10*(x1^2-0.21)*x2"``.

    Variables are ``x1..xn``; operators ``+ - * ^`` and parentheses.
    Unary minus is accepted at the start of an expression (including just
    after an opening parenthesis).

    Raises
    ------
    PolynomialSyntaxError
        On malformed input, with the character offset of the problem.
    """
    if nvars < 1:
        raise ValueError("nvars must be >= 1")
    return _Parser(text, nvars).parse()
