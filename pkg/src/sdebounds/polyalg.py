"""Exact sparse multivariate polynomials and polynomial SDE models.

Coefficients are :class:`fractions.Fraction` throughout; nothing in this
module touches floating point.  Terms are kept in a dict keyed by exponent
tuples and every public operation returns a fresh :class:`Polynomial`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

Exponent = tuple[int, ...]
Scalar = int | Fraction


class PolynomialError(ValueError):
    """Raised on malformed polynomial input or incompatible operands."""


class PolynomialSyntaxError(PolynomialError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def to_fraction(value) -> Fraction:
    """Convert ints, Fractions, decimal strings or floats to an exact Fraction.

    Floats are converted exactly (binary value), decimal strings such as
    ``"0.1"`` give the decimal value 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a coefficient")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def grlex_key(alpha: Exponent) -> tuple:
    """Sort key for graded lexicographic order: (1,0) comes before (0,1)."""
    return (sum(alpha), tuple(-a for a in alpha))


def _add_exp(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Polynomial in ``n`` variables with exact rational coefficients."""

    __slots__ = ("n", "_terms", "_hash")

    def __init__(self, n: int, terms: Mapping[Exponent, Scalar] | None = None):
        if n < 0:
            raise PolynomialError("number of variables must be nonnegative")
        clean: dict[Exponent, Fraction] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise PolynomialError(f"exponent {alpha} does not have {n} entries")
            if any(a < 0 for a in alpha):
                raise PolynomialError(f"negative exponent in {alpha}")
            c = to_fraction(c)
            if c:
                clean[alpha] = clean.get(alpha, Fraction(0)) + c
                if not clean[alpha]:
                    del clean[alpha]
        self.n = n
        self._terms = clean
        self._hash = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def _raw(cls, n: int, terms: dict[Exponent, Fraction]) -> "Polynomial":
        # trusted path: terms already exact and nonzero
        p = cls.__new__(cls)
        p.n = n
        p._terms = terms
        p._hash = None
        return p

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls._raw(n, {})

    @classmethod
    def constant(cls, n: int, c: Scalar) -> "Polynomial":
        c = to_fraction(c)
        return cls._raw(n, {(0,) * n: c} if c else {})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        if not 0 <= i < n:
            raise PolynomialError(f"variable index {i} out of range for n={n}")
        return cls._raw(n, {tuple(int(k == i) for k in range(n)): Fraction(1)})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: Scalar = 1) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): c})

    # -- basic properties -------------------------------------------------

    @property
    def terms(self) -> Mapping[Exponent, Fraction]:
        return MappingProxyType(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial reports 0 (check ``is_zero``)."""
        return max((sum(a) for a in self._terms), default=0)

    def coefficient(self, alpha: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(alpha), Fraction(0))

    def sorted_terms(self) -> list[tuple[Exponent, Fraction]]:
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]))

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self.n == other.n and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == Polynomial.constant(self.n, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({self.n}, {self.to_text()!r})"

    def __str__(self) -> str:
        return self.to_text()

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise PolynomialError(
                    f"dimension mismatch: {self.n} vs {other.n} variables")
            return other
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return Polynomial.constant(self.n, other)
        raise TypeError(f"unsupported operand {type(other).__name__}")

    def __add__(self, other) -> "Polynomial":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            s = out.get(alpha, 0) + c
            if s:
                out[alpha] = s
            else:
                out.pop(alpha, None)
        return Polynomial._raw(self.n, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._raw(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out: dict[Exponent, Fraction] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = _add_exp(a, b)
                out[key] = out.get(key, 0) + ca * cb
        return Polynomial._raw(self.n, {k: v for k, v in out.items() if v})

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if not isinstance(k, int) or isinstance(k, bool) or k < 0:
            raise PolynomialError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self.n, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def scale(self, c: Scalar) -> "Polynomial":
        c = to_fraction(c)
        if not c:
            return Polynomial.zero(self.n)
        return Polynomial._raw(self.n, {a: v * c for a, v in self._terms.items()})

    # -- calculus and evaluation -----------------------------------------

    def differentiate(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable ``i`` (0-based)."""
        if not 0 <= i < self.n:
            raise PolynomialError(f"variable index {i} out of range for n={self.n}")
        out = {}
        for alpha, c in self._terms.items():
            if alpha[i]:
                beta = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
                out[beta] = c * alpha[i]
        return Polynomial._raw(self.n, out)

    def gradient(self) -> list["Polynomial"]:
        return [self.differentiate(i) for i in range(self.n)]

    def evaluate(self, point: Sequence) -> Fraction:
        """Exact value at a rational point."""
        if len(point) != self.n:
            raise PolynomialError(f"point has {len(point)} entries, expected {self.n}")
        x = [to_fraction(v) for v in point]
        total = Fraction(0)
        for alpha, c in self._terms.items():
            term = c
            for xi, a in zip(x, alpha):
                if a:
                    term *= xi ** a
            total += term
        return total

    def evaluate_float(self, x):
        """Floating-point evaluation; ``x`` may be an array of shape (n, ...)."""
        total = 0.0
        for alpha, c in self._terms.items():
            term = float(c)
            for xi, a in zip(x, alpha):
                if a:
                    term = term * xi ** a
            total = total + term
        return total

    def substitute_affine(self, images: Sequence["Polynomial"]) -> "Polynomial":
        """Compose with ``x_i -> images[i]`` (images share a common ring)."""
        if len(images) != self.n:
            raise PolynomialError("need one image per variable")
        m = images[0].n
        out = Polynomial.zero(m)
        powers: dict[tuple[int, int], Polynomial] = {}
        for alpha, c in self._terms.items():
            term = Polynomial.constant(m, c)
            for i, a in enumerate(alpha):
                if a:
                    if (i, a) not in powers:
                        powers[(i, a)] = images[i] ** a
                    term = term * powers[(i, a)]
            out = out + term
        return out

    def divmod_by(self, g: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        """Multivariate division by a single divisor in grlex order."""
        g = self._coerce(g)
        if g.is_zero:
            raise ZeroDivisionError("division by the zero polynomial")
        lead_g, lead_c = max(g._terms.items(), key=lambda kv: grlex_key(kv[0]))
        q: dict[Exponent, Fraction] = {}
        r: dict[Exponent, Fraction] = {}
        p = Polynomial._raw(self.n, dict(self._terms))
        while not p.is_zero:
            lt, lc = max(p._terms.items(), key=lambda kv: grlex_key(kv[0]))
            if all(a >= b for a, b in zip(lt, lead_g)):
                shift = tuple(a - b for a, b in zip(lt, lead_g))
                factor = lc / lead_c
                q[shift] = q.get(shift, 0) + factor
                p = p - Polynomial.monomial(shift, factor) * g
            else:
                r[lt] = lc
                p = p - Polynomial._raw(self.n, {lt: lc})
        return (Polynomial(self.n, q), Polynomial(self.n, r))

    # -- text --------------------------------------------------------------

    def to_text(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            names = ["x"] if self.n == 1 else [f"x{i + 1}" for i in range(self.n)]
        if len(names) != self.n:
            raise PolynomialError("need one name per variable")
        if self.is_zero:
            return "0"
        parts = []
        for k, (alpha, c) in enumerate(self.sorted_terms()):
            sign = "-" if c < 0 else "+"
            c = abs(c)
            factors = []
            for name, a in zip(names, alpha):
                if a == 1:
                    factors.append(name)
                elif a > 1:
                    factors.append(f"{name}^{a}")
            if c != 1 or not factors:
                factors.insert(0, str(c))
            body = "*".join(factors)
            if k == 0:
                parts.append(body if sign == "+" else f"-{body}")
            else:
                parts.append(f" {sign} {body}")
        return "".join(parts)


# ---------------------------------------------------------------------------
# Functional API


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def poly_scale(p: Polynomial, c: Scalar) -> Polynomial:
    return p.scale(c)


def poly_pow(p: Polynomial, k: int) -> Polynomial:
    return p ** k


def differentiate(p: Polynomial, i: int) -> Polynomial:
    return p.differentiate(i)


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {name: i for i, name in enumerate(names)}
        if len(self.names) != len(names):
            raise PolynomialError("duplicate variable names")
        self.n = len(names)
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(text, i)
            if not m or m.end() == i:
                raise PolynomialSyntaxError(f"unexpected character {text[i]!r}", i)
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), start))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, value, where = self.take()
        if kind != "op" or value != op:
            raise PolynomialSyntaxError(f"expected {op!r}, found {value or 'end of input'!r}", where)

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, value, where = self.peek()
        if kind != "end":
            raise PolynomialSyntaxError(f"unexpected {value!r}", where)
        return p

    def expr(self) -> Polynomial:
        total = self.signed_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                t = self.signed_term()
                total = total + t if value == "+" else total - t
            else:
                return total

    def signed_term(self) -> Polynomial:
        negate = False
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                negate ^= value == "-"
            else:
                break
        t = self.term()
        return -t if negate else t

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.take()
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        p = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            kind, value, where = self.take()
            if kind == "op" and value == "-":
                raise PolynomialSyntaxError("negative exponent", where)
            if kind != "num" or not value.isdigit():
                raise PolynomialSyntaxError(
                    f"exponent must be a nonnegative integer, found {value or 'end of input'!r}", where)
            p = p ** int(value)
        return p

    def base(self) -> Polynomial:
        kind, value, where = self.take()
        if kind == "num":
            c = Fraction(value)
            k2, v2, w2 = self.peek()
            if k2 == "op" and v2 == "/":
                if not value.isdigit():
                    raise PolynomialSyntaxError("rational numerator must be an integer", where)
                self.take()
                k3, v3, w3 = self.take()
                if k3 != "num" or not v3.isdigit():
                    raise PolynomialSyntaxError("expected integer denominator", w3)
                if int(v3) == 0:
                    raise PolynomialSyntaxError("zero denominator", w3)
                c = Fraction(int(value), int(v3))
            return Polynomial.constant(self.n, c)
        if kind == "ident":
            if value not in self.names:
                raise PolynomialSyntaxError(f"unknown identifier {value!r}", where)
            return Polynomial.variable(self.n, self.names[value])
        if kind == "op" and value == "(":
            p = self.expr()
            self.expect_op(")")
            return p
        raise PolynomialSyntaxError(f"unexpected {value or 'end of input'!r}", where)


def parse_polynomial(text: str, names: Sequence[str]) -> Polynomial:
    """Parse ``text`` into an exact polynomial over the ordered variables ``names``.

    >>> parse_polynomial("1 - 2*x^3", ["x"]).terms[(3,)]
    Fraction(-2, 1)
    """
    return _Parser(text, list(names)).parse()


# ---------------------------------------------------------------------------
# SDE models

PolyMatrix = tuple[tuple[Polynomial, ...], ...]


def _matrix(rows, n_cols: int | None = None) -> PolyMatrix:
    out = tuple(tuple(rows[i]) for i in range(len(rows)))
    if n_cols is not None and any(len(r) != n_cols for r in out):
        raise PolynomialError("ragged polynomial matrix")
    return out


@dataclass(frozen=True)
class SdeModel:
    """Polynomial diffusion ``dX = b(X) dt + sigma(X) dW`` with support variety.

    ``a`` is the diffusion matrix ``sigma sigma^T``.  Build instances through
    :meth:`create`, which derives ``a`` and checks consistency.
    """

    n: int
    m: int
    b: tuple[Polynomial, ...]
    sigma: PolyMatrix | None
    a: PolyMatrix
    varieties: tuple[Polynomial, ...] = ()
    names: tuple[str, ...] = ()

    @classmethod
    def create(
        cls,
        b: Sequence[Polynomial],
        sigma: Sequence[Sequence[Polynomial]] | None = None,
        a: Sequence[Sequence[Polynomial]] | None = None,
        varieties: Iterable[Polynomial] = (),
        names: Sequence[str] | None = None,
    ) -> "SdeModel":
        b = tuple(b)
        n = len(b)
        if n == 0:
            raise PolynomialError("model needs at least one state variable")
        for p in b:
            if p.n != n:
                raise PolynomialError("drift entries must be polynomials in n variables")
        if sigma is None and a is None:
            raise PolynomialError("supply sigma or the diffusion matrix a")
        m = 0
        derived = None
        if sigma is not None:
            sigma = _matrix(sigma)
            if len(sigma) != n:
                raise PolynomialError("sigma must have n rows")
            m = len(sigma[0]) if sigma else 0
            sigma = _matrix(sigma, m)
            for row in sigma:
                for p in row:
                    if p.n != n:
                        raise PolynomialError("sigma entries must be polynomials in n variables")
            zero = Polynomial.zero(n)
            derived = tuple(
                tuple(sum((sigma[i][k] * sigma[j][k] for k in range(m)), zero) for j in range(n))
                for i in range(n))
        if a is not None:
            a = _matrix(a, n)
            if len(a) != n:
                raise PolynomialError("a must be n x n")
            for i in range(n):
                for j in range(n):
                    if a[i][j].n != n:
                        raise PolynomialError("a entries must be polynomials in n variables")
                    if a[i][j] != a[j][i]:
                        raise PolynomialError(f"diffusion matrix not symmetric at ({i}, {j})")
            if derived is not None and derived != a:
                raise PolynomialError("supplied a does not equal sigma sigma^T")
        else:
            a = derived
        varieties = tuple(varieties)
        for g in varieties:
            if g.n != n:
                raise PolynomialError("variety polynomials must have n variables")
            if g.is_zero:
                raise PolynomialError("zero polynomial does not define a variety")
        if names is None:
            names = ("x",) if n == 1 else tuple(f"x{i + 1}" for i in range(n))
        names = tuple(names)
        if len(names) != n:
            raise PolynomialError("need one name per variable")
        if sigma is None:
            m = n
        return cls(n=n, m=m, b=b, sigma=sigma, a=a, varieties=varieties, names=names)

    @property
    def generator_degree(self) -> int:
        """d_A = max over i, j of deg b_i and deg a_ij."""
        degs = [p.degree for p in self.b if not p.is_zero]
        degs += [p.degree for row in self.a for p in row if not p.is_zero]
        return max(degs, default=0)

    def with_varieties(self, varieties: Iterable[Polynomial]) -> "SdeModel":
        return SdeModel.create(self.b, self.sigma, self.a, varieties, self.names)


def apply_generator(h: Polynomial, model: SdeModel) -> Polynomial:
    """Return <grad h, b> + 1/2 <hess h, a> exactly."""
    if h.n != model.n:
        raise PolynomialError(f"dimension mismatch: h has {h.n} variables, model {model.n}")
    n = model.n
    out = Polynomial.zero(n)
    grad = h.gradient()
    for i in range(n):
        if not grad[i].is_zero:
            out = out + model.b[i] * grad[i]
    half = Fraction(1, 2)
    for i in range(n):
        if grad[i].is_zero:
            continue
        for j in range(n):
            if model.a[i][j].is_zero:
                continue
            hij = grad[i].differentiate(j)
            if not hij.is_zero:
                out = out + (model.a[i][j] * hij).scale(half)
    return out
