"""Exact arithmetic over Q and real quadratic fields Q[sqrt d].

Used for heights, splitting-rate bounds, exact deduplication of random-walk
products, and the ping-pong certificates behind free-semigroup claims.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np
from sympy import factorint

from .constants import ENUMERATION_LIMIT
from .errors import (
    ArcsOverlap,
    DeterminantNotOne,
    ExplosionGuard,
    MixedFields,
    ParameterOutOfScope,
    ParseError,
)
from .sl2 import HALF_PI, circle_distance, reduce_angle

_SQRT_BITS = 96


def _squarefree(d: int):
    """Split d = s^2 * f with f square-free; returns (s, f)."""
    s, f = 1, 1
    for p, e in factorint(d).items():
        s *= p ** (e // 2)
        f *= p ** (e % 2)
    return s, f


def _sqrt_fraction(d: int) -> Fraction:
    """sqrt(d) to about 96 bits, as an exact rational."""
    return Fraction(math.isqrt(d << (2 * _SQRT_BITS)), 1 << _SQRT_BITS)


class ExactScalar:
    """The real number a + b*sqrt(d) with rational a, b and square-free d."""

    __slots__ = ("a", "b", "d")

    def __init__(self, a=0, b=0, d: int = 1):
        a = Fraction(a)
        b = Fraction(b)
        d = int(d)
        if d < 1:
            raise ValueError("d must be a positive integer")
        if b != 0 and d > 1:
            s, d = _squarefree(d)
            b *= s
        if d == 1:
            a, b = a + b, Fraction(0)
        if b == 0:
            d = 1
        self.a, self.b, self.d = a, b, d

    @classmethod
    def _make(cls, a: Fraction, b: Fraction, d: int) -> "ExactScalar":
        # d is already square-free here
        x = cls.__new__(cls)
        if b == 0:
            d = 1
        x.a, x.b, x.d = a, b, d
        return x

    # arithmetic
    def _field(self, other: "ExactScalar") -> int:
        if self.d == 1:
            return other.d
        if other.d == 1 or other.d == self.d:
            return self.d
        raise MixedFields(f"Q[sqrt {self.d}] and Q[sqrt {other.d}] cannot be combined")

    @staticmethod
    def _coerce(x) -> "ExactScalar":
        return x if isinstance(x, ExactScalar) else ExactScalar(x)

    def __add__(self, other):
        other = self._coerce(other)
        return ExactScalar._make(self.a + other.a, self.b + other.b, self._field(other))

    __radd__ = __add__

    def __neg__(self):
        return ExactScalar._make(-self.a, -self.b, self.d)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        d = self._field(other)
        return ExactScalar._make(self.a * other.a + self.b * other.b * d, self.a * other.b + self.b * other.a, d)

    __rmul__ = __mul__

    def conjugate(self) -> "ExactScalar":
        return ExactScalar._make(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.b * self.b * self.d

    def inverse(self) -> "ExactScalar":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("inverse of zero")
        return ExactScalar._make(self.a / n, -self.b / n, self.d)

    def __truediv__(self, other):
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __eq__(self, other):
        if not isinstance(other, ExactScalar):
            try:
                other = ExactScalar(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self.a == other.a and self.b == other.b and self.d == other.d

    def __hash__(self):
        return hash((self.a, self.b, self.d))

    def sign(self) -> int:
        """Exact sign of a + b sqrt(d)."""
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sb == 0 or sa == sb:
            return sa or sb
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with b^2 d
        return sa if self.a * self.a > self.b * self.b * self.d else -sa

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def __float__(self):
        if self.b == 0:
            return float(self.a)
        return float(self.a + self.b * _sqrt_fraction(self.d))

    def __repr__(self):
        return f"ExactScalar({self})"

    def __str__(self):
        if self.b == 0:
            return _fmt_rational(self.a)
        op = "+" if self.b > 0 else "-"
        return f"{_fmt_rational(self.a)}{op}{_fmt_rational(abs(self.b))}*sqrt({self.d})"

    @classmethod
    def parse(cls, text: str) -> "ExactScalar":
        m = _SCALAR_RE.fullmatch(text.strip())
        if not m:
            raise ParseError(f"cannot parse exact scalar {text!r}")
        a = Fraction(m.group("a"))
        if m.group("b") is None:
            return cls(a)
        b = Fraction(m.group("b"))
        if m.group("op") == "-":
            b = -b
        return cls(a, b, int(m.group("d")))


_RAT = r"-?\d+(?:/[1-9]\d*)?"
_SCALAR_RE = re.compile(rf"(?P<a>{_RAT})(?:(?P<op>[+-])(?P<b>\d+(?:/[1-9]\d*)?)\*sqrt\((?P<d>[1-9]\d*)\))?")


def _fmt_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def height(x: ExactScalar) -> float:
    """Absolute height (a0 * prod max(1, |conjugate|))^(1/degree)."""
    if x.b == 0:
        return float(max(abs(x.a.numerator), x.a.denominator))
    # minimal polynomial X^2 - 2a X + (a^2 - b^2 d), made primitive over Z
    coeffs = [Fraction(1), -2 * x.a, x.norm()]
    den = reduce(math.lcm, (c.denominator for c in coeffs))
    ints = [int(c * den) for c in coeffs]
    g = reduce(math.gcd, ints)
    a0 = abs(ints[0] // g)
    roots = (float(x), float(x.conjugate()))
    return math.sqrt(a0 * max(1.0, abs(roots[0])) * max(1.0, abs(roots[1])))


class ExactMatrix:
    """A 2x2 matrix of ExactScalars with determinant exactly 1."""

    __slots__ = ("entries",)

    def __init__(self, m11, m12, m21, m22, check: bool = True):
        e = tuple(ExactScalar._coerce(x) for x in (m11, m12, m21, m22))
        self.entries = e
        if check and e[0] * e[3] - e[1] * e[2] != ExactScalar(1):
            raise DeterminantNotOne(f"determinant is {e[0] * e[3] - e[1] * e[2]}, not 1")

    @classmethod
    def from_rows(cls, rows) -> "ExactMatrix":
        return cls(rows[0][0], rows[0][1], rows[1][0], rows[1][1])

    @classmethod
    def parse(cls, rows) -> "ExactMatrix":
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ParseError("matrix must be a 2x2 array")
        return cls.from_rows([[ExactScalar.parse(str(v)) for v in r] for r in rows])

    @classmethod
    def identity(cls) -> "ExactMatrix":
        return cls(1, 0, 0, 1, check=False)

    def __matmul__(self, other: "ExactMatrix") -> "ExactMatrix":
        a, b, c, d = self.entries
        e, f, g, h = other.entries
        return ExactMatrix(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h, check=False)

    def inverse(self) -> "ExactMatrix":
        a, b, c, d = self.entries
        return ExactMatrix(d, -b, -c, a, check=False)

    def det(self) -> ExactScalar:
        a, b, c, d = self.entries
        return a * d - b * c

    def field(self) -> int:
        ds = {e.d for e in self.entries if e.d != 1}
        if len(ds) > 1:
            raise MixedFields(f"entries from several fields {sorted(ds)}")
        return ds.pop() if ds else 1

    def canonical(self) -> "ExactMatrix":
        """Representative of the PSL class: first nonzero of (m11, m21, m12, m22) positive."""
        a, b, c, d = self.entries
        for x in (a, c, b, d):
            s = x.sign()
            if s:
                return self if s > 0 else ExactMatrix(-a, -b, -c, -d, check=False)
        return self

    def key(self) -> tuple:
        return tuple((x.a.numerator, x.a.denominator, x.b.numerator, x.b.denominator, x.d) for x in self.canonical().entries)

    def to_float(self) -> np.ndarray:
        a, b, c, d = self.entries
        return np.array([[float(a), float(b)], [float(c), float(d)]])

    def rows(self) -> list:
        a, b, c, d = self.entries
        return [[str(a), str(b)], [str(c), str(d)]]

    def __eq__(self, other):
        return isinstance(other, ExactMatrix) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"ExactMatrix({self.rows()})"


def rotation_exact(sin: ExactScalar, cos: ExactScalar) -> ExactMatrix:
    return ExactMatrix(cos, -sin, sin, cos)


def theta_n(n: int):
    """(sin, cos) of the angle with rational sine 4n/(4n^2+1) and cosine (4n^2-1)/(4n^2+1)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    q = 4 * n * n + 1
    return ExactScalar(Fraction(4 * n, q)), ExactScalar(Fraction(4 * n * n - 1, q))


# ---------------------------------------------------------------- measures

def _exact_atoms(spec):
    atoms = []
    for atom in spec.atoms:
        if atom.exact is None:
            raise ParameterOutOfScope(f"atom {atom.label!r} has no exact representation")
        atoms.append((atom.exact, atom.weight))
    return atoms


def spec_field(spec) -> int:
    ds = {m.field() for m, _ in _exact_atoms(spec)} - {1}
    if len(ds) > 1:
        raise MixedFields(f"atoms from several fields {sorted(ds)}")
    return ds.pop() if ds else 1


@dataclass(frozen=True)
class HeightReport:
    entry_heights: tuple
    max_height: float
    field_degree: int
    log_m_mu_bound: float


def splitting_rate_bound(spec) -> HeightReport:
    """log of the bound 4^[K:Q] C^(8[K:Q]) on the splitting rate, C the largest entry height."""
    d = spec_field(spec)
    heights = tuple(height(x) for m, _ in _exact_atoms(spec) for x in m.entries)
    c = max(heights)
    deg = 1 if d == 1 else 2
    return HeightReport(heights, c, deg, deg * (math.log(4.0) + 8.0 * math.log(c)))


@dataclass(frozen=True)
class EntropyEnvelope:
    """H(mu^n)/n for n = 1..n_max, with a flag per n telling whether all words gave distinct products."""

    values: tuple
    all_distinct: tuple
    support_sizes: tuple


def exact_product_entropy(spec, n_max: int) -> EntropyEnvelope:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    atoms = _exact_atoms(spec)
    spec_field(spec)
    k = len(atoms)
    level = {ExactMatrix.identity().key(): (ExactMatrix.identity(), Fraction(1))}
    values, distinct, sizes = [], [], []
    for n in range(1, n_max + 1):
        if len(level) * k > ENUMERATION_LIMIT:
            raise ExplosionGuard(f"level {n} would hold {len(level) * k} products")
        nxt = {}
        for key in sorted(level):
            m, p = level[key]
            for g, w in atoms:
                prod = (m @ g).canonical()
                kk = prod.key()
                if kk in nxt:
                    nxt[kk] = (nxt[kk][0], nxt[kk][1] + p * w)
                else:
                    nxt[kk] = (prod, p * w)
        level = nxt
        probs = np.array([float(p) for _, p in level.values()])
        h = float(-(probs * np.log(probs)).sum())
        values.append(h / n)
        distinct.append(len(level) == k ** n)
        sizes.append(len(level))
    return EntropyEnvelope(tuple(values), tuple(distinct), tuple(sizes))


def word_collision_search(matrices: Sequence[ExactMatrix], max_len: int, trials: int, rng) -> tuple | None:
    """Randomly sample words of length <= max_len and look for two distinct words with equal product."""
    seen = {}
    for _ in range(trials):
        n = int(rng.integers(1, max_len + 1))
        word = tuple(int(i) for i in rng.integers(0, len(matrices), n))
        prod = reduce(lambda x, y: x @ y, (matrices[i] for i in word))
        key = prod.key()
        if key in seen and seen[key] != word:
            return seen[key], word
        seen.setdefault(key, word)
    return None


# ---------------------------------------------------------------- ping-pong

@dataclass(frozen=True)
class Arc:
    center: float
    radius: float
    label: str


@dataclass(frozen=True)
class PingPongCertificate:
    """Pairwise disjoint attracting and repelling arcs for a family of hyperbolic elements."""

    arcs: tuple
    epsilon: float
    min_gap: float

    @property
    def h_rw(self) -> float:
        return math.log(len(self.arcs) // 2)

    def verify(self) -> bool:
        for arc in self.arcs:
            if arc.radius > 0.5 * self.epsilon:
                return False
        for i, a in enumerate(self.arcs):
            for b in self.arcs[i + 1:]:
                if circle_distance(a.center, b.center) <= a.radius + b.radius:
                    return False
        return True


def pingpong_certify(elements: Sequence[tuple], epsilon: float) -> PingPongCertificate:
    """Certify free semigroup generation for R_t diag(l, 1/l) R_-t, given as (t, l) pairs."""
    if not 0 < epsilon < math.pi / 8:
        raise ValueError("epsilon must lie in (0, pi/8)")
    arcs = []
    for i, (theta, lam) in enumerate(elements):
        if lam <= 1:
            raise ValueError("each element needs lambda > 1")
        delta = math.atan(lam ** -2 / math.tan(0.5 * epsilon))
        if delta > 0.5 * epsilon:
            raise ArcsOverlap(f"attracting arc of element {i} has radius {delta:.6g} > epsilon/2", (f"+{i}", f"+{i}"))
        arcs.append(Arc(reduce_angle(theta), delta, f"+{i}"))
        arcs.append(Arc(reduce_angle(theta + HALF_PI), 0.5 * epsilon, f"-{i}"))
    gap = math.inf
    for i, a in enumerate(arcs):
        for b in arcs[i + 1:]:
            margin = circle_distance(a.center, b.center) - a.radius - b.radius
            if margin <= 0:
                raise ArcsOverlap(f"arcs {a.label} and {b.label} overlap", (a.label, b.label))
            gap = min(gap, margin)
    return PingPongCertificate(tuple(arcs), epsilon, gap)
