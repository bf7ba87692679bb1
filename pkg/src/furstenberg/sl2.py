"""Floating-point geometry of PSL(2,R) and its action on the projective line.

Points of the projective line are plain floats in [0, pi): the angle of a
representative unit vector (cos x, sin x).  Group elements are 2x2 real
matrices with unit determinant, identified up to sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import DET_RENORM_TOL, LOG_DOMAIN_RADIUS, NEAR_ROTATION_TOL
from .errors import NearRotation, OutsideLogDomain

PI = math.pi
HALF_PI = 0.5 * math.pi


def reduce_angle(x):
    """Reduce an angle (or array of angles) into [0, pi)."""
    r = np.mod(x, PI)
    if np.ndim(r) == 0:
        r = float(r)
        return 0.0 if r >= PI else r
    return np.where(r >= PI, 0.0, r)


def wrap_diff(x):
    """Signed representative of an angle difference in [-pi/2, pi/2)."""
    return np.mod(np.asarray(x) + HALF_PI, PI) - HALF_PI


def circle_distance(x, y):
    """Distance on R/piZ."""
    d = np.abs(wrap_diff(np.asarray(x) - np.asarray(y)))
    return float(d) if np.ndim(d) == 0 else d


def perp(x: float) -> float:
    return reduce_angle(x + HALF_PI)


@dataclass(frozen=True)
class GroupElement:
    """A unit-determinant 2x2 matrix standing for an element of PSL(2,R)."""

    m11: float
    m12: float
    m21: float
    m22: float

    @classmethod
    def from_matrix(cls, m) -> "GroupElement":
        m = np.asarray(m, dtype=float)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det <= 0:
            raise ValueError(f"matrix has non-positive determinant {det}")
        m = _renormalise(m, det)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.m22, -self.m12, -self.m21, self.m11)

    def transpose(self) -> "GroupElement":
        return GroupElement(self.m11, self.m21, self.m12, self.m22)

    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    def norm(self) -> float:
        """Operator norm (largest singular value)."""
        _, lam, _ = _cartan_params(self.m11, self.m12, self.m21, self.m22)
        return max(float(lam), 1.0)


def _renormalise(m: np.ndarray, det: float | None = None) -> np.ndarray:
    """Divide by sqrt(det) when the drift exceeds both the tolerance and the rounding noise of det itself."""
    if det is None:
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    noise = 8.0 * np.finfo(float).eps * (abs(m[0, 0] * m[1, 1]) + abs(m[0, 1] * m[1, 0]))
    if abs(det - 1.0) > max(DET_RENORM_TOL, noise):
        m = m / math.sqrt(det)
    return m


def rotation(t: float) -> GroupElement:
    c, s = math.cos(t), math.sin(t)
    return GroupElement(c, -s, s, c)


def diagonal(lam: float) -> GroupElement:
    return GroupElement(lam, 0.0, 0.0, 1.0 / lam)


def compose(elements: Sequence[GroupElement]) -> GroupElement:
    m = np.eye(2)
    for g in elements:
        m = _renormalise(m @ g.matrix)
    return GroupElement.from_matrix(m)


def _cartan_params(a, b, c, d):
    """Angles and singular value of [[a, b], [c, d]] = R(t1) diag(l, 1/l) R(-t2).

    Works elementwise on arrays.  Angles are returned unreduced.
    """
    e = 0.5 * (a + d)
    f = 0.5 * (a - d)
    g = 0.5 * (c + b)
    h = 0.5 * (c - b)
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    a1 = np.arctan2(g, f)
    a2 = np.arctan2(h, e)
    return 0.5 * (a2 + a1), q + r, 0.5 * (a1 - a2)


def batch_cartan(m: np.ndarray):
    """Cartan parameters for a stack of matrices of shape (..., 2, 2).

    Returns (theta1, lam, theta2) with angles reduced into [0, pi).
    """
    t1, lam, t2 = _cartan_params(m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1])
    return reduce_angle(t1), lam, reduce_angle(t2)


@dataclass(frozen=True)
class CartanForm:
    """g = R(theta1) diag(lam, 1/lam) R(-theta2) with lam > 1."""

    theta1: float
    lam: float
    theta2: float

    @property
    def b_plus(self) -> float:
        return self.theta1

    @property
    def b_minus(self) -> float:
        return perp(self.theta2)

    def reconstruct(self) -> GroupElement:
        return compose([rotation(self.theta1), diagonal(self.lam), rotation(-self.theta2)])


def cartan_decompose(g: GroupElement) -> CartanForm:
    t1, lam, t2 = _cartan_params(g.m11, g.m12, g.m21, g.m22)
    if lam <= 1.0 + NEAR_ROTATION_TOL:
        raise NearRotation(f"operator norm {lam!r} too close to 1 for a unique decomposition")
    return CartanForm(reduce_angle(float(t1)), float(lam), reduce_angle(float(t2)))


def act(g: GroupElement, x: float) -> float:
    """Projective action in the angle chart."""
    c, s = math.cos(x), math.sin(x)
    return reduce_angle(math.atan2(g.m21 * c + g.m22 * s, g.m11 * c + g.m12 * s))


def batch_act(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    c, s = np.cos(x), np.sin(x)
    return reduce_angle(np.arctan2(m[..., 1, 0] * c + m[..., 1, 1] * s, m[..., 0, 0] * c + m[..., 0, 1] * s))


def act_derivative(g: GroupElement, x: float) -> float:
    """Derivative of x -> act(g, x); equals 1 / |g v|^2 for the unit vector v at x."""
    c, s = math.cos(x), math.sin(x)
    w0 = g.m11 * c + g.m12 * s
    w1 = g.m21 * c + g.m22 * s
    return 1.0 / (w0 * w0 + w1 * w1)


@dataclass(frozen=True)
class LieVector:
    """Trace-zero matrix c1*E1 + c2*E2 + c3*E3, with E3 generating rotations."""

    c1: float
    c2: float
    c3: float

    @classmethod
    def from_array(cls, v) -> "LieVector":
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c1, self.c2 - self.c3], [self.c2 + self.c3, -self.c1]])

    def norm(self) -> float:
        return math.sqrt(self.c1 ** 2 + self.c2 ** 2 + self.c3 ** 2)

    def __add__(self, other: "LieVector") -> "LieVector":
        return LieVector(self.c1 + other.c1, self.c2 + other.c2, self.c3 + other.c3)

    def __mul__(self, s: float) -> "LieVector":
        return LieVector(s * self.c1, s * self.c2, s * self.c3)

    __rmul__ = __mul__


E1 = LieVector(1.0, 0.0, 0.0)
E2 = LieVector(0.0, 1.0, 0.0)
E3 = LieVector(0.0, 0.0, 1.0)


def _sinhc(z: float) -> float:
    return 1.0 + z * z / 6.0 + z ** 4 / 120.0 if abs(z) < 1e-4 else math.sinh(z) / z


def _sinc(z: float) -> float:
    return 1.0 - z * z / 6.0 + z ** 4 / 120.0 if abs(z) < 1e-4 else math.sin(z) / z


def exp_map(u: LieVector) -> GroupElement:
    # X^2 = delta * I for trace-zero X
    x = u.matrix
    delta = u.c1 ** 2 + u.c2 ** 2 - u.c3 ** 2
    if delta >= 0:
        s = math.sqrt(delta)
        m = math.cosh(s) * np.eye(2) + _sinhc(s) * x
    else:
        s = math.sqrt(-delta)
        m = math.cos(s) * np.eye(2) + _sinc(s) * x
    return GroupElement.from_matrix(m)


def log_map(g: GroupElement) -> LieVector:
    m = g.matrix
    if m[0, 0] + m[1, 1] < 0:
        m = -m
    tr = m[0, 0] + m[1, 1]
    # hyperbolic elements need translation length acosh(tr/2) within LOG_DOMAIN_RADIUS
    half = 0.5 * tr
    if half > 1.0 and math.acosh(half) > LOG_DOMAIN_RADIUS * (1 + 1e-12):
        raise OutsideLogDomain(f"trace {tr:.6g} outside the principal logarithm domain")
    if half > 1.0:
        s = math.acosh(half)
        x = (m - half * np.eye(2)) / _sinhc(s)
    else:
        s = math.acos(max(half, -1.0))
        x = (m - half * np.eye(2)) / _sinc(s)
    return LieVector(0.5 * (x[0, 0] - x[1, 1]), 0.5 * (x[0, 1] + x[1, 0]), 0.5 * (x[1, 0] - x[0, 1]))


def group_distance(a: GroupElement, b: GroupElement) -> float:
    """Metric proxy min(|I - a^-1 b|_F, |I + a^-1 b|_F)."""
    m = (a.inverse() @ b).matrix
    eye = np.eye(2)
    return float(min(np.linalg.norm(eye - m), np.linalg.norm(eye + m)))


def rho_form(b: float, v: LieVector) -> float:
    """Derivative at t = 0 of t -> phi(exp(t v) b)."""
    return v.c3 + v.c2 * math.cos(2.0 * b) - v.c1 * math.sin(2.0 * b)


@dataclass(frozen=True)
class ZeroArcs:
    """Arcs of length t centred on the zeros of b -> rho_b(v), and the min of |rho| outside."""

    centers: tuple
    length: float
    delta: float

    def contains(self, x: float) -> bool:
        return any(circle_distance(x, c) <= 0.5 * self.length for c in self.centers)


def rho_zero_arcs(v: LieVector, t: float) -> ZeroArcs:
    n = v.norm()
    if n == 0:
        raise ValueError("zero Lie vector")
    v = v * (1.0 / n)
    # rho_b(v) = c3 + A cos(2b + psi)
    amp = math.hypot(v.c1, v.c2)
    psi = math.atan2(v.c1, v.c2)
    centers = []
    if amp > 0 and amp >= abs(v.c3):
        w = math.acos(max(-1.0, min(1.0, -v.c3 / amp)))
        for z in {w, -w}:
            centers.append(reduce_angle(0.5 * (z - psi)))
        centers = sorted(set(round(c, 15) for c in centers))
    arcs = ZeroArcs(tuple(centers), t, 0.0)
    candidates = [reduce_angle(0.5 * (-psi)), reduce_angle(0.5 * (PI - psi))]
    for c in centers:
        candidates += [reduce_angle(c - 0.5 * t), reduce_angle(c + 0.5 * t)]
    outside = [x for x in candidates if not _strictly_inside(arcs, x)]
    delta = min(abs(rho_form(x, v)) for x in outside) if outside else 0.0
    return ZeroArcs(tuple(centers), t, float(delta))


def _strictly_inside(arcs: ZeroArcs, x: float) -> bool:
    return any(circle_distance(x, c) < 0.5 * arcs.length - 1e-12 for c in arcs.centers)


@dataclass(frozen=True)
class TaylorCheck:
    error: float
    bound_ratio: float
    aligned: bool
    within_radius: bool


def _chain_point(gs, us, b, i=None, w=None, s=0.0):
    """phi(g1 exp(u1) ... gn exp(un) b), optionally replacing u_i by s*w."""
    x = b
    for j in range(len(gs) - 1, -1, -1):
        u = us[j] if us is not None else None
        if i is not None and j == i:
            u = w * s
        if u is not None:
            x = act(exp_map(u), x)
        x = act(gs[j], x)
    return x


def taylor_linearization_check(gs, us, b: float, r: float, t: float = 0.1, fd_step: float = 1e-5) -> TaylorCheck:
    """Compare phi(g1 exp(u1) ... gn exp(un) b) with its first-order expansion in the u_i."""
    n = len(gs)
    prefix = []
    acc = GroupElement.identity()
    for g in gs:
        acc = acc @ g
        prefix.append(acc)
    within = all(u.norm() <= prefix[i].norm() ** 2 * r * (1 + 1e-12) for i, u in enumerate(us))
    aligned = True
    for i in range(n - 1):
        try:
            bp = cartan_decompose(gs[i]).b_plus
            bm = cartan_decompose(gs[i + 1]).b_minus
        except NearRotation:
            aligned = False
            continue
        if circle_distance(bp, bm) <= t:
            aligned = False
    x = _chain_point(gs, us, b)
    base = act(prefix[-1], b)
    s = base
    for i, u in enumerate(us):
        un = u.norm()
        if un == 0:
            continue
        w = u * (1.0 / un)
        fp = _chain_point(gs, None, b, i, w, fd_step)
        fm = _chain_point(gs, None, b, i, w, -fd_step)
        s += un * float(wrap_diff(fp - fm)) / (2.0 * fd_step)
    err = abs(float(wrap_diff(x - s)))
    scale = prefix[-1].norm() ** 2 * r * r
    return TaylorCheck(err, err / scale if scale > 0 else 0.0, aligned, within)


def taylor_slope(gs, directions, b: float, radii) -> float:
    """Least-squares log-log slope of the linearization error for u_i = r * directions[i]."""
    errs = [taylor_linearization_check(gs, [d * r for d in directions], b, r).error for r in radii]
    return float(np.polyfit(np.log(radii), np.log(errs), 1)[0])
