"""Probability measures on R/piZ and the detail calculus built on wrapped heat kernels.

The y-derivatives of the heat kernel are evaluated in closed form through
probabilists' Hermite polynomials:

    d^k/dy^k eta_y(x) = 2^-k y^-k He_2k(x / sqrt(y)) eta_y(x),

then wrapped onto the circle by summing over the lattice pi*Z.  L1 norms are
computed from the antiderivative of the convolved kernel, which is also a
Hermite closed form, so the only discretisation error comes from locating
sign changes.  Sign changes are located on a fine grid with quintic Hermite
interpolation.
"""

from __future__ import annotations

import io
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_hermitenorm

from .constants import (
    DEFAULT_GRID,
    DETAIL_CONST,
    EXACT_ATOM_LIMIT,
    KERNEL_SIGMAS,
    MAX_ORDER,
    WASSERSTEIN_GAP_CONST,
)
from .errors import GridMismatch
from .sl2 import PI, batch_act, reduce_angle

SQRT_2PI = math.sqrt(2.0 * math.pi)
_EDGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CircleMeasure:
    """Either a finite atom list or a uniform-grid density on [0, pi).

    Grid bin i is centred at i*pi/N and has width pi/N.
    """

    angles: np.ndarray | None = None
    weights: np.ndarray | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        if self.density is None:
            a = reduce_angle(np.asarray(self.angles, dtype=float).ravel())
            w = np.asarray(self.weights, dtype=float).ravel()
            if a.shape != w.shape:
                raise ValueError("angles and weights differ in length")
            if np.any(w < 0):
                raise ValueError("negative atom weight")
            order = np.argsort(a, kind="stable")
            object.__setattr__(self, "angles", a[order])
            object.__setattr__(self, "weights", w[order])
            total = w.sum()
        else:
            d = np.asarray(self.density, dtype=float).ravel()
            if np.any(d < 0):
                raise ValueError("negative grid density")
            n = d.size
            if n < 2 or n & (n - 1):
                raise ValueError("grid size must be a power of two")
            object.__setattr__(self, "density", d)
            total = d.sum() * PI / n
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"total mass {total!r} differs from 1")

    # constructors
    @classmethod
    def from_atoms(cls, angles, weights=None) -> "CircleMeasure":
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if weights is None:
            weights = np.full(angles.size, 1.0 / angles.size)
        weights = np.asarray(weights, dtype=float)
        return cls(angles=angles, weights=weights / weights.sum())

    @classmethod
    def from_density(cls, density) -> "CircleMeasure":
        d = np.asarray(density, dtype=float)
        return cls(density=d / (d.sum() * PI / d.size))

    @classmethod
    def point_mass(cls, x: float) -> "CircleMeasure":
        return cls.from_atoms([x])

    @classmethod
    def uniform(cls, n: int = DEFAULT_GRID) -> "CircleMeasure":
        return cls(density=np.full(n, 1.0 / PI))

    @classmethod
    def wrapped_gaussian(cls, center: float, sigma: float, n: int = DEFAULT_GRID) -> "CircleMeasure":
        """Wrapped normal law with standard deviation sigma, sampled at bin centres."""
        x = np.arange(n) * PI / n
        y = sigma * sigma
        return cls.from_density(_wrapped(lambda u: np.exp(-u * u / (2 * y)), x - center, math.sqrt(y), 8.0))

    @property
    def is_atomic(self) -> bool:
        return self.density is None

    @property
    def grid_size(self) -> int | None:
        return None if self.is_atomic else self.density.size

    def mass(self) -> float:
        if self.is_atomic:
            return float(self.weights.sum())
        return float(self.density.sum() * PI / self.density.size)

    def rotate(self, t: float) -> "CircleMeasure":
        if self.is_atomic:
            return CircleMeasure(angles=self.angles + t, weights=self.weights)
        n = self.density.size
        shift = t * n / PI
        if abs(shift - round(shift)) > 1e-9:
            raise GridMismatch("grid rotation must be by a whole number of bins")
        return CircleMeasure(density=np.roll(self.density, int(round(shift))))

    def pushforward(self, m: np.ndarray) -> "CircleMeasure":
        """Image of an atomic measure under the projective action of a 2x2 matrix."""
        if not self.is_atomic:
            raise GridMismatch("pushforward is defined for atomic measures")
        return CircleMeasure(angles=batch_act(np.asarray(m), self.angles), weights=self.weights)

    def bin_masses(self, n: int) -> np.ndarray:
        """Masses at the n bin centres; atoms are split linearly between the two nearest centres."""
        if not self.is_atomic:
            if self.density.size != n:
                raise GridMismatch(f"grid of size {self.density.size} used where {n} expected")
            return self.density * (PI / n)
        pos = self.angles * n / PI
        lo = np.floor(pos)
        frac = pos - lo
        lo = lo.astype(np.int64) % n
        out = np.bincount(lo, weights=self.weights * (1.0 - frac), minlength=n)
        out += np.bincount((lo + 1) % n, weights=self.weights * frac, minlength=n)
        return out

    # serialisation
    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.is_atomic:
            buf.write(f"# variant=atoms N={self.angles.size} mass={self.mass():.17g}\n")
            buf.write("angle,weight\n")
            for a, w in zip(self.angles, self.weights):
                buf.write(f"{a:.17g},{w:.17g}\n")
        else:
            buf.write(f"# variant=grid N={self.density.size} mass={self.mass():.17g}\n")
            buf.write("bin_index,density\n")
            for i, d in enumerate(self.density):
                buf.write(f"{i},{d:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CircleMeasure":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        # other comment lines (run provenance) are ignored
        header = next((ln for ln in lines if ln.startswith("#") and "variant=" in ln), None)
        if header is None:
            raise ValueError("missing measure header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        body = [ln for ln in lines if not ln.startswith("#")][1:]
        rows = np.array([[float(v) for v in ln.split(",")] for ln in body]).reshape(-1, 2)
        if meta.get("variant") == "atoms":
            return cls(angles=rows[:, 0], weights=rows[:, 1])
        if meta.get("variant") == "grid":
            density = np.zeros(int(meta["N"]))
            density[rows[:, 0].astype(int)] = rows[:, 1]
            return cls(density=density)
        raise ValueError(f"unknown measure variant {meta.get('variant')!r}")


def convolve_measures(a: CircleMeasure, b: CircleMeasure) -> CircleMeasure:
    """Law of X + Y mod pi for independent X ~ a, Y ~ b."""
    if a.is_atomic and b.is_atomic:
        ang = (a.angles[:, None] + b.angles[None, :]).ravel()
        w = (a.weights[:, None] * b.weights[None, :]).ravel()
        return CircleMeasure(angles=ang, weights=w)
    n = a.grid_size or b.grid_size
    if a.grid_size and b.grid_size and a.grid_size != b.grid_size:
        raise GridMismatch("grid sizes differ")
    m = _circular_convolve(a.bin_masses(n), b.bin_masses(n))
    return CircleMeasure.from_density(np.maximum(m, 0.0))


# ---------------------------------------------------------------- kernels

def _wrap_count(k: int, y: float) -> int:
    width = (math.sqrt(4 * k + 2) + KERNEL_SIGMAS + 1.0) * math.sqrt(y)
    return max(math.ceil(KERNEL_SIGMAS * math.sqrt(y) / PI) + 1, math.ceil(width / PI) + 1)


def _wrapped(f, u, sqrt_y, reach):
    jmax = math.ceil(reach * sqrt_y / PI) + 1
    out = np.zeros_like(np.asarray(u, dtype=float))
    for j in range(-jmax, jmax + 1):
        out = out + f(u + j * PI)
    return out


def _kernel_triplet(u, k: int, y: float, pre: float, wrap: bool):
    """Values of kappa = pre*He_2k(z)*g, its antiderivative and its derivative at offsets u.

    Here g(u) = exp(-z^2/2)/sqrt(2 pi y) with z = u/sqrt(y); pre carries 2^-k y^-k
    or the detail normalisation.
    """
    sy = math.sqrt(y)
    shifts = range(-_wrap_count(k, y), _wrap_count(k, y) + 1) if wrap else (0,)
    kap = np.zeros_like(u)
    ant = np.zeros_like(u)
    der = np.zeros_like(u)
    for j in shifts:
        z = (u + j * PI) / sy
        g = np.exp(-0.5 * z * z) / (SQRT_2PI * sy)
        kap += eval_hermitenorm(2 * k, z) * g
        if k >= 1:
            ant -= eval_hermitenorm(2 * k - 1, z) * g * sy
        der -= eval_hermitenorm(2 * k + 1, z) * g / sy
    return pre * kap, pre * ant, pre * der


@dataclass(frozen=True, eq=False)
class DerivativeKernel:
    """Samples of d^k/dy^k of the wrapped heat kernel at offsets j*pi/N."""

    k: int
    y: float
    samples: np.ndarray
    near_uniform: bool = False

    @property
    def n(self) -> int:
        return self.samples.size

    def l1_norm(self) -> float:
        return _l1_circular(*self._triplet(), PI / self.n)

    def _triplet(self):
        u = np.arange(self.n) * PI / self.n
        return _kernel_triplet(u, self.k, self.y, 2.0 ** -self.k * self.y ** -self.k, True)


_KERNEL_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def heat_kernel(k: int, y: float, n: int = DEFAULT_GRID) -> DerivativeKernel:
    """d^k/dy^k of the heat kernel on R/piZ at bandwidth y, sampled on an n-point grid."""
    if not 0 <= k <= MAX_ORDER:
        raise ValueError(f"order {k} outside [0, {MAX_ORDER}]")
    if not 0 < y <= 10:
        raise ValueError(f"bandwidth {y} outside (0, 10]")
    if n < 256:
        raise ValueError("grid must have at least 256 points")
    key = (k, float(y), n)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        return hit
    u = np.arange(n) * PI / n
    samples = _kernel_triplet(u, k, y, 2.0 ** -k * y ** -k, True)[0]
    flat = k == 0 and bool(np.all(np.abs(samples - 1.0 / PI) <= 1e-14))
    samples.setflags(write=False)
    kern = DerivativeKernel(k, float(y), samples, flat)
    with _CACHE_LOCK:
        _KERNEL_CACHE.setdefault(key, kern)
    return _KERNEL_CACHE[key]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values at the points i*pi/N of a function on the circle."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size

    def integral(self) -> float:
        return float(self.values.sum() * PI / self.n)


def _circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=a.size)


def convolve(a, b) -> GridFunction:
    """Circular convolution of measures and kernels, evaluated on the common grid."""
    na = a.n if isinstance(a, DerivativeKernel) else a.grid_size
    nb = b.n if isinstance(b, DerivativeKernel) else b.grid_size
    if na and nb and na != nb:
        raise GridMismatch(f"grid sizes {na} and {nb} differ")
    n = na or nb or DEFAULT_GRID
    h = PI / n

    def as_seq(x):
        if isinstance(x, DerivativeKernel):
            return np.asarray(x.samples), True
        return x.bin_masses(n), False

    sa, ka = as_seq(a)
    sb, kb = as_seq(b)
    out = _circular_convolve(sa, sb)
    if ka and kb:
        out = out * h
    elif not ka and not kb:
        out = out / h
    return GridFunction(out)


# ---------------------------------------------------------------- L1 norms

def _quintic_roots_and_values(F0, F1, D0, D1, S0, S1):
    """For each interval, find the zero of the derivative of the quintic Hermite interpolant.

    Inputs are end values of F, s*F' and s^2*F'' on the unit interval.  Returns
    the interpolated F at the zero.
    """
    # polynomial coefficients of p(t) = sum c_i t^i
    c0 = F0
    c1 = D0
    c2 = 0.5 * S0
    c3 = -10 * F0 - 6 * D0 - 1.5 * S0 + 0.5 * S1 - 4 * D1 + 10 * F1
    c4 = 15 * F0 + 8 * D0 + 1.5 * S0 - S1 + 7 * D1 - 15 * F1
    c5 = -6 * F0 - 3 * D0 - 0.5 * S0 + 0.5 * S1 - 3 * D1 + 6 * F1
    t = D0 / (D0 - D1)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    for _ in range(60):
        d = c1 + t * (2 * c2 + t * (3 * c3 + t * (4 * c4 + t * 5 * c5)))
        same = np.sign(d) == np.sign(D0)
        lo = np.where(same, t, lo)
        hi = np.where(same, hi, t)
        dd = 2 * c2 + t * (6 * c3 + t * (12 * c4 + t * 20 * c5))
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - d / dd
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        t = np.where(bad, 0.5 * (lo + hi), tn)
    return c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))))


def _l1_circular(f, F, fp, s) -> float:
    """L1 norm over the circle of f, given samples of f, an antiderivative F and f' at spacing s."""
    f1 = np.roll(f, -1)
    F1 = np.roll(F, -1)
    fp1 = np.roll(fp, -1)
    cross = f * f1 < 0
    total = float(np.abs(F1[~cross] - F[~cross]).sum())
    if np.any(cross):
        Fz = _quintic_roots_and_values(F[cross], F1[cross], s * f[cross], s * f1[cross], s * s * fp[cross], s * s * fp1[cross])
        total += float(np.abs(Fz - F[cross]).sum() + np.abs(F1[cross] - Fz).sum())
    return total


def _scatter_atoms(angles, weights, k, y, pre, m):
    """f, F and f' of sum_j w_j kappa(x - a_j) on the grid x_i = i*pi/m."""
    s = PI / m
    sy = math.sqrt(y)
    reach = (math.sqrt(4 * k + 2) + KERNEL_SIGMAS + 2.0) * sy
    f = np.zeros(m)
    F = np.zeros(m)
    fp = np.zeros(m)
    if reach >= 0.5 * PI:
        x = np.arange(m) * s
        for start in range(0, angles.size, 256):
            a = angles[start:start + 256]
            w = weights[start:start + 256]
            u = x[:, None] - a[None, :]
            kap, ant, der = _kernel_triplet(u, k, y, pre, True)
            f += kap @ w
            F += ant @ w
            fp += der @ w
        return f, F, fp
    width = int(math.ceil(reach / s))
    offs = np.arange(-width, width + 1)
    for start in range(0, angles.size, max(1, 2**20 // offs.size)):
        a = angles[start:start + 2**20 // offs.size]
        w = weights[start:start + 2**20 // offs.size]
        base = np.round(a / s).astype(np.int64)
        idx = base[:, None] + offs[None, :]
        u = idx * s - a[:, None]
        kap, ant, der = _kernel_triplet(u, k, y, pre, False)
        idx %= m
        wcol = w[:, None]
        f += np.bincount(idx.ravel(), weights=(kap * wcol).ravel(), minlength=m)
        F += np.bincount(idx.ravel(), weights=(ant * wcol).ravel(), minlength=m)
        fp += np.bincount(idx.ravel(), weights=(der * wcol).ravel(), minlength=m)
    return f, F, fp


def kernel_l1(lam: CircleMeasure, k: int, y: float, pre: float = None, n: int = DEFAULT_GRID) -> float:
    """pre * || lam * (He_2k(z) eta_y) ||_1; with the default pre this is ||lam * d^k_y eta_y||_1.

    Small atomic measures are evaluated exactly on a grid fitted to the bandwidth;
    everything else is binned onto the n-point grid.
    """
    if pre is None:
        pre = 2.0 ** -k * y ** -k
    if lam.is_atomic and lam.angles.size <= EXACT_ATOM_LIMIT:
        # the antiderivative is exact, so the grid only has to resolve sqrt(y)
        m = max(256, int(2 ** math.ceil(math.log2(24 * PI / math.sqrt(y)))))
        f, F, fp = _scatter_atoms(lam.angles, lam.weights, k, y, pre, m)
        return _l1_circular(f, F, fp, PI / m)
    masses = lam.bin_masses(lam.grid_size or n)
    m = masses.size
    u = np.arange(m) * PI / m
    kap, ant, der = _kernel_triplet(u, k, y, pre, True)
    f = _circular_convolve(masses, kap)
    F = _circular_convolve(masses, ant)
    fp = _circular_convolve(masses, der)
    return _l1_circular(f, F, fp, PI / m)


def order_k_detail(lam: CircleMeasure, r: float, k: int, n: int = DEFAULT_GRID) -> float:
    """s_r^(k)(lam) = r^2k (pi e / 2)^(k/2) || lam * d^k_y eta_y at y = k r^2 ||_1."""
    if not 0 < r <= 1:
        raise ValueError(f"scale r={r} outside (0, 1]")
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"order {k} outside [1, {MAX_ORDER}]")
    # r^2k 2^-k y^-k collapses to (2k)^-k
    pre = DETAIL_CONST ** k * (2.0 * k) ** -k
    return kernel_l1(lam, k, k * r * r, pre, n)


def detail(lam: CircleMeasure, r: float, n: int = DEFAULT_GRID) -> float:
    """s_r(lam) = r^2 sqrt(pi e / 2) || lam * eta'_{r^2} ||_1."""
    return order_k_detail(lam, r, 1, n)


# ---------------------------------------------------------------- transport and arcs

def _pieces(lam: CircleMeasure):
    """Breakpoints on [0, pi], atom masses at them, and densities on the segments."""
    if lam.is_atomic:
        x = lam.angles
        return x, lam.weights, np.zeros(x.size)
    n = lam.density.size
    h = PI / n
    edges = (np.arange(n) + 0.5) * h
    x = np.concatenate([[0.0], edges[:-1]])
    dens = np.concatenate([[lam.density[0]], lam.density[1:]])
    x = np.append(x, edges[-1])
    dens = np.append(dens, lam.density[0])
    return x, np.zeros(x.size), dens


def _cdf(lam: CircleMeasure, q: np.ndarray, inclusive: bool) -> np.ndarray:
    """Mass of [0, q] (inclusive) or [0, q) for q in [0, pi]."""
    x, w, d = _pieces(lam)
    if lam.is_atomic:
        cum = np.concatenate([[0.0], np.cumsum(w)])
        return cum[np.searchsorted(x, q, side="right" if inclusive else "left")]
    seg_len = np.diff(np.append(x, PI))
    full = np.concatenate([[0.0], np.cumsum(d * seg_len)])
    j = np.clip(np.searchsorted(x, q, side="right") - 1, 0, x.size - 1)
    return full[j] + d[j] * (q - x[j])


def wasserstein1(l1: CircleMeasure, l2: CircleMeasure) -> float:
    """Optimal transport cost on the circle of circumference pi."""
    x1, w1, d1 = _pieces(l1)
    x2, w2, d2 = _pieces(l2)
    xs = np.unique(np.concatenate([[0.0], x1, x2]))
    xs = xs[xs < PI]
    length = np.diff(np.append(xs, PI))
    # difference of CDFs just after each breakpoint, and its slope on each segment
    D = _cdf(l1, xs, True) - _cdf(l2, xs, True)
    slope = _density_at(l1, xs) - _density_at(l2, xs)
    end = D + slope * length
    lo_v = np.minimum(D, end)
    hi_v = np.maximum(D, end)
    a, b = float(lo_v.min()), float(hi_v.max())
    half = 0.5 * PI
    for _ in range(200):
        c = 0.5 * (a + b)
        span = hi_v - lo_v
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span > 0, np.clip((c - lo_v) / span, 0, 1), (lo_v <= c).astype(float))
        if float((frac * length).sum()) < half:
            a = c
        else:
            b = c
        if b - a <= 1e-16 * max(1.0, abs(c)):
            break
    c = 0.5 * (a + b)
    return float(_abs_linear_integral(D - c, end - c, length).sum())


def _density_at(lam: CircleMeasure, q: np.ndarray) -> np.ndarray:
    if lam.is_atomic:
        return np.zeros(q.size)
    x, _, d = _pieces(lam)
    j = np.clip(np.searchsorted(x, q, side="right") - 1, 0, x.size - 1)
    return d[j]


def _abs_linear_integral(p, q, length):
    """Integral of |linear function| over an interval given its end values."""
    same = p * q >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = (p * p + q * q) / (2.0 * np.abs(p - q)) * length
    return np.where(same, 0.5 * np.abs(p + q) * length, crossing)


def arc_mass_max(lam: CircleMeasure, t: float):
    """Largest mass of a closed arc [a, a+t]; returns (mass, a)."""
    if not 0 < t < PI:
        raise ValueError(f"arc length {t} outside (0, pi)")
    if lam.is_atomic:
        # some optimal arc starts at an atom
        x, w = lam.angles, lam.weights
        ext = np.concatenate([x, x + PI])
        cum = np.concatenate([[0.0], np.cumsum(np.concatenate([w, w]))])
        hi = np.searchsorted(ext, x + t + _EDGE_TOL, side="right")
        mass = cum[hi] - cum[np.arange(x.size)]
    else:
        # mass is piecewise linear in the start; its maximum sits where an end meets a bin edge
        x, _, _ = _pieces(lam)
        starts = reduce_angle(np.concatenate([x, x - t]))
        ends = starts + t
        wrap = ends >= PI
        mass = _cdf(lam, np.where(wrap, ends - PI, ends), True) + wrap - _cdf(lam, starts, False)
        x = starts
    i = int(np.argmax(mass))
    return float(min(mass[i], 1.0)), float(x[i])


# ---------------------------------------------------------------- lemma checks

@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool
    details: dict = field(default_factory=dict)


def detail_wasserstein_gap_check(l1: CircleMeasure, l2: CircleMeasure, r: float, k: int) -> InequalityCheck:
    """|s_r^(k)(l1) - s_r^(k)(l2)| against sqrt(2/pi) r^-1 W1(l1, l2)."""
    lhs = abs(order_k_detail(l1, r, k) - order_k_detail(l2, r, k))
    rhs = WASSERSTEIN_GAP_CONST * wasserstein1(l1, l2) / r
    return InequalityCheck(lhs, rhs, lhs <= rhs + 1e-6)


def order_k_to_detail_bound_check(lam: CircleMeasure, a: float, b: float, k: int, n_scales: int = 24) -> InequalityCheck:
    """Check s_{a sqrt k}(lam) <= alpha k (2e/pi)^((k-1)/2) + k! k a^2 / b^2.

    alpha is the largest order-k detail measured over a geometric sweep of [a, b].
    """
    if not a < b:
        raise ValueError("need a < b")
    scales = np.geomspace(a, b, n_scales)
    alpha = max(order_k_detail(lam, float(r), k) for r in scales)
    lhs = detail(lam, a * math.sqrt(k))
    rhs = alpha * k * (2 * math.e / PI) ** ((k - 1) / 2) + math.factorial(k) * k * a * a / (b * b)
    return InequalityCheck(lhs, rhs, lhs <= rhs + 1e-6, {"alpha": alpha})
