"""Desk-scale numerical checks of the analytic lemmas: truncated Gaussians,
the Cramer-type bound, Haar volume in Iwasawa coordinates, and additivity of
group variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .constants import (
    ENTROPY_VARIANCE_TOL,
    HAAR_RATIO_SPREAD,
    SLACK_TIGHT,
    SLACK_VOLUME,
    TRUNC_GAUSS_GAP_CONST,
    VARTADD_MIN_SLOPE,
)
from .errors import DomainError
from .sl2 import GroupElement


@dataclass
class CheckReport:
    """Outcome of one check; ``kind`` is "le" (observed <= bound) or "abs" (|observed - target| <= tolerance)."""

    name: str
    observed: float
    bound_or_target: float
    tolerance: float
    kind: str = "le"
    passed: bool = False
    applicable: bool = True
    seed: int | None = None
    runs: int | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "le":
            self.passed = bool(self.observed <= self.bound_or_target + self.tolerance)
        else:
            self.passed = bool(abs(self.observed - self.bound_or_target) <= self.tolerance)

    @property
    def failed(self) -> bool:
        return self.applicable and not self.passed

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


# ---------------------------------------------------------------- Lie algebra batches

def lie_matrices(v: np.ndarray) -> np.ndarray:
    """Stack of trace-zero matrices c1 E1 + c2 E2 + c3 E3 for rows (c1, c2, c3)."""
    c1, c2, c3 = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([np.stack([c1, c2 - c3], -1), np.stack([c2 + c3, -c1], -1)], -2)


def batch_exp(v: np.ndarray) -> np.ndarray:
    q = v[..., 0] ** 2 + v[..., 1] ** 2 - v[..., 2] ** 2
    s = np.sqrt(np.abs(q))
    with np.errstate(invalid="ignore", divide="ignore"):
        hyper = q >= 0
        c = np.where(hyper, np.cosh(s), np.cos(s))
        k = np.where(s < 1e-8, 1.0 + q / 6.0, np.where(hyper, np.sinh(s), np.sin(s)) / s)
    return c[..., None, None] * np.eye(2) + k[..., None, None] * lie_matrices(v)


def batch_log(m: np.ndarray) -> np.ndarray:
    """Log-chart coordinates of matrices with trace > -2 (positive-trace representative)."""
    sign = np.where(m[..., 0, 0] + m[..., 1, 1] < 0, -1.0, 1.0)
    m = m * sign[..., None, None]
    half = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(half >= 1, np.arccosh(np.maximum(half, 1)), np.arccos(np.minimum(half, 1)))
        k = np.where(s < 1e-8, 1.0, np.where(half >= 1, s / np.sinh(s), s / np.sin(s)))
    x = (m - half[..., None, None] * np.eye(2)) * k[..., None, None]
    c1 = x[..., 0, 0]
    c2 = 0.5 * (x[..., 0, 1] + x[..., 1, 0])
    c3 = 0.5 * (x[..., 1, 0] - x[..., 0, 1])
    return np.stack([c1, c2, c3], -1)


def trace_variance(v: np.ndarray) -> float:
    """Sum of coordinate variances of log-chart samples."""
    return float(v.var(axis=0).sum())


# ---------------------------------------------------------------- truncated Gaussians

@dataclass(frozen=True)
class TruncatedGaussianSpec:
    """Spherical Gaussian of scale r on R^3 conditioned on |x| <= a r."""

    r: float
    a: float

    def __post_init__(self):
        if self.r <= 0 or self.a < 1:
            raise DomainError("need r > 0 and a >= 1")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((0, 3))
        while out.shape[0] < n:
            x = rng.standard_normal((2 * (n - out.shape[0]) + 16, 3))
            out = np.concatenate([out, x[np.einsum("ij,ij->i", x, x) <= self.a * self.a]])
        return out[:n] * self.r


@dataclass(frozen=True)
class TruncatedGaussianStats:
    entropy: float
    trace_variance: float
    g: float
    gaussian_entropy: float


def radial_moment_ratio(a: float) -> float:
    """E|x|^2 / r^2 for the truncated Gaussian, 3 P(5/2, a^2/2) / P(3/2, a^2/2)."""
    return 3.0 * special.gammainc(2.5, 0.5 * a * a) / special.gammainc(1.5, 0.5 * a * a)


def truncated_gaussian_stats(spec: TruncatedGaussianSpec) -> TruncatedGaussianStats:
    """Entropy and trace variance by radial quadrature; the angular part is 4 pi."""
    a = spec.a
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    m0 = integrate.quad(lambda s: s * s * math.exp(-0.5 * s * s), 0.0, a, **opts)[0]
    m2 = integrate.quad(lambda s: s ** 4 * math.exp(-0.5 * s * s), 0.0, a, **opts)[0]
    log_z = math.log(4.0 * math.pi * m0) + 3.0 * math.log(spec.r)
    second = m2 / m0
    entropy = log_z + 0.5 * second
    full = 1.5 * math.log(2.0 * math.pi * math.e * spec.r ** 2)
    return TruncatedGaussianStats(entropy, second * spec.r ** 2, radial_moment_ratio(a), full)


def truncated_gaussian_check(spec: TruncatedGaussianSpec) -> list:
    st = truncated_gaussian_stats(spec)
    gap_bound = max(1e-8, TRUNC_GAUSS_GAP_CONST * math.exp(-spec.a ** 2 / 4.0))
    r2 = spec.r ** 2
    return [
        CheckReport(
            f"truncated_gaussian_entropy_gap[a={spec.a:g}]",
            abs(st.entropy - st.gaussian_entropy), gap_bound, 0.0,
            details={"r": spec.r, "a": spec.a, "entropy": st.entropy},
        ),
        CheckReport(
            f"truncated_gaussian_variance[a={spec.a:g}]",
            st.trace_variance, 3.0 * r2, 1e-12 * r2,
            details={"lower": st.g * r2, "above_lower": st.trace_variance >= st.g * r2 * (1 - 1e-10)},
        ),
    ]


# ---------------------------------------------------------------- Cramer bound

def cramer_bound(a: float, b: float, c: float, n: int) -> float:
    """((a/c)^(c/b) ((b-a)/(b-c))^(1-c/b))^n."""
    if not (0 < c <= a < b) or n < 1:
        raise DomainError("need 0 < c <= a < b and n >= 1")
    log_one = (c / b) * math.log(a / c) + (1.0 - c / b) * math.log((b - a) / (b - c))
    return math.exp(n * log_one)


def corollary_constant() -> float:
    return 0.5 * (1.0 - math.log(2.0))


@dataclass(frozen=True)
class MartingaleFamily:
    """Variables in [0, b] whose conditional means, given the past, are at least ``mean``.

    ``draw(rng, partial_sums, i)`` returns the i-th variable for every run and
    ``conditional_mean(partial_sums, i)`` its declared conditional mean.
    """

    name: str
    n: int
    b: float
    mean: float
    c: float
    draw: Callable
    conditional_mean: Callable


def bernoulli_family(n: int, p: float, c: float, b: float = 1.0) -> MartingaleFamily:
    return MartingaleFamily(
        f"bernoulli(p={p:g})", n, b, p * b, c,
        lambda rng, s, i: b * (rng.random(s.shape) < p),
        lambda s, i: np.full(s.shape, p * b),
    )


def beta_family(n: int, a: float, c: float, b: float, kappa: float) -> MartingaleFamily:
    """Beta-distributed steps with conditional mean exactly a; the spread is large behind schedule, small ahead."""

    def mean_fn(s, i):
        return np.full(s.shape, a)

    def draw(rng, s, i):
        m = a / b
        k = np.where(s < i * c, kappa, 50.0)
        return b * rng.beta(m * k, (1.0 - m) * k)

    return MartingaleFamily(f"beta(kappa={kappa:.3g})", n, b, a, c, draw, mean_fn)


def shifted_family(n: int, a: float, c: float, b: float, shortfall: float) -> MartingaleFamily:
    """Declared conditional mean below a: the lemma does not apply."""
    m = (a - shortfall) / b
    return MartingaleFamily(
        "mean-violating", n, b, a, c,
        lambda rng, s, i: b * (rng.random(s.shape) < m),
        lambda s, i: np.full(s.shape, m * b),
    )


def cramer_mc_check(family: MartingaleFamily, runs: int, seed: int) -> CheckReport:
    """Empirical P[X1 + ... + Xn <= n c] against the bound plus three binomial standard errors."""
    rng = _rng(seed)
    s = np.zeros(runs)
    applicable = True
    for i in range(family.n):
        if np.any(family.conditional_mean(s, i) < family.mean - 1e-12):
            applicable = False
        x = family.draw(rng, s, i)
        if np.any((x < 0) | (x > family.b)):
            applicable = False
        s = s + x
    p_hat = float(np.mean(s <= family.n * family.c))
    bound = cramer_bound(family.mean, family.b, family.c, family.n)
    se = math.sqrt(max(bound * (1.0 - bound), 1.0 / runs) / runs)
    return CheckReport(
        f"cramer_mc[{family.name}]", p_hat, bound, SLACK_TIGHT * se,
        applicable=applicable, seed=seed, runs=runs,
        details={"n": family.n, "a": family.mean, "b": family.b, "c": family.c},
    )


def random_families(count: int, seed: int) -> list:
    """Randomized Bernoulli and beta configurations with bounds in a testable range."""
    rng = _rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(5, 40))
        b = float(rng.uniform(0.5, 2.0))
        a = float(rng.uniform(0.2, 0.8)) * b
        c = float(rng.uniform(0.4, 0.95)) * a
        if cramer_bound(a, b, c, n) < 1e-3:
            continue
        if len(out) % 2 == 0:
            out.append(bernoulli_family(n, a / b, c, b))
        else:
            out.append(beta_family(n, a, c, b, float(rng.uniform(0.5, 5.0))))
    return out


# ---------------------------------------------------------------- Haar measure in Iwasawa coordinates

def iwasawa_matrix(x, y, theta) -> np.ndarray:
    """[[1, x], [0, 1]] diag(sqrt y, 1/sqrt y) R_theta, batched."""
    x, y, theta = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(theta, float))
    sy = np.sqrt(y)
    na = np.stack([np.stack([sy, x / sy], -1), np.stack([np.zeros_like(y), 1.0 / sy], -1)], -2)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return na @ rot


def iwasawa_coords(m: np.ndarray) -> np.ndarray:
    """(x, y, theta) with m = iwasawa_matrix(x, y, theta)."""
    c, d = m[..., 1, 0], m[..., 1, 1]
    a, b = m[..., 0, 0], m[..., 0, 1]
    y = 1.0 / (c * c + d * d)
    return np.stack([(a * c + b * d) * y, y, np.arctan2(c, d)], -1)


def in_ball(x, y, u: float):
    """||M_{x,y,theta}|| <= u, from y + (x^2 + 1)/y <= u^2 + u^-2."""
    return y + (x * x + 1.0) / y <= u * u + u ** -2


def chart_density(v: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Density of dx dy dtheta / y^2 with respect to Lebesgue measure in the log chart."""
    jac = np.empty(v.shape[:-1] + (3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        jac[..., :, j] = (iwasawa_coords(batch_exp(v + e)) - iwasawa_coords(batch_exp(v - e))) / (2 * step)
    y = iwasawa_coords(batch_exp(v))[..., 1]
    return np.abs(np.linalg.det(jac)) / (y * y)


def _unit_ball(rng, n):
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((n, 1)) ** (1.0 / 3.0)


def haar_kappa(seed: int = 0, points: int = 200000, delta: float = 0.1) -> float:
    """Normalizing constant for kappa dx dy dtheta / y^2, extrapolated from balls of radius delta and delta/2."""
    rng = _rng(seed)
    ball = _unit_ball(rng, points)
    k1 = 1.0 / chart_density(delta * ball).mean()
    k2 = 1.0 / chart_density(0.5 * delta * ball).mean()
    return (4.0 * k2 - k1) / 3.0


@dataclass(frozen=True)
class HaarVolume:
    volume: float
    ratio_to_u2: float
    std_error: float
    kappa: float


def haar_ball_volume(u: float, mc_points: int, seed: int, kappa: float | None = None) -> HaarVolume:
    """Monte-Carlo volume of K_u = {||M|| <= u} under kappa dx dy dtheta / y^2.

    y is drawn with density proportional to y^(-3/2) on [u^-2, u^2] and x uniformly
    on |x| <= u sqrt(y), which makes the importance weight constant.
    """
    if u < 2:
        raise DomainError("u must be at least 2")
    if kappa is None:
        kappa = haar_kappa(seed)
    rng = _rng(seed)
    lo, hi = u ** -2, u ** 2
    z = 2.0 * (lo ** -0.5 - hi ** -0.5)
    w = rng.random(mc_points)
    y = (lo ** -0.5 - 0.5 * z * w) ** -2.0
    x = (2.0 * rng.random(mc_points) - 1.0) * u * np.sqrt(y)
    hit = in_ball(x, y, u)
    scale = kappa * math.pi * 2.0 * u * z
    p = float(hit.mean())
    vol = scale * p
    se = scale * math.sqrt(p * (1 - p) / mc_points)
    return HaarVolume(vol, vol / u ** 2, se, kappa)


def haar_volume_exact(u: float, kappa: float) -> float:
    """Closed form of the same volume, pi^2 kappa (u - 1/u)^2.

    For each y the x-section has length 2 sqrt((y - lo)(hi - y)) with lo hi = 1 and
    lo + hi = u^2 + u^-2, and int sqrt((y - lo)(hi - y)) / y^2 dy = pi ((lo + hi) / 2 - 1).
    """
    return math.pi ** 2 * kappa * (u - 1.0 / u) ** 2


def haar_growth_check(us=(2, 4, 8, 16), mc_points: int = 10 ** 6, seed: int = 0) -> CheckReport:
    kappa = haar_kappa(seed)
    vols = [haar_ball_volume(u, mc_points, seed + i, kappa) for i, u in enumerate(us)]
    hi = max(v.ratio_to_u2 + SLACK_VOLUME * v.std_error / u ** 2 for v, u in zip(vols, us))
    lo = min(v.ratio_to_u2 - SLACK_VOLUME * v.std_error / u ** 2 for v, u in zip(vols, us))
    spread = max(v.ratio_to_u2 for v in vols) / min(v.ratio_to_u2 for v in vols)
    return CheckReport(
        "haar_volume_quadratic_growth", spread, HAAR_RATIO_SPREAD, 0.0, seed=seed, runs=mc_points,
        details={"u": list(us), "ratios": [v.ratio_to_u2 for v in vols], "kappa": kappa, "spread_with_slack": hi / lo},
    )


# ---------------------------------------------------------------- group variance

def log_chart_sampler(spec: TruncatedGaussianSpec) -> Callable:
    return lambda rng, n: spec.sample(rng, n)


def vart_residual(h0: GroupElement, h_sampler, g_sampler, runs: int, rng) -> float:
    """Tr var_h0[h g] - Tr var of the summed log coordinates, antithetic in the signs of both laws."""
    x = h_sampler(rng, runs)
    y = g_sampler(rng, runs)
    x = np.concatenate([x, -x, x, -x])
    y = np.concatenate([y, y, -y, -y])
    m0 = h0.matrix
    h = m0 @ batch_exp(x)
    hg = h @ batch_exp(y)
    rel = batch_log(np.linalg.inv(m0) @ hg)
    return trace_variance(rel) - trace_variance(x + y)


def vart_additivity_check(
    h0: GroupElement, h_law: Callable, g_law: Callable, eps: float, runs: int, seed: int
) -> CheckReport:
    """Residual of variance additivity at eps, eps/2, eps/4; the log-log slope should be about 3 or more.

    ``h_law(eps)`` and ``g_law(eps)`` return samplers ``(rng, n) -> (n, 3)`` of log-chart vectors.
    """
    if eps > 0.1:
        raise DomainError("eps must be at most 0.1")
    rng = _rng(seed)
    epss = [eps, eps / 2, eps / 4]
    res = [vart_residual(h0, h_law(e), g_law(e), runs, rng) for e in epss]
    mags = np.abs(res)
    if np.all(mags < 1e-15):
        return CheckReport(f"vart_additivity[|h0|={h0.norm():.3g}]", 0.0, 0.0, 1e-15, kind="abs", seed=seed, runs=runs,
                           details={"eps": epss, "residuals": res, "slope": None})
    slope = float(np.polyfit(np.log(epss), np.log(np.maximum(mags, 1e-300)), 1)[0])
    return CheckReport(
        f"vart_additivity[|h0|={h0.norm():.3g}]", -slope, -VARTADD_MIN_SLOPE, 0.0, seed=seed, runs=runs,
        details={"eps": epss, "residuals": res, "slope": slope, "h0_norm": h0.norm()},
    )


def truncated_law(a: float = 3.0) -> Callable:
    """Truncated Gaussian with support radius eps (r = eps / a)."""
    return lambda eps: log_chart_sampler(TruncatedGaussianSpec(eps / a, a))


def plugin_entropy(v: np.ndarray, bins: int) -> tuple:
    """Histogram plug-in differential entropy with the Miller-Madow correction, and that correction."""
    lo = v.min(axis=0)
    width = (v.max(axis=0) - lo) / bins
    width = np.where(width > 0, width, 1.0)
    idx = np.minimum(((v - lo) / width).astype(np.int64), bins - 1)
    flat = (idx[:, 0] * bins + idx[:, 1]) * bins + idx[:, 2]
    counts = np.unique(flat, return_counts=True)[1]
    n = v.shape[0]
    p = counts / n
    correction = (counts.size - 1) / (2.0 * n)
    return float(-(p * np.log(p)).sum() + np.log(width).sum() + correction), correction


def entropy_variance_inequality_check(
    sampler: Callable, eps: float, grid: int, seed: int, samples: int = 400000
) -> CheckReport:
    """H(g) <= 3/2 log(2 pi e / 3 * Tr var) with H taken relative to the normalized Haar measure.

    ``sampler(rng, n)`` returns log-chart coordinates of g0^-1 g for the centre g0;
    by left invariance g0 itself plays no further role.  The Haar correction is
    E log(kappa * chart density), which is O(eps^2).
    """
    rng = _rng(seed)
    v = sampler(rng, samples)
    tv = trace_variance(v)
    if tv <= 0 or np.ptp(v, axis=0).min() <= 0:
        return CheckReport("entropy_variance", -math.inf, -math.inf, 0.0, applicable=False, seed=seed, runs=samples,
                           details={"degenerate": True})
    h_leb, corr = plugin_entropy(v, grid)
    kappa = haar_kappa(seed, 20000)
    sub = v[: min(samples, 20000)]
    haar_corr = float(np.mean(np.log(kappa * chart_density(sub))))
    h = h_leb + haar_corr
    rhs = 1.5 * math.log(2.0 * math.pi * math.e / 3.0 * tv)
    return CheckReport(
        "entropy_variance", h, rhs, ENTROPY_VARIANCE_TOL + corr, seed=seed, runs=samples,
        details={"eps": eps, "grid": grid, "trace_variance": tv, "gap": rhs - h, "haar_correction": haar_corr, "degenerate": False},
    )


def uniform_ball_sampler(radius: float) -> Callable:
    return lambda rng, n: radius * _unit_ball(rng, n)


# ---------------------------------------------------------------- suite

def run_suite(seed: int = 0, cramer_runs: int = 10 ** 5, haar_points: int = 10 ** 6) -> list:
    """All analysis checks as CheckReports, in a fixed order."""
    reports = []
    for a in (2.0, 3.0, 4.0, 6.0):
        reports.extend(truncated_gaussian_check(TruncatedGaussianSpec(1.0, a)))
    st = truncated_gaussian_stats(TruncatedGaussianSpec(1.0, 6.0))
    reports.append(CheckReport("truncated_gaussian_entropy[r=1,a=6]", st.entropy, 4.2569, 1e-3, kind="abs"))
    reports.append(CheckReport("cramer_regression", cramer_bound(0.5, 1.0, 0.25, 10), 0.2704, 1e-4, kind="abs"))
    reports.append(CheckReport("cramer_corollary_constant", corollary_constant(), 0.153426, 1e-6, kind="abs"))
    for i, fam in enumerate(random_families(20, seed)):
        reports.append(cramer_mc_check(fam, cramer_runs, seed + 1000 + i))
    reports.append(cramer_mc_check(shifted_family(20, 0.5, 0.3, 1.0, 0.2), cramer_runs, seed + 2000))
    reports.append(haar_growth_check(mc_points=haar_points, seed=seed))
    reports.append(vart_additivity_check(GroupElement.identity(), truncated_law(), truncated_law(), 0.1, 50000, seed))
    big = GroupElement.from_matrix(np.diag([10.0, 0.1]))
    reports.append(vart_additivity_check(big, truncated_law(), truncated_law(), 0.1, 50000, seed + 1))
    gauss = TruncatedGaussianSpec(0.02, 5.0)
    reports.append(entropy_variance_inequality_check(log_chart_sampler(gauss), 0.1, 40, seed))
    reports.append(entropy_variance_inequality_check(uniform_ball_sampler(0.05), 0.05, 40, seed))
    return reports


def suite_failed(reports) -> bool:
    return any(r.failed for r in reports)


def property_suite(seed: int = 0) -> list:
    """Core geometric and detail-calculus properties, each summarized as one CheckReport."""
    from .circle import CircleMeasure, detail
    from .sl2 import batch_cartan, diagonal, rotation, LieVector, taylor_slope

    rng = _rng(seed)
    reports = []
    worst = 0.0
    for r in (0.005, 0.01, 0.02, 0.05):
        for s in (0.005, 0.01, 0.02, 0.05):
            got = detail(CircleMeasure.wrapped_gaussian(0.0, s), r)
            worst = max(worst, abs(got / (r * r / (r * r + s * s)) - 1.0))
    reports.append(CheckReport("gaussian_detail_identity", worst, 0.0, 0.01))
    m = rng.normal(size=(1000, 2, 2))
    det = np.linalg.det(m)
    m[det < 0, :, 0] *= -1
    m /= np.sqrt(np.abs(np.linalg.det(m)))[:, None, None]
    t1, lam, t2 = batch_cartan(m)
    c1, s1, c2, s2 = np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)
    r1 = np.stack([np.stack([c1, -s1], -1), np.stack([s1, c1], -1)], -2)
    r2 = np.stack([np.stack([c2, s2], -1), np.stack([-s2, c2], -1)], -2)
    d = np.zeros_like(m)
    d[:, 0, 0], d[:, 1, 1] = lam, 1.0 / lam
    back = r1 @ d @ r2
    err = np.minimum(np.abs(back - m).max(axis=(1, 2)), np.abs(back + m).max(axis=(1, 2))) / lam
    reports.append(CheckReport("cartan_roundtrip", float(err.max()), 0.0, 1e-10, seed=seed, runs=1000))
    gs = [rotation(0.3) @ diagonal(4.0) @ rotation(-0.3), rotation(1.4) @ diagonal(3.0) @ rotation(-1.4)]
    dirs = [LieVector(0.6, 0.0, 0.8), LieVector(0.0, 0.8, 0.6)]
    slope = taylor_slope(gs, dirs, 0.7, [1e-3, 1e-4, 1e-5])
    reports.append(CheckReport("taylor_slope", slope, 2.0, 0.1, kind="abs"))
    return reports
