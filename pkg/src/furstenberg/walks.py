"""Seeded Monte-Carlo engine for random products of PSL(2,R) elements.

Every estimator splits its sample budget over ``workers`` independent random
streams derived from ``(seed, worker index)`` and concatenates the results in
worker order, so outputs are fixed by the measure together with
``(seed, workers)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algebraic import ExactMatrix
from .circle import CircleMeasure, arc_mass_max, wasserstein1
from .constants import (
    CHI_ZERO_TOL,
    DEFAULT_BURN_IN,
    NEAR_ROTATION_RETRIES,
    NEAR_ROTATION_TOL,
    RENORM_EVERY,
    SLACK_TIGHT,
    SLACK_WIDE,
    STOPPING_CAP,
)
from .errors import DegenerateFit, NearRotation, StoppingTimeOverflow, WeightsNotProbability
from .sl2 import PI, GroupElement, batch_cartan, reduce_angle


@dataclass(frozen=True, eq=False)
class Atom:
    """One support point of a measure.

    ``exact`` is None for atoms that only have a floating-point representation
    (for instance conjugates by rotations through pi/5).
    """

    matrix: np.ndarray
    weight: Fraction
    exact: ExactMatrix | None = None
    label: str = ""


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """A finitely supported probability measure on PSL(2,R)."""

    atoms: tuple
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.atoms:
            raise WeightsNotProbability("measure has no atoms")
        if any(a.weight <= 0 for a in self.atoms):
            raise WeightsNotProbability("weights must be positive")
        total = sum((a.weight for a in self.atoms), Fraction(0))
        if total != 1:
            raise WeightsNotProbability(f"weights sum to {total}, not 1")
        mats = np.stack([np.asarray(a.matrix, dtype=float) for a in self.atoms])
        mats.setflags(write=False)
        object.__setattr__(self, "_mats", mats)
        cum = np.cumsum([float(a.weight) for a in self.atoms])
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_exact(cls, pairs, name: str = "", params: dict | None = None) -> "MeasureSpec":
        atoms = tuple(
            Atom(m.to_float(), Fraction(w), m, label=f"g{i}") for i, (m, w) in enumerate(pairs)
        )
        return cls(atoms, name, dict(params or {}))

    @property
    def matrices(self) -> np.ndarray:
        return self._mats

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self._cum]))

    @property
    def is_exact(self) -> bool:
        return all(a.exact is not None for a in self.atoms)

    def max_norm(self) -> float:
        _, lam, _ = batch_cartan(self._mats)
        return float(np.max(np.maximum(lam, 1.0)))

    def is_compact(self) -> bool:
        """True when every atom is a rotation, so the walk stays in a compact group."""
        m = self._mats
        return bool(np.allclose(np.einsum("kji,kjl->kil", m, m), np.eye(2), atol=1e-12))

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return np.searchsorted(self._cum, rng.random(shape), side="right").clip(0, len(self.atoms) - 1)

    def to_json(self) -> dict:
        out = {"name": self.name}
        if self.params:
            out["family"] = self.params
        if self.is_exact:
            out["atoms"] = [{"m": a.exact.rows(), "w": str(a.weight)} for a in self.atoms]
        else:
            out["atoms"] = [
                {"m": [[repr(float(v)) for v in row] for row in a.matrix], "w": str(a.weight), "exact": False}
                for a in self.atoms
            ]
        return out


def worker_rngs(seed: int, workers: int) -> list:
    return [np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(w,))) for w in range(workers)]


def _split(total: int, workers: int) -> list:
    base, extra = divmod(total, workers)
    return [base + (w < extra) for w in range(workers)]


def _run_workers(fn, counts, seed: int, workers: int) -> list:
    rngs = worker_rngs(seed, workers)
    if workers == 1:
        return [fn(rngs[0], counts[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rngs, counts))


def _norms(p11, p12, p21, p22):
    return np.hypot(0.5 * (p11 + p22), 0.5 * (p21 - p12)) + np.hypot(0.5 * (p11 - p22), 0.5 * (p21 + p12))


class _Products:
    """A batch of running right products P <- P * gamma with log-norm bookkeeping."""

    def __init__(self, spec: MeasureSpec, batch: int, start: np.ndarray | None = None):
        self.m = spec.matrices
        self.spec = spec
        if start is None:
            self.p = [np.ones(batch), np.zeros(batch), np.zeros(batch), np.ones(batch)]
        else:
            self.p = [start[:, 0, 0].copy(), start[:, 0, 1].copy(), start[:, 1, 0].copy(), start[:, 1, 1].copy()]
        self.log_scale = np.zeros(batch)
        self.steps = 0

    def advance(self, idx: np.ndarray):
        g = self.m[idx]
        a, b, c, d = self.p
        self.p = [
            a * g[:, 0, 0] + b * g[:, 1, 0],
            a * g[:, 0, 1] + b * g[:, 1, 1],
            c * g[:, 0, 0] + d * g[:, 1, 0],
            c * g[:, 0, 1] + d * g[:, 1, 1],
        ]
        self.steps += 1
        if self.steps % RENORM_EVERY == 0:
            self.renormalise()

    def renormalise(self):
        n = _norms(*self.p)
        self.log_scale += np.log(n)
        self.p = [x / n for x in self.p]

    def run(self, rng: np.random.Generator, steps: int, block: int = 256):
        batch = self.p[0].size
        done = 0
        while done < steps:
            todo = min(block, steps - done)
            idx = self.spec.sample(rng, (todo, batch))
            for row in idx:
                self.advance(row)
            done += todo

    def log_norm(self) -> np.ndarray:
        return self.log_scale + np.log(_norms(*self.p))

    def matrices(self) -> np.ndarray:
        a, b, c, d = self.p
        return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


# ---------------------------------------------------------------- Lyapunov exponent

@dataclass(frozen=True)
class LyapunovEstimate:
    chi_hat: float
    std_error: float
    steps_per_sample: int
    samples: int
    seed: int
    positive: bool


def estimate_lyapunov(spec: MeasureSpec, steps: int, samples: int, seed: int, workers: int = 1) -> LyapunovEstimate:
    """Mean of log||gamma_1 ... gamma_n|| / n over independent sample paths."""
    if steps < 1000 or samples < 100:
        raise ValueError("need steps >= 1000 and samples >= 100")

    def job(rng, count):
        prods = _Products(spec, count)
        prods.run(rng, steps)
        return prods.log_norm() / steps

    rates = np.concatenate(_run_workers(job, _split(samples, workers), seed, workers))
    chi = float(rates.mean())
    se = float(rates.std(ddof=1) / math.sqrt(samples))
    return LyapunovEstimate(chi, se, steps, samples, seed, chi > SLACK_TIGHT * se and chi > CHI_ZERO_TOL)


# ---------------------------------------------------------------- stationary measure

@dataclass(frozen=True, eq=False)
class StationaryEstimate:
    measure: CircleMeasure
    burn_in: int
    samples: int
    seed: int
    aborted: int = 0

    @property
    def angles(self) -> np.ndarray:
        return self.measure.angles


def _attracting_directions(spec: MeasureSpec, rng, count: int, burn_in: int):
    prods = _Products(spec, count)
    prods.run(rng, burn_in)
    theta1, _, _ = batch_cartan(prods.matrices())
    bad = np.flatnonzero(prods.log_norm() <= NEAR_ROTATION_TOL)
    for _ in range(NEAR_ROTATION_RETRIES):
        if bad.size == 0:
            break
        retry = _Products(spec, bad.size, prods.matrices()[bad])
        retry.log_scale = prods.log_scale[bad].copy()
        retry.run(rng, burn_in)
        theta1[bad] = batch_cartan(retry.matrices())[0]
        bad = bad[retry.log_norm() <= NEAR_ROTATION_TOL]
    keep = np.ones(count, dtype=bool)
    keep[bad] = False
    return theta1[keep], int(bad.size)


def estimate_stationary(
    spec: MeasureSpec, burn_in: int = DEFAULT_BURN_IN, samples: int = 10000, seed: int = 0, workers: int = 1
) -> StationaryEstimate:
    """Samples of b+(gamma_1 ... gamma_burn_in), whose law approaches the stationary measure."""
    if burn_in < 200:
        raise ValueError("burn_in must be at least 200")
    parts = _run_workers(lambda rng, n: _attracting_directions(spec, rng, n, burn_in), _split(samples, workers), seed, workers)
    angles = np.concatenate([p[0] for p in parts])
    aborted = sum(p[1] for p in parts)
    if angles.size == 0:
        raise NearRotation("every product stayed within the near-rotation threshold")
    return StationaryEstimate(CircleMeasure.from_atoms(angles), burn_in, samples, seed, aborted)


# ---------------------------------------------------------------- stopping times

@dataclass(frozen=True)
class StoppedWalk:
    tau: int
    product: GroupElement
    flagged: bool


def stopping_time_walk(spec: MeasureSpec, v: float, P: float, seed: int) -> StoppedWalk:
    """First n with ||(gamma_1 ... gamma_n)^T v|| >= P for the unit vector v at angle v."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    w = np.array([math.cos(v), math.sin(v)])
    prod = np.eye(2)
    log_scale = 0.0
    mats = spec.matrices
    n = 0
    flagged = P <= spec.max_norm()
    log_p = math.log(P)
    while True:
        for i in spec.sample(rng, 1024):
            g = mats[i]
            w = g.T @ w
            prod = prod @ g
            n += 1
            if math.log(np.linalg.norm(w)) + log_scale >= log_p:
                return StoppedWalk(n, GroupElement.from_matrix(prod), flagged)
            if n % RENORM_EVERY == 0:
                s = np.linalg.norm(w)
                w /= s
                prod /= s
                log_scale += math.log(s)
            if n >= STOPPING_CAP:
                raise StoppingTimeOverflow(f"no stop within {STOPPING_CAP} steps")


def stopped_directions(spec: MeasureSpec, v: float, P: float, runs: int, rng) -> tuple:
    """Directions of (gamma_1 ... gamma_tau)^T v at tau = tau_{P,v}, and the stopping times."""
    mats_t = np.transpose(spec.matrices, (0, 2, 1))
    w0 = np.full(runs, math.cos(v))
    w1 = np.full(runs, math.sin(v))
    out = np.full(runs, np.nan)
    taus = np.zeros(runs, dtype=np.int64)
    active = np.ones(runs, dtype=bool)
    log_norm = np.zeros(runs)
    log_p = math.log(P)
    n = 0
    while active.any():
        idx = spec.sample(rng, (256, runs))
        for row in idx:
            g = mats_t[row]
            w0, w1 = g[:, 0, 0] * w0 + g[:, 0, 1] * w1, g[:, 1, 0] * w0 + g[:, 1, 1] * w1
            s = np.hypot(w0, w1)
            log_norm += np.log(s)
            w0 /= s
            w1 /= s
            n += 1
            hit = active & (log_norm >= log_p)
            if hit.any():
                out[hit] = reduce_angle(np.arctan2(w1[hit], w0[hit]))
                taus[hit] = n
                active &= ~hit
                if not active.any():
                    break
        if n >= STOPPING_CAP:
            raise StoppingTimeOverflow(f"no stop within {STOPPING_CAP} steps")
    return out, taus


def stopped_repelling_directions(spec: MeasureSpec, a: np.ndarray, P: float, runs: int, rng) -> np.ndarray:
    """b-(a gamma_1 ... gamma_tau)^perp at the first n with ||a gamma_1 ... gamma_n|| >= P ||a||."""
    start = np.broadcast_to(np.asarray(a, dtype=float), (runs, 2, 2))
    prods = _Products(spec, runs, start)
    log_target = math.log(P) + math.log(float(_norms(a[0, 0], a[0, 1], a[1, 0], a[1, 1])))
    out = np.full(runs, np.nan)
    active = np.ones(runs, dtype=bool)
    n = 0
    while active.any():
        idx = spec.sample(rng, (256, runs))
        for row in idx:
            prods.advance(row)
            n += 1
            hit = active & (prods.log_norm() >= log_target)
            if hit.any():
                _, _, theta2 = batch_cartan(prods.matrices()[hit])
                out[hit] = theta2
                active &= ~hit
                if not active.any():
                    break
        if n >= STOPPING_CAP:
            raise StoppingTimeOverflow(f"no stop within {STOPPING_CAP} steps")
    return out


# ---------------------------------------------------------------- two-sample comparisons

@dataclass(frozen=True)
class W1Comparison:
    """A W1 statistic against the spread of its resampling null distribution."""

    statistic: float
    null_mean: float
    null_sd: float
    slack: float

    @property
    def passes(self) -> bool:
        return self.statistic <= self.null_mean + self.slack * self.null_sd


def w1_permutation_test(x: np.ndarray, y: np.ndarray, n_perm: int, seed: int, slack: float = SLACK_WIDE) -> W1Comparison:
    """W1 between two angle samples, against random relabelings of the pooled sample."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(7,)))
    stat = wasserstein1(CircleMeasure.from_atoms(x), CircleMeasure.from_atoms(y))
    pool = np.concatenate([x, y])
    null = []
    for _ in range(n_perm):
        perm = rng.permutation(pool)
        null.append(wasserstein1(CircleMeasure.from_atoms(perm[: x.size]), CircleMeasure.from_atoms(perm[x.size:])))
    return W1Comparison(stat, float(np.mean(null)), float(np.std(null, ddof=1)), slack)


def rotation_invariance_test(est: StationaryEstimate, order: int, n_null: int, seed: int) -> W1Comparison:
    """W1 between the estimate and its rotation by pi/order.

    The null distribution rotates each sample by an independent random
    multiple of pi/order, which leaves a rotation-invariant law unchanged.
    """
    angle = PI / order
    x = est.angles
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(11,)))
    stat = wasserstein1(est.measure, est.measure.rotate(angle))
    null = []
    for _ in range(n_null):
        z = x + angle * rng.integers(0, order, x.size)
        m = CircleMeasure.from_atoms(z)
        null.append(wasserstein1(m, m.rotate(angle)))
    return W1Comparison(stat, float(np.mean(null)), float(np.std(null, ddof=1)), SLACK_WIDE)


def step_forward(spec: MeasureSpec, angles: np.ndarray, rng) -> np.ndarray:
    """Apply one independent mu-step to each angle."""
    g = spec.matrices[spec.sample(rng, angles.size)]
    c, s = np.cos(angles), np.sin(angles)
    return reduce_angle(np.arctan2(g[:, 1, 0] * c + g[:, 1, 1] * s, g[:, 0, 0] * c + g[:, 0, 1] * s))


# ---------------------------------------------------------------- renewal

@dataclass(frozen=True, eq=False)
class RenewalResult:
    v_grid: tuple
    P_levels: tuple
    laws: dict
    statistics: tuple
    std_errors: tuple

    @property
    def decreased(self) -> bool:
        slack = SLACK_TIGHT * math.hypot(self.std_errors[0], self.std_errors[-1])
        return self.statistics[-1] < self.statistics[0] + slack

    def samples_at(self, level: int) -> np.ndarray:
        return np.concatenate([self.laws[(i, level)].angles for i in range(len(self.v_grid))])


def _max_pairwise_w1(measures) -> float:
    best = 0.0
    for i in range(len(measures)):
        for j in range(i + 1, len(measures)):
            best = max(best, wasserstein1(measures[i], measures[j]))
    return best


def renewal_experiment(
    spec: MeasureSpec,
    v_grid: Sequence[float],
    P_levels: Sequence[float],
    runs: int,
    seed: int,
    bootstrap: int = 30,
) -> RenewalResult:
    """Empirical laws of the stopped direction (gamma_1 ... gamma_tau)^T v over a grid of v and P."""
    if len(v_grid) < 8 or len(P_levels) < 2 or runs < 1000:
        raise ValueError("need >= 8 grid points, >= 2 levels and >= 1000 runs")
    laws = {}
    for i, v in enumerate(v_grid):
        for j, P in enumerate(P_levels):
            rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i, j)))
            dirs, _ = stopped_directions(spec, float(v), float(P), runs, rng)
            laws[(i, j)] = CircleMeasure.from_atoms(dirs)
    stats, ses = [], []
    boot_rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(99,)))
    for j in range(len(P_levels)):
        cell = [laws[(i, j)] for i in range(len(v_grid))]
        stats.append(_max_pairwise_w1(cell))
        boots = []
        for _ in range(bootstrap):
            resampled = [CircleMeasure.from_atoms(boot_rng.choice(m.angles, m.angles.size)) for m in cell]
            boots.append(_max_pairwise_w1(resampled))
        ses.append(float(np.std(boots, ddof=1)))
    return RenewalResult(tuple(v_grid), tuple(P_levels), laws, tuple(stats), tuple(ses))


# ---------------------------------------------------------------- regularity probes

@dataclass(frozen=True)
class HolderFit:
    C_fit: float
    delta_fit: float
    degenerate: bool
    radii: tuple
    masses: tuple


def holder_probe(est: StationaryEstimate | CircleMeasure, radii: Sequence[float]) -> HolderFit:
    """Fit max arc mass over arcs of length 2r against r on log-log axes."""
    radii = np.asarray(sorted(radii), dtype=float)
    if radii.size < 4 or radii[-1] / radii[0] < 100:
        raise DegenerateFit("need at least 4 radii spanning two decades")
    measure = est.measure if isinstance(est, StationaryEstimate) else est
    masses = np.array([arc_mass_max(measure, min(2 * r, PI * (1 - 1e-12)))[0] for r in radii])
    slope, intercept = np.polyfit(np.log(radii), np.log(masses), 1)
    resolution = 1.0 / measure.angles.size if measure.is_atomic else 0.0
    degenerate = bool(masses.max() - masses.min() <= resolution)
    return HolderFit(float(math.exp(intercept)), float(slope), degenerate, tuple(radii), tuple(masses))


@dataclass(frozen=True)
class LargeDeviationResult:
    rate: float
    std_error: float
    applicable: bool
    chi: float
    n: int


def large_deviation_probe(
    spec: MeasureSpec, n: int, eps: float, runs: int, seed: int, chi: float | None = None
) -> LargeDeviationResult:
    """Fraction of walks of length n with |n chi - log||gamma_1 ... gamma_n||| > eps n."""
    if runs < 1000:
        raise ValueError("need runs >= 1000")
    if chi is None:
        chi = 0.0 if spec.is_compact() else estimate_lyapunov(spec, max(1000, n), 100, seed).chi_hat
    if spec.is_compact() or chi <= CHI_ZERO_TOL:
        return LargeDeviationResult(0.0, 0.0, False, chi, n)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(n,)))
    prods = _Products(spec, runs)
    prods.run(rng, n)
    exceed = np.abs(n * chi - prods.log_norm()) > eps * n
    rate = float(exceed.mean())
    return LargeDeviationResult(rate, math.sqrt(max(rate * (1 - rate), 1.0 / runs) / runs), True, chi, n)
