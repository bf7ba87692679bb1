"""Acceptance criteria, one test each.

Every test prints a single line "ACCEPTANCE <n> PASS|FAIL <summary>" and then
asserts the same condition, so a red criterion shows up both in the printed
summary and as a failing test.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from furstenberg.algebraic import exact_product_entropy
from furstenberg.certificate import Budgets, full_report, rotational, two_gen
from furstenberg.checks import (
    TruncatedGaussianSpec,
    corollary_constant,
    cramer_bound,
    cramer_mc_check,
    haar_growth_check,
    random_families,
    truncated_gaussian_check,
    truncated_gaussian_stats,
)
from furstenberg.circle import (
    CircleMeasure,
    arc_mass_max,
    convolve_measures,
    detail,
    detail_wasserstein_gap_check,
    order_k_detail,
    order_k_to_detail_bound_check,
)
from furstenberg.sl2 import (
    LieVector,
    act,
    act_derivative,
    batch_cartan,
    cartan_decompose,
    circle_distance,
    compose,
    diagonal,
    rotation,
    taylor_slope,
)
from furstenberg.walks import estimate_stationary, renewal_experiment, rotation_invariance_test

PI = math.pi


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, summary: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'} {summary}")
        assert ok, summary

    return emit


def _element(rng, max_log_norm):
    lam = math.exp(rng.uniform(0.0, max_log_norm))
    return compose([rotation(rng.uniform(0, PI)), diagonal(lam), rotation(-rng.uniform(0, PI))])


def _atomic(rng, max_atoms=6, spread=PI):
    m = int(rng.integers(1, max_atoms + 1))
    return CircleMeasure.from_atoms(rng.uniform(0, PI) + rng.uniform(0, spread, m), rng.dirichlet(np.ones(m)))


def test_1_gaussian_detail_identity(verdict):
    start = time.perf_counter()
    worst = 0.0
    for r in (0.005, 0.01, 0.02, 0.05):
        for sigma in (0.005, 0.01, 0.02, 0.05):
            got = detail(CircleMeasure.wrapped_gaussian(0.7, sigma, 2**14), r, n=2**14)
            worst = max(worst, abs(got / (r * r / (r * r + sigma * sigma)) - 1))
    elapsed = time.perf_counter() - start
    verdict(1, worst < 0.01 and elapsed < 5.0, f"max relative error {worst:.2e} (< 1e-2), {elapsed:.2f} s (< 5 s)")


def test_2_detail_calculus_suite(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(20)
    tol = 1e-6
    violations = {"submultiplicative": 0, "bounded": 0, "k1_agreement": 0, "wasserstein_gap": 0, "induction": 0}
    for _ in range(100):
        k = int(rng.integers(2, 7))
        lams = [_atomic(rng, 3, spread=0.3) for _ in range(k)]
        r = float(rng.uniform(0.02, 0.1))
        conv = lams[0]
        for lam in lams[1:]:
            conv = convolve_measures(conv, lam)
        if order_k_detail(conv, r, k) > math.prod(detail(lam, r) for lam in lams) + tol:
            violations["submultiplicative"] += 1
    for _ in range(100):
        lam = _atomic(rng)
        k = int(rng.integers(1, 7))
        if not 0.0 <= order_k_detail(lam, float(rng.uniform(0.005, 0.3)), k) <= 1 + tol:
            violations["bounded"] += 1
    for _ in range(100):
        lam = _atomic(rng)
        r = float(rng.uniform(0.005, 0.2))
        if abs(order_k_detail(lam, r, 1) - detail(lam, r)) > tol:
            violations["k1_agreement"] += 1
    for _ in range(100):
        a, b = _atomic(rng), _atomic(rng)
        if not detail_wasserstein_gap_check(a, b, float(rng.uniform(0.01, 0.2)), int(rng.integers(1, 4))).holds:
            violations["wasserstein_gap"] += 1
    for _ in range(100):
        lam = _atomic(rng, 5, spread=0.1)
        if not order_k_to_detail_bound_check(lam, 0.002, 0.03, int(rng.integers(2, 4)), n_scales=12).holds:
            violations["induction"] += 1
    elapsed = time.perf_counter() - start
    ok = not any(violations.values()) and elapsed < 60
    verdict(2, ok, f"violations {violations} over 100 instances each, {elapsed:.1f} s (< 60 s)")


def test_3_cartan_geometry(verdict):
    rng = np.random.default_rng(30)
    n = 10_000
    t1, lam, t2 = rng.uniform(0, PI, n), np.exp(rng.uniform(0, 6, n)), rng.uniform(0, PI, n)
    c1, s1, c2, s2 = np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)
    m = np.empty((n, 2, 2))
    m[:, 0, 0] = lam * c1 * c2 + s1 * s2 / lam
    m[:, 0, 1] = lam * c1 * s2 - s1 * c2 / lam
    m[:, 1, 0] = lam * s1 * c2 - c1 * s2 / lam
    m[:, 1, 1] = lam * s1 * s2 + c1 * c2 / lam
    u1, l2, u2 = batch_cartan(m)
    back = np.empty_like(m)
    a1, b1, a2, b2 = np.cos(u1), np.sin(u1), np.cos(u2), np.sin(u2)
    back[:, 0, 0] = l2 * a1 * a2 + b1 * b2 / l2
    back[:, 0, 1] = l2 * a1 * b2 - b1 * a2 / l2
    back[:, 1, 0] = l2 * b1 * a2 - a1 * b2 / l2
    back[:, 1, 1] = l2 * b1 * b2 + a1 * a2 / l2
    roundtrip = float((np.minimum(np.abs(back - m).max(axis=(1, 2)), np.abs(back + m).max(axis=(1, 2))) / lam).max())

    h, deriv = 1e-6, 0.0
    for _ in range(n):
        g, x = _element(rng, 2.0), rng.uniform(0, PI)
        fd = float(np.angle(np.exp(2j * (act(g, x + h) - act(g, x - h))))) / (4 * h)
        d = act_derivative(g, x)
        deriv = max(deriv, abs(fd - d) / d)

    sandwich = 0
    for _ in range(n):
        g1, g2 = _element(rng, 3.0), _element(rng, 3.0)
        n12 = (g1 @ g2).norm()
        s = math.sin(circle_distance(cartan_decompose(g1).b_minus, cartan_decompose(g2).b_plus))
        if not g1.norm() * g2.norm() * s <= n12 * (1 + 1e-9) or not n12 <= g1.norm() * g2.norm() * (1 + 1e-12):
            sandwich += 1

    attractor = 0.0
    for _ in range(1000):
        lam_g = math.exp(rng.uniform(0.3, 4.0))
        g = compose([rotation(rng.uniform(0, PI)), diagonal(lam_g), rotation(-rng.uniform(0, PI))])
        c = cartan_decompose(g)
        x = rng.uniform(0.05, PI / 2 - 0.05)
        b = c.b_minus + x * rng.choice([-1, 1])
        lhs = 1.0 / math.tan(circle_distance(c.b_plus, act(g, b)))
        attractor = max(attractor, abs(lhs / (c.lam ** 2 * math.tan(circle_distance(b, c.b_minus))) - 1))

    ok = roundtrip <= 1e-10 and deriv <= 1e-6 and sandwich == 0 and attractor <= 1e-8
    verdict(3, ok, f"roundtrip {roundtrip:.1e}, derivative {deriv:.1e}, sandwich violations {sandwich}/{n}, "
                   f"attractor {attractor:.1e}")


TAYLOR_CHAINS = [
    ([compose([rotation(0.2), diagonal(3.0), rotation(-0.9)]), compose([rotation(2.0), diagonal(2.0), rotation(-0.4)])],
     [LieVector(0.6, 0.0, 0.8), LieVector(0.0, 0.8, 0.6)], 0.7),
    ([compose([rotation(0.3), diagonal(4.0), rotation(-0.3)]), compose([rotation(1.4), diagonal(3.0), rotation(-1.4)])],
     [LieVector(0.6, 0.0, 0.8), LieVector(0.0, 0.8, 0.6)], 0.7),
    ([compose([rotation(1.1), diagonal(2.5), rotation(-0.2)]), compose([rotation(0.5), diagonal(1.8), rotation(-2.6)]),
      compose([rotation(2.9), diagonal(3.5), rotation(-1.0)])],
     [LieVector(0.8, 0.6, 0.0), LieVector(0.0, 0.6, 0.8), LieVector(0.6, -0.48, 0.64)], 1.3),
]


def test_4_taylor_linearization(verdict):
    start = time.perf_counter()
    slopes = [taylor_slope(gs, dirs, b, [1e-3, 1e-4, 1e-5]) for gs, dirs, b in TAYLOR_CHAINS]
    elapsed = time.perf_counter() - start
    ok = all(abs(s - 2.0) <= 0.1 for s in slopes) and elapsed < 30
    verdict(4, ok, f"slopes {[round(s, 4) for s in slopes]} (2 +- 0.1), {elapsed:.1f} s (< 30 s)")


def test_5_cramer_bound(verdict):
    start = time.perf_counter()
    value = cramer_bound(0.5, 1.0, 0.25, 10)
    const = corollary_constant()
    reports = [cramer_mc_check(fam, 10**5, 1000 + i) for i, fam in enumerate(random_families(20, 0))]
    elapsed = time.perf_counter() - start
    failed = [r.name for r in reports if r.failed]
    ok = abs(value - 0.2704) <= 1e-4 and abs(const - 0.153426) <= 1e-6 and not failed and elapsed < 120
    verdict(5, ok, f"bound {value:.6f} (0.2704 +- 1e-4), constant {const:.7f}, "
                   f"MC failures {failed} of 20 at 1e5 runs, {elapsed:.1f} s (< 120 s)")


def test_6_truncated_gaussian(verdict):
    entropy = truncated_gaussian_stats(TruncatedGaussianSpec(1.0, 6.0)).entropy
    reports = [r for a in (2.0, 3.0, 4.0, 6.0) for r in truncated_gaussian_check(TruncatedGaussianSpec(1.0, a))]
    failed = [f"{r.name}: {r.observed:.4g} > {r.bound_or_target:.4g}" for r in reports if r.failed]
    ok = abs(entropy - 4.2569) <= 1e-3 and not failed
    verdict(6, ok, f"entropy {entropy:.6f} (4.2569 +- 1e-3), failures {failed}")


def test_7_haar_volume(verdict):
    rep = haar_growth_check((2, 4, 8, 16), 10**6, 0)
    ratios = [round(float(x), 4) for x in rep.details["ratios"]]
    verdict(7, not rep.failed, f"ratios {ratios}, spread {rep.observed:.3f} (<= 4), "
                               f"with 5 SE slack {rep.details['spread_with_slack']:.3f}")


def test_8_two_generator_flagship(verdict):
    start = time.perf_counter()
    n = 20
    spec = two_gen(n)
    rep = full_report(spec, 0.5, 1.0, Budgets(), seed=0)
    words = exact_product_entropy(spec, 12)
    elapsed = time.perf_counter() - start
    chi = rep.chi["chi_hat"]
    log_m = math.log(4) + 8 * math.log(8001)
    checks = {
        "chi": chi <= 1.25 * n ** -3,
        "log_M": rep.log_M_bound == pytest.approx(log_m, rel=1e-15, abs=0) and rep.max_height == 8001,
        "words": words.all_distinct[11] and words.support_sizes[11] == 2**12,
        "arc_mass": rep.alpha0_observed < 0.45,
        "ratio": rep.condition_ratio is not None and rep.condition_ratio > 10,
        "runtime": elapsed < 600,
    }
    ok = all(checks.values())
    verdict(8, ok, f"chi {chi:.3e} (<= {1.25 * n ** -3:.3e}), log M {rep.log_M_bound:.10f}, "
                   f"{words.support_sizes[11]} distinct words, arc mass {rep.alpha0_observed:.4f} (< 0.45), "
                   f"ratio {rep.condition_ratio:.4g} (> 10), {elapsed:.1f} s; failing {[k for k, v in checks.items() if not v]}")


def test_9_rotational_symmetry(verdict):
    est = estimate_stationary(rotational(5), 2000, 10**5, seed=9)
    w1 = rotation_invariance_test(est, 5, 50, seed=9)
    mass, _ = arc_mass_max(est.measure, PI / 5)
    se = math.sqrt(mass * (1 - mass) / est.angles.size)
    ok = w1.passes and mass <= 0.2 + 4 * se
    verdict(9, ok, f"W1 {w1.statistic:.2e} vs null {w1.null_mean:.2e} + 4 x {w1.null_sd:.1e}, "
                   f"arc mass {mass:.4f} (<= 0.2 + 4 x {se:.1e})")


def test_10_renewal_uniformity(verdict):
    start = time.perf_counter()
    v_grid = np.linspace(0, PI, 8, endpoint=False)
    res = renewal_experiment(two_gen(2), v_grid, [1e2, 1e4], 1000, seed=0)
    elapsed = time.perf_counter() - start
    ok = res.decreased and elapsed < 300
    verdict(10, ok, f"max pairwise W1 {res.statistics[0]:.4f} +- {res.std_errors[0]:.4f} at P=1e2, "
                    f"{res.statistics[-1]:.4f} +- {res.std_errors[-1]:.4f} at P=1e4, {elapsed:.1f} s (< 300 s)")


def test_11_determinism(verdict, tmp_path):
    spec_json = json.dumps(two_gen(5).to_json())
    args = [sys.executable, "-m", "furstenberg.cli", "certificate", "--seed", "11", "--workers", "2",
            "--samples", "5000", "--burn-in", "500", "--n-max", "6", "--steps", "2000",
            "--lyapunov-samples", "100", "--out", str(tmp_path)]
    outputs = []
    for _ in range(2):
        res = subprocess.run(args, input=spec_json, capture_output=True, text=True, timeout=600)
        files = {p.name: p.read_bytes() for p in sorted(tmp_path.iterdir())}
        outputs.append((res.returncode, res.stdout, files))
    same = outputs[0] == outputs[1] and outputs[0][0] == 0
    verdict(11, same, f"certificate run twice with seed 11 and 2 workers: "
                      f"{'byte-identical' if same else 'outputs differ'} across {len(outputs[0][2]) + 1} documents")
