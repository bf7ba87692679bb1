import json
import math
from fractions import Fraction

import numpy as np
import pytest

from furstenberg.algebraic import ExactMatrix, ExactScalar
from furstenberg.certificate import (
    VERDICT_PREFIX,
    Budgets,
    CertificateReport,
    _verdict,
    build_example,
    evaluate_condition,
    full_report,
    large_element,
    large_element_certificate,
    rotational,
    two_gen,
)
from furstenberg.errors import DomainError, ParameterOutOfScope
from furstenberg.sl2 import rotation
from furstenberg.walks import LyapunovEstimate, MeasureSpec

SMALL = Budgets(
    lyapunov_steps=2000, lyapunov_samples=100, stationary_samples=2000, burn_in=500, n_max=6,
)


# ---------------------------------------------------------------- families

def test_two_gen_three():
    spec = two_gen(3)
    a, b = (atom.exact for atom in spec.atoms)
    assert a == ExactMatrix(Fraction(4, 5), Fraction(-3, 5), Fraction(3, 5), Fraction(4, 5))
    assert b == ExactMatrix(Fraction(28, 27), 0, 0, Fraction(27, 28))
    assert a.det() == ExactScalar(1) and b.det() == ExactScalar(1)
    assert [atom.weight for atom in spec.atoms] == [Fraction(1, 2)] * 2


def test_two_gen_two():
    a, b = (atom.exact for atom in two_gen(2).atoms)
    assert a.rows() == [["3/5", "-4/5"], ["4/5", "3/5"]]
    assert b.rows() == [["9/8", "0"], ["0", "8/9"]]


def test_two_gen_identities_for_large_n():
    for n in [2, 17, 999, 123456, 10**6]:
        a, b = (atom.exact for atom in two_gen(n).atoms)
        assert a.det() == ExactScalar(1) and b.det() == ExactScalar(1)
        assert (n * n - 1) ** 2 + (2 * n) ** 2 == (n * n + 1) ** 2


def test_two_gen_scope():
    with pytest.raises(ParameterOutOfScope):
        two_gen(1)


def _conjugated_multiset(spec, angle):
    r = rotation(angle).matrix
    return [r @ a.matrix @ r.T for a in spec.atoms]


def _same_psl_multiset(xs, ys, tol):
    remaining = list(ys)
    for x in xs:
        hit = next((i for i, y in enumerate(remaining) if min(np.abs(x - y).max(), np.abs(x + y).max()) < tol), None)
        if hit is None:
            return False
        remaining.pop(hit)
    return not remaining


def test_rotational_five_invariant_under_conjugation():
    spec = rotational(5)
    assert len(spec.atoms) == 5
    assert _same_psl_multiset(_conjugated_multiset(spec, math.pi / 5), [a.matrix for a in spec.atoms], 1e-12)
    assert spec.atoms[0].exact is not None
    assert not spec.is_exact


def test_rotational_four_is_exact_and_invariant():
    spec = rotational(4, 2)
    assert spec.is_exact
    keys = {a.exact.key() for a in spec.atoms}
    half = ExactScalar(Fraction(1, 2))
    # conjugation by R_{pi/4}: cos(pi/2) = 0, sin(pi/2) = 1
    from furstenberg.certificate import _conjugate_exact

    moved = {_conjugate_exact(a.exact, ExactScalar(0), ExactScalar(1)).canonical().key() for a in spec.atoms}
    assert moved == keys
    assert all(a.exact.det() == ExactScalar(1) for a in spec.atoms)
    assert sum(a.weight for a in spec.atoms) == 1 and half == half


def test_rotational_custom_entries_via_builder():
    spec = build_example("rotational", a=3, b=1, entries=[[["2", "1"], ["1", "1"]]])
    assert len(spec.atoms) == 3
    assert spec.atoms[0].exact == ExactMatrix(2, 1, 1, 1)
    with pytest.raises(ParameterOutOfScope):
        rotational(3, 2, [ExactMatrix(2, 1, 1, 1)])


def test_large_element_construction():
    spec = large_element(1.0, 1)
    p = spec.params["prime"]
    eps = spec.params["epsilon"]
    assert eps == pytest.approx(1 / 128)
    assert p == 65537
    assert p >= (1 / math.tan(eps / 2)) ** 2
    assert len(spec.atoms) == 10
    exact = [a for a in spec.atoms if a.exact is not None]
    assert len(exact) == 2 and all(a.exact.det() == ExactScalar(1) for a in exact)
    assert all(a.exact.field() == p for a in exact)
    assert spec.max_norm() <= 2.0


@pytest.mark.parametrize("r", [0.3, 1.0, 5.0])
def test_large_element_pingpong(r):
    cert = large_element_certificate(large_element(r, 1))
    assert cert.verify()
    assert cert.h_rw == pytest.approx(math.log(10))


def test_large_element_two_steps():
    spec = large_element(1.0, 2)
    assert spec.params["prime"] == 4194319 and len(spec.atoms) == 20
    assert large_element_certificate(spec).verify()


def test_build_example_unknown_family():
    with pytest.raises(ParameterOutOfScope):
        build_example("nonsense")


# ---------------------------------------------------------------- condition

def test_evaluate_condition_example():
    value = evaluate_condition(math.log(2), 1e-3, math.e, 1.0)
    assert value == pytest.approx(693.147 / 1.86736, rel=1e-5)
    assert value == pytest.approx(371.19, abs=0.01)


def test_evaluate_condition_clamp():
    h, chi = 0.5, 1e-2
    assert evaluate_condition(h, chi, h * math.e, 1.0) == pytest.approx(h / chi)
    assert evaluate_condition(h, chi, h * 0.5, 1.0) == pytest.approx(h / chi)


def test_evaluate_condition_linear_in_C():
    r1 = evaluate_condition(0.7, 1e-4, 80.0, 1.0)
    assert evaluate_condition(0.7, 1e-4, 80.0, 2.0) == pytest.approx(r1 / 2)


def test_evaluate_condition_overflow_safe():
    assert math.isfinite(evaluate_condition(1.0, 1e-300, 1e300, 1.0))


def test_evaluate_condition_domain():
    for args in [(0, 1, 1, 1), (1, 0, 1, 1), (1, 1, 1, 0), (1, -1, 1, 1), (1, 1, 0, 1)]:
        with pytest.raises(DomainError):
            evaluate_condition(*args)


def test_evaluate_condition_monotone():
    rng = np.random.default_rng(0)
    for _ in range(500):
        h = rng.uniform(0.1, 2)
        chi = 10 ** rng.uniform(-6, -1)
        log_m = h * math.e * rng.uniform(1.5, 100)
        dh = 1e-6 * h
        if math.log(log_m / (h + dh)) > 1:
            assert evaluate_condition(h + dh, chi, log_m, 1.0) > evaluate_condition(h, chi, log_m, 1.0)
        assert evaluate_condition(h, chi * (1 + 1e-6), log_m, 1.0) < evaluate_condition(h, chi, log_m, 1.0)


# ---------------------------------------------------------------- reports

def test_identity_measure_report():
    spec = MeasureSpec.from_exact([(ExactMatrix.identity(), 1)], name="identity")
    rep = full_report(spec, 0.5, budgets=SMALL)
    assert "zero entropy" in rep.verdict and "zero Lyapunov exponent" in rep.verdict
    assert rep.condition_ratio is None
    assert rep.verdict.startswith(VERDICT_PREFIX)
    assert any(e["stage"] == "stationary" for e in rep.errors)


def test_report_two_generators_small_budget():
    rep = full_report(two_gen(5), 0.5, budgets=SMALL, seed=1)
    assert rep.freeness and rep.h_used == pytest.approx(math.log(2))
    assert rep.log_M_bound == pytest.approx(math.log(4) + 8 * math.log(126))
    assert rep.condition_ratio is not None and rep.condition_ratio > 1
    assert rep.verdict == f"{VERDICT_PREFIX} condition satisfied at C = 1"
    assert [d["r"] for d in rep.detail_decay] == list(SMALL.detail_radii)
    assert rep.holder is not None
    json.dumps(rep.to_json())


def test_report_deterministic():
    a = full_report(two_gen(4), 0.5, budgets=SMALL, seed=3)
    b = full_report(two_gen(4), 0.5, budgets=SMALL, seed=3)
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)


def test_report_rotational_alpha0():
    budgets = Budgets(lyapunov_steps=2000, lyapunov_samples=100, stationary_samples=5000, burn_in=2000, n_max=4)
    rep = full_report(rotational(5), math.pi / 5, budgets=budgets, seed=2)
    assert rep.alpha0_observed <= 0.2 + 4 * rep.alpha0_std_error
    assert {e["stage"] for e in rep.errors} >= {"splitting_rate", "entropy"}
    assert "missing inputs" in rep.verdict


def test_report_large_element_uses_pingpong():
    budgets = Budgets(lyapunov_steps=1000, lyapunov_samples=100, stationary_samples=1000, burn_in=200, n_max=2)
    rep = full_report(large_element(1.0, 1), 0.3, budgets=budgets)
    assert rep.freeness and "ping-pong" in rep.h_source
    assert rep.h_used == pytest.approx(math.log(10))


def test_verdict_never_overclaims():
    lyap = LyapunovEstimate(1e-3, 1e-5, 1000, 100, 0, True)
    for h, log_m, C in [(0.7, 10.0, 1.0), (0.7, 10.0, 1e9), (0.0, 10.0, 1.0), (None, 10.0, 1.0), (0.7, None, 1.0)]:
        rep = CertificateReport("x", C, 0.5, h_used=h, log_M_bound=log_m)
        verdict = _verdict(rep, lyap)
        assert verdict.startswith(VERDICT_PREFIX)
        assert "absolutely continuous" not in verdict
