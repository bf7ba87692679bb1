"""Example families and the report that evaluates the main sufficient condition.

The condition compares h/chi with C * max(1, log(log M / h))^2.  The constant
C is not known, so the report only ever states whether the condition holds
at the C supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .algebraic import (
    ExactMatrix,
    ExactScalar,
    exact_product_entropy,
    pingpong_certify,
    splitting_rate_bound,
    theta_n,
)
from .circle import arc_mass_max, detail
from .constants import CHI_ZERO_TOL
from .errors import DomainError, FurstenbergError, ParameterOutOfScope
from .sl2 import PI, compose, diagonal, rotation
from .walks import Atom, MeasureSpec, estimate_lyapunov, estimate_stationary, holder_probe

VERDICT_PREFIX = "condition-level evidence:"


# ---------------------------------------------------------------- families

def two_gen(n: int) -> MeasureSpec:
    """Uniform measure on a rational rotation A and a diagonal B with norm 1 + O(n^-3)."""
    if n < 2:
        raise ParameterOutOfScope("two_gen needs n >= 2")
    q = n * n + 1
    c = Fraction(n * n - 1, q)
    s = Fraction(2 * n, q)
    a = ExactMatrix(c, -s, s, c)
    b = ExactMatrix(Fraction(n ** 3 + 1, n ** 3), 0, 0, Fraction(n ** 3, n ** 3 + 1))
    half = Fraction(1, 2)
    return MeasureSpec.from_exact([(a, half), (b, half)], name=f"two_gen({n})", params={"family": "two_gen", "n": n})


def _sympy_exact(expr) -> ExactScalar | None:
    """Convert a sympy number of the form p + q*sqrt(d) into an ExactScalar."""
    expr = sympy.nsimplify(sympy.simplify(expr))
    a, b, d = Fraction(0), Fraction(0), 1
    for term in sympy.Add.make_args(expr):
        coeff, rest = term.as_coeff_Mul()
        if rest == 1:
            a += Fraction(int(coeff.p), int(coeff.q))
            continue
        if not (rest.is_Pow and rest.exp == sympy.Rational(1, 2) and rest.base.is_Integer):
            return None
        if d not in (1, int(rest.base)):
            return None
        d = int(rest.base)
        b += Fraction(int(coeff.p), int(coeff.q))
    return ExactScalar(a, b, d)


def _conjugate_exact(m: ExactMatrix, two_alpha_cos: ExactScalar, two_alpha_sin: ExactScalar) -> ExactMatrix:
    """R_alpha m R_-alpha from the exact cosine and sine of 2 alpha."""
    c2 = (1 + two_alpha_cos) * Fraction(1, 2)
    s2 = (1 - two_alpha_cos) * Fraction(1, 2)
    cs = two_alpha_sin * Fraction(1, 2)
    p, q, r, t = m.entries
    return ExactMatrix(
        c2 * p - cs * (q + r) + s2 * t,
        cs * (p - t) + c2 * q - s2 * r,
        cs * (p - t) - s2 * q + c2 * r,
        s2 * p + cs * (q + r) + c2 * t,
        check=False,
    )


def rotational(a: int, b: int = 1, entries: Sequence[ExactMatrix] | None = None) -> MeasureSpec:
    """(1/ab) sum over i < a, j < b of the atoms R^i A_j R^-i with R the rotation by pi/a.

    Conjugates are exact when cos(2 pi i / a) and sin(2 pi i / a) lie in a
    quadratic field; otherwise the atoms carry floating-point matrices only.
    """
    if a < 1 or b < 1:
        raise ParameterOutOfScope("rotational needs a, b >= 1")
    if entries is None:
        entries = [ExactMatrix(Fraction(3 + j, 2 + j), 0, 0, Fraction(2 + j, 3 + j)) for j in range(b)]
    if len(entries) != b:
        raise ParameterOutOfScope(f"expected {b} matrices, got {len(entries)}")
    w = Fraction(1, a * b)
    atoms = []
    for i in range(a):
        cos2 = _sympy_exact(sympy.cos(2 * sympy.pi * i / a))
        sin2 = _sympy_exact(sympy.sin(2 * sympy.pi * i / a))
        for j, m in enumerate(entries):
            r = rotation(PI * i / a)
            mat = r.matrix @ m.to_float() @ r.inverse().matrix
            exact = None
            if cos2 is not None and sin2 is not None:
                try:
                    exact = _conjugate_exact(m, cos2, sin2)
                    mat = exact.to_float()
                except FurstenbergError:
                    exact = None
            atoms.append(Atom(mat, w, exact, label=f"R^{i} A{j} R^-{i}"))
    params = {"family": "rotational", "a": a, "b": b, "entries": [m.rows() for m in entries]}
    return MeasureSpec(tuple(atoms), name=f"rotational({a},{b})", params=params)


def _add_angles(x, y):
    """(sin, cos) of a sum from the (sin, cos) of the summands."""
    return x[0] * y[1] + x[1] * y[0], x[1] * y[1] - x[0] * y[0]


def large_element(r: float, n_steps: int) -> MeasureSpec:
    """Measure on 5 * 2^n conjugates of diag(c, 1/c), c = ceil(r + sqrt p) - sqrt p.

    Angles are j*pi/5 + alpha_i where the alpha_i are binary sums of angles with
    rational sine and cosine.  Only the j = 0 atoms are exact.
    """
    if r <= 0 or n_steps < 1:
        raise ParameterOutOfScope("large_element needs r > 0 and n_steps >= 1")
    n = n_steps
    eps = 1.0 / (2 * 8 ** (n + 1))
    bound = 1.0 / math.tan(0.5 * eps)
    p = int(sympy.nextprime(math.ceil(bound * bound) - 1))
    if math.isqrt(p) ** 2 == p:
        raise ParameterOutOfScope("sqrt p must be irrational")
    root = ExactScalar(0, 1, p)
    ceil_val = math.ceil(r + float(root))
    c_hat = ExactScalar(ceil_val) - root
    betas = [theta_n(8 ** (n + 1 - k)) for k in range(n)]
    zero = (ExactScalar(0), ExactScalar(1))
    alphas = []
    for k in range(2 ** n):
        acc = zero
        for i in range(n):
            if (k >> i) & 1:
                acc = _add_angles(acc, betas[i])
        alphas.append(acc)
    diag_hat = ExactMatrix(c_hat, 0, 0, c_hat.inverse())
    w = Fraction(1, 5 * 2 ** n)
    atoms = []
    for i, (s, c) in enumerate(alphas):
        alpha = math.atan2(float(s), float(c))
        two = (2 * s * c, c * c - s * s)
        exact0 = _conjugate_exact(diag_hat, two[1], two[0])
        for j in range(5):
            if j == 0:
                atoms.append(Atom(exact0.to_float(), w, exact0, label=f"g{i},0"))
            else:
                angle = j * PI / 5 + alpha
                mat = compose([rotation(angle), diagonal(float(c_hat)), rotation(-angle)]).matrix
                atoms.append(Atom(mat, w, None, label=f"g{i},{j}"))
    params = {"family": "large_element", "r": r, "n_steps": n, "prime": p, "epsilon": eps}
    return MeasureSpec(tuple(atoms), name=f"large_element({r},{n})", params=params)


def large_element_certificate(spec: MeasureSpec):
    """Ping-pong certificate for the Galois conjugates (ceil(r + sqrt p) + sqrt p) of the atoms."""
    p = spec.params["prime"]
    r = spec.params["r"]
    lam = math.ceil(r + math.sqrt(p)) + math.sqrt(p)
    contracting = math.ceil(r + math.sqrt(p)) - math.sqrt(p) < 1.0
    elements = []
    for atom in spec.atoms:
        t1 = 0.5 * math.atan2(atom.matrix[1, 0] + atom.matrix[0, 1], atom.matrix[0, 0] - atom.matrix[1, 1])
        elements.append((t1 + (PI / 2 if contracting else 0.0), lam))
    return pingpong_certify(elements, spec.params["epsilon"])


def build_example(family: str, **params) -> MeasureSpec:
    if family == "two_gen":
        return two_gen(int(params.get("n", 2)))
    if family == "rotational":
        entries = params.get("entries")
        if entries is not None:
            entries = [ExactMatrix.parse(m) for m in entries]
        return rotational(int(params.get("a", 5)), int(params.get("b", 1)), entries)
    if family == "large_element":
        return large_element(float(params.get("r", 1.0)), int(params.get("n_steps", 1)))
    raise ParameterOutOfScope(f"unknown family {family!r}")


# ---------------------------------------------------------------- condition

def evaluate_condition(h: float, chi: float, log_M: float, C: float) -> float:
    """(h / chi) / (C * max(1, log(log_M / h))^2), evaluated in logarithms."""
    if min(h, chi, C) <= 0 or log_M <= 0:
        raise DomainError("h, chi, log_M and C must be positive")
    log_M = max(log_M, h)
    lever = max(1.0, math.log(log_M / h))
    return math.exp(math.log(h) - math.log(chi) - math.log(C) - 2.0 * math.log(lever))


@dataclass(frozen=True)
class Budgets:
    lyapunov_steps: int = 20000
    lyapunov_samples: int = 200
    stationary_samples: int = 100000
    burn_in: int = 2000
    n_max: int = 12
    detail_radii: tuple = (1e-1, 10 ** -1.5, 1e-2, 10 ** -2.5, 1e-3)
    holder_radii: tuple = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


@dataclass
class CertificateReport:
    spec_name: str
    C_used: float
    t: float
    chi: dict | None = None
    entropy_envelope: list | None = None
    all_distinct: list | None = None
    h_rw_presumptive: float | None = None
    freeness: bool = False
    h_used: float | None = None
    h_source: str = ""
    log_M_bound: float | None = None
    max_height: float | None = None
    field_degree: int | None = None
    alpha0_observed: float | None = None
    alpha0_std_error: float | None = None
    stationary_aborted: int = 0
    condition_ratio: float | None = None
    verdict: str = ""
    detail_decay: list = field(default_factory=list)
    holder: dict | None = None
    errors: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _shannon(weights) -> float:
    p = np.array([float(w) for w in weights])
    return float(-(p * np.log(p)).sum())


def full_report(spec: MeasureSpec, t: float, C: float = 1.0, budgets: Budgets = Budgets(), seed: int = 0, workers: int = 1) -> CertificateReport:
    """Assemble chi, the entropy envelope, the splitting-rate bound and non-degeneracy into one report."""
    rep = CertificateReport(spec.name, C, t)
    rep.notes.append("entropy envelope values are upper bounds for the random walk entropy")

    def guarded(stage, fn):
        try:
            return fn()
        except FurstenbergError as exc:
            rep.errors.append({"stage": stage, "code": exc.code, "message": str(exc)})
            return None

    lyap = guarded("lyapunov", lambda: estimate_lyapunov(spec, budgets.lyapunov_steps, budgets.lyapunov_samples, seed, workers))
    if lyap is not None:
        rep.chi = asdict(lyap)
    height = guarded("splitting_rate", lambda: splitting_rate_bound(spec))
    if height is not None:
        rep.log_M_bound = height.log_m_mu_bound
        rep.max_height = height.max_height
        rep.field_degree = height.field_degree
    env = guarded("entropy", lambda: exact_product_entropy(spec, budgets.n_max))
    if env is not None:
        rep.entropy_envelope = list(env.values)
        rep.all_distinct = list(env.all_distinct)
        rep.freeness = all(env.all_distinct)
        if rep.freeness:
            rep.h_rw_presumptive = _shannon(a.weight for a in spec.atoms)
            rep.h_used = rep.h_rw_presumptive
            rep.h_source = f"presumptive, conditional on freeness (all words distinct to length {budgets.n_max})"
        else:
            rep.h_used = min(env.values)
            rep.h_source = "entropy envelope minimum (upper bound)"
    elif spec.params.get("family") == "large_element":
        cert = guarded("pingpong", lambda: large_element_certificate(spec))
        if cert is not None:
            rep.freeness = True
            rep.h_rw_presumptive = _shannon(a.weight for a in spec.atoms)
            rep.h_used = rep.h_rw_presumptive
            rep.h_source = "presumptive, conditional on freeness (ping-pong certificate of the Galois conjugates)"
    stat = guarded("stationary", lambda: estimate_stationary(spec, budgets.burn_in, budgets.stationary_samples, seed, workers))
    if stat is not None:
        rep.stationary_aborted = stat.aborted
        alpha, _ = arc_mass_max(stat.measure, t)
        rep.alpha0_observed = alpha
        rep.alpha0_std_error = math.sqrt(alpha * (1 - alpha) / stat.measure.angles.size)
        for r in budgets.detail_radii:
            s = detail(stat.measure, r, n=2 ** 17)
            lr = math.log(1.0 / r)
            rep.detail_decay.append({"r": r, "detail": s, "beta1": lr ** -1, "beta2": lr ** -2})
        fit = guarded("holder", lambda: holder_probe(stat, budgets.holder_radii))
        if fit is not None:
            rep.holder = asdict(fit)
    rep.verdict = _verdict(rep, lyap)
    return rep


def _verdict(rep: CertificateReport, lyap) -> str:
    reasons = []
    if rep.h_used is not None and rep.h_used <= 0:
        reasons.append("zero entropy")
    if lyap is not None and lyap.chi_hat <= CHI_ZERO_TOL:
        reasons.append("zero Lyapunov exponent")
    if reasons:
        return f"{VERDICT_PREFIX} condition inapplicable ({' and '.join(reasons)})"
    if rep.h_used is None or lyap is None or rep.log_M_bound is None:
        return f"{VERDICT_PREFIX} condition not evaluated (missing inputs)"
    rep.condition_ratio = evaluate_condition(rep.h_used, lyap.chi_hat, rep.log_M_bound, rep.C_used)
    if rep.condition_ratio > 1:
        return f"{VERDICT_PREFIX} condition satisfied at C = {rep.C_used:g}"
    return f"{VERDICT_PREFIX} condition not satisfied at C = {rep.C_used:g}"
