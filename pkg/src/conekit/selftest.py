"""Self-test harness: oracle suites runnable from the command line.

Each check compares a computed value with an independent oracle (closed
form, scalar quadrature or Monte Carlo) and records the outcome. Setting
``CONEKIT_SELFTEST_FAULT`` to ``1`` (all suites) or a suite name perturbs the
computed values so the harness itself can be tested.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .cones import ConeBound, prob_beta1_k1, prob_beta2_cone, prob_wishart_elliptical_k1, prob_wishart_gaussian
from .densities import LOGPDFS, MultimatrixParams, sample_spherical_blocks
from .generators import EllipticalGenerator, gamma_tr_integral, normalization_check, zeta_coeff
from .zonal import JackEvaluator, hypergeometric_pFq, jack_table, weighted_series_rPq
from .numeric import Spectrum

FAULT_ENV = "CONEKIT_SELFTEST_FAULT"
LEVELS = ("quick", "full")
MC_DRAWS = 1_000_000
MC_SIGMAS = 3.0


@dataclass
class Check:
    suite: str
    name: str
    value: float
    expected: float
    tolerance: float
    kind: str  # "abs", "rel" or "se" (tolerance in standard errors)
    passed: bool = False

    def evaluate(self) -> "Check":
        err = abs(self.value - self.expected)
        if self.kind == "rel":
            err /= max(abs(self.expected), 1e-300)
        self.passed = bool(math.isfinite(self.value) and err <= self.tolerance)
        return self


def _fault(suite: str) -> bool:
    flag = os.environ.get(FAULT_ENV, "").strip()
    return flag in ("1", "all", suite)


def _check(suite, name, value, expected, tol, kind="rel") -> Check:
    value = float(value)
    if _fault(suite):
        value += max(1e-3 * abs(expected), 100.0 * tol) + 1e-3
    return Check(suite, name, value, float(expected), float(tol), kind).evaluate()


def suite_sum_rule(level: str) -> list[Check]:
    """``sum_kappa C_kappa(X) = tr(X)^r`` on random spectra."""
    out = []
    rng = np.random.default_rng(20240601)
    r_max = 10 if level == "full" else 6
    for beta in (1, 2):
        for m in (1, 2, 3, 4):
            x = rng.uniform(0.0, 1.0, (100, m))
            ev = JackEvaluator(jack_table(m, beta), x)
            worst = 0.0
            for r in range(r_max + 1):
                total = ev.block(r).sum(axis=0)
                worst = max(worst, float(np.max(np.abs(total / x.sum(axis=1) ** r - 1.0))))
            out.append(_check("sum_rule", f"m={m} beta={beta} r<={r_max}", 1.0 + worst, 1.0, 1e-10))
    return out


def suite_scalar(level: str) -> list[Check]:
    """m = 1 reductions against scalar special functions and closed forms."""
    out = []
    for a, b, x in [(1.0, 2.0, 1.0), (0.5, 1.5, -0.7), (2.5, 3.0, 0.4)]:
        got = hypergeometric_pFq([a], [b], Spectrum.of([x])).value
        out.append(_check("scalar", f"1F1({a};{b};{x})", got, special.hyp1f1(a, b, x), 1e-10))
    for a, b, c, x in [(1.0, 2.0, 3.0, 0.5), (0.5, 1.5, 2.5, -0.3)]:
        got = hypergeometric_pFq([a, b], [c], Spectrum.of([x])).value
        out.append(_check("scalar", f"2F1({a},{b};{c};{x})", got, special.hyp2f1(a, b, c, x), 1e-10))
    got = weighted_series_rPq(lambda r: math.gamma(2 + r), [1.0], [2.0], Spectrum.of([-0.5])).value
    out.append(_check("scalar", "rPq geometric", got, 2.0 / 3.0, 1e-10))

    p = MultimatrixParams.from_sizes(1, 2, [2])
    out.append(_check("scalar", "beta2 cone 1/3", prob_beta2_cone(p, ConeBound.from_roots([[0.5]])).probability, 1.0 / 3.0, 1e-8, "abs"))
    for n in (1, 2, 3, 4):
        for A in (0.5, 1.0, 2.0):
            pw = MultimatrixParams.from_sizes(1, 1, [n])
            got = prob_wishart_gaussian(pw, ConeBound.from_roots([[A]])).probability
            out.append(_check("scalar", f"wishart chi2 n={n} A={A}", got, stats.chi2.cdf(A, n), 1e-8, "abs"))
            gen = EllipticalGenerator("gaussian", n)
            got = prob_wishart_elliptical_k1(gen, pw, [[A]]).probability
            out.append(_check("scalar", f"elliptical chi2 n={n} A={A}", got, stats.chi2.cdf(A, n), 1e-8, "abs"))
    pb = MultimatrixParams.from_sizes(1, 1, [1])
    out.append(_check("scalar", "beta1 arcsine 1/3", prob_beta1_k1(pb, [[0.25]]).probability, 1.0 / 3.0, 1e-8, "abs"))
    return out


def _integrate_m1(law: str, n0: int, n1: int) -> float:
    params = MultimatrixParams.from_sizes(1, n0, [n1])
    f = LOGPDFS[law]
    if law in ("pearson7", "pearson2"):
        # n1 x 1 block; integrate radially over the n1-ball
        def radial(rho):
            x = np.zeros((n1, 1))
            x[0, 0] = rho
            return math.exp(f([x], params)) * rho ** (n1 - 1)

        area = 2.0 * math.pi ** (n1 / 2.0) / math.gamma(n1 / 2.0)
        hi = 1.0 if law == "pearson2" else np.inf
        return area * integrate.quad(radial, 0.0, hi, limit=200)[0]
    hi = 1.0 if law == "beta1" else np.inf
    return integrate.quad(lambda x: math.exp(f([[[x]]], params)), 0.0, hi, limit=200)[0]


def suite_normalization(level: str) -> list[Check]:
    """m = 1, k = 1 densities integrate to one; generator kernels normalise."""
    out = []
    sizes = [(1, 1), (2, 3), (3, 2)] if level == "quick" else [(a, b) for a in (1, 2, 3) for b in (1, 2, 3)]
    for law in ("pearson7", "beta2", "pearson2", "beta1"):
        for n0, n1 in sizes:
            out.append(_check("normalization", f"{law} n0={n0} n1={n1}", _integrate_m1(law, n0, n1), 1.0, 1e-6, "abs"))
    for gen, a in [(EllipticalGenerator("gaussian", 2), 1.0), (EllipticalGenerator("gaussian", 2), 2.0), (EllipticalGenerator("pearson7", 1, 1.0), 1.0)]:
        out.append(_check("normalization", f"kernel {gen.kind} D={gen.dimension} a={a}", normalization_check(gen, a), 0.0, 1e-8, "abs"))
    return out


def suite_zeta(level: str) -> list[Check]:
    """Closed-form kernel coefficients against quadrature."""
    out = []
    top = 4 if level == "full" else 2
    gens = [
        (EllipticalGenerator("gaussian", 2), 1e-7),
        (EllipticalGenerator("pearson7", 2, 3.0), 1e-6),
        (EllipticalGenerator("pearson2", 2, 12.5), 1e-6),
    ]
    for gen, tol in gens:
        for t in range(top + 1):
            for r in range(top + 1):
                z = float(zeta_coeff(gen, t, r, 1, 3))
                out.append(_check("zeta", f"{gen.kind} t={t} r={r}", z, gamma_tr_integral(gen, t, r, 1, 3), tol))
    return out


def _below(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Rows of the batch ``M`` with ``A - M`` positive definite."""
    return np.linalg.eigvalsh(A[None] - M)[:, 0] > 0


def mc_cases() -> list[tuple[str, MultimatrixParams, list, Callable]]:
    """The m = 2 Monte Carlo comparisons: (name, params, bounds, series)."""
    A1 = np.array([[0.5, 0.1], [0.1, 0.3]])
    A2 = np.array([[0.4, -0.05], [-0.05, 0.6]])
    B1 = np.array([[0.3, 0.05], [0.05, 0.25]])
    return [
        ("beta2 k=1", MultimatrixParams.from_sizes(2, 2, [3]), [A1], lambda p, b: prob_beta2_cone(p, ConeBound.from_matrices(b))),
        ("beta2 k=2", MultimatrixParams.from_sizes(2, 3, [2, 2]), [A1, A2], lambda p, b: prob_beta2_cone(p, ConeBound.from_matrices(b))),
        ("beta1 k=1", MultimatrixParams.from_sizes(2, 3, [2]), [B1], lambda p, b: prob_beta1_k1(p, b[0])),
    ]


def mc_estimate(name: str, params: MultimatrixParams, bounds: list, draws: int = MC_DRAWS, seed: int = 7, stream: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the cone probability."""
    d = sample_spherical_blocks(params, draws, seed=seed, stream=stream)
    blocks = d.B if name.startswith("beta1") else d.F
    hit = np.ones(d.count, dtype=bool)
    for M, A in zip(blocks, bounds):
        hit &= _below(np.asarray(A, dtype=float), M)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1.0 - p), 1e-300) / d.count)


def suite_mc(level: str, seed: int = 7) -> list[Check]:
    out = []
    for n, (name, params, bounds, series) in enumerate(mc_cases()):
        value = series(params, bounds).probability
        p, se = mc_estimate(name, params, bounds, seed=seed, stream=n)
        c = _check("mc", name, value, p, MC_SIGMAS * se, "abs")
        c.kind = "se"
        out.append(c)
    return out


SUITES: dict[str, Callable[[str], list[Check]]] = {
    "sum_rule": suite_sum_rule,
    "scalar": suite_scalar,
    "normalization": suite_normalization,
    "zeta": suite_zeta,
}


def run_selftest(level: str = "quick", progress: Callable[[str], None] | None = None) -> dict:
    """Run the suites for ``level``; returns a machine-readable report."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    suites = dict(SUITES)
    if level == "full":
        suites["mc"] = suite_mc
    report = {"level": level, "suites": {}, "passed": True}
    for name, fn in suites.items():
        if progress:
            progress(name)
        checks = fn(level)
        ok = all(c.passed for c in checks)
        report["suites"][name] = {
            "passed": ok,
            "checks": len(checks),
            "failures": [asdict(c) for c in checks if not c.passed],
        }
        report["passed"] = report["passed"] and ok
    return report
