"""Cone probabilities ``P(0 < F_i < A_i)`` for the multimatrix laws.

Every probability reduces to one of two nested series over degree blocks

    pochhammer kernel   sum_R (c)_R / R! sum_{|r|=R} multinom(R; r) prod Q_{r_i}(a_i; b_i; -X_i)
    exponential kernel  sum_R    1 / R! sum_{|r|=R} multinom(R; r) prod Q_{r_i}(a_i; b_i; -X_i)

Both alternate and lose accuracy as the bounds grow (the first diverges once
``sum tr X_i >= 1``). The default ``kummer`` mode evaluates the transformed
series

    (1 + tau)^(-c) sum_R (c)_R / R! ... prod Q_{r_i}(b_i - a_i; b_i; X_i / (1 + tau))
    exp(-tau)      sum_R    1 / R! ... prod Q_{r_i}(b_i - a_i; b_i; X_i)

with ``tau = sum tr X_i``, whose terms are all positive and which converge
for every positive definite bound. ``direct`` mode sums the series as
written, for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .densities import MultimatrixParams, ParameterError, SupportError
from .generators import EllipticalGenerator, h_deriv_at_zero
from .numeric import DimensionError, DomainError, SignedLog, Spectrum, log_mv_gamma, pochhammer, sym_eigenvalues
from .zonal import BatchSeries, ConvergenceDomainError, Level, SeriesControl, nested_series, partial_sum_rQq

MODES = ("kummer", "direct")
PROB_SLACK = 1e-12


@dataclass(frozen=True)
class ConeBound:
    """``k`` symmetric positive definite bounds, kept with their spectra."""

    matrices: tuple
    spectra: tuple

    @classmethod
    def from_matrices(cls, matrices: Sequence) -> "ConeBound":
        mats, specs = [], []
        for i, A in enumerate(matrices):
            A = np.atleast_2d(np.asarray(A, dtype=float))
            spec = sym_eigenvalues(A)
            if not spec.is_positive_definite:
                raise DomainError(f"bound {i} is not positive definite (eigenvalues {spec.eigenvalues})")
            mats.append(A)
            specs.append(spec)
        if not mats:
            raise DimensionError("need at least one bound")
        if len({m.shape for m in mats}) != 1:
            raise DimensionError("all bounds must share the same size")
        return cls(tuple(mats), tuple(specs))

    @classmethod
    def from_roots(cls, roots: Sequence[Sequence[float]]) -> "ConeBound":
        """Diagonal bounds with the given latent roots."""
        return cls.from_matrices([np.diag(np.asarray(r, dtype=float)) for r in roots])

    @classmethod
    def scalar(cls, x: float, m: int, k: int = 1) -> "ConeBound":
        return cls.from_matrices([x * np.eye(m)] * k)

    @property
    def k(self) -> int:
        return len(self.matrices)

    @property
    def m(self) -> int:
        return self.matrices[0].shape[0]

    def eig_array(self, i: int) -> np.ndarray:
        return self.spectra[i].as_array()[None, :]


@dataclass
class ProbResult:
    probability: float
    raw: float
    converged: bool
    degree_used: int
    tail_estimate: float
    terms_evaluated: int
    levels: list = field(default_factory=list)
    modes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "probability": self.probability,
            "raw": self.raw,
            "converged": self.converged,
            "degree_used": self.degree_used,
            "tail_estimate": self.tail_estimate,
            "terms_evaluated": self.terms_evaluated,
            "levels": self.levels,
            "modes": self.modes,
        }


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _as_results(series: BatchSeries, log_scale: np.ndarray, sign: np.ndarray, modes: dict) -> list[ProbResult]:
    """Combine series values with (log) outer factors and clamp to [0, 1]."""
    out = []
    for s in range(series.value.shape[0]):
        val = float(series.value[s])
        with np.errstate(over="ignore"):
            raw = float(sign[s] * math.exp(log_scale[s]) * val) if val != 0 else 0.0
        in_range = -PROB_SLACK <= raw <= 1.0 + PROB_SLACK
        conv = bool(series.converged[s]) and in_range and math.isfinite(raw)
        levels = [
            {
                "level": j + 1,
                "degree_used": int(series.degree_used[s]),
                "tail_estimate": float(series.level_tails[j, s]),
                "converged": bool(series.converged[s]),
            }
            for j in range(series.level_tails.shape[0])
        ]
        out.append(
            ProbResult(
                probability=float(min(1.0, max(0.0, raw))) if math.isfinite(raw) else math.nan,
                raw=raw,
                converged=conv,
                degree_used=int(series.degree_used[s]),
                tail_estimate=float(series.tail_estimate[s]),
                terms_evaluated=int(series.terms_evaluated[s]),
                levels=levels,
                modes=dict(modes),
            )
        )
    return out


# ---------------------------------------------------------------------------
# kernels


def pochhammer_kernel(
    c: float,
    a: Sequence[float],
    b: Sequence[float],
    xs: Sequence[np.ndarray],
    ctrl: SeriesControl,
    mode: str = "kummer",
) -> tuple[BatchSeries, np.ndarray]:
    """``sum_R (c)_R/R! sum multinom prod Q(a_i; b_i; -X_i)`` for batches of spectra.

    Returns the series and the log of the outer factor that multiplies it.
    ``xs[i]`` has shape ``(S, m)``.
    """
    _check_mode(mode)
    xs = [np.asarray(x, dtype=float) for x in xs]
    tau = sum(x.sum(axis=1) for x in xs)
    finite = c <= 0 and c == math.floor(c)

    def weight(R: int) -> SignedLog:
        return pochhammer(c, R) / SignedLog(math.lgamma(R + 1), 1)

    if mode == "direct":
        reach = sum(np.abs(x).sum(axis=1) for x in xs)
        if not finite and np.any(reach >= 1.0):
            worst = float(reach.max())
            raise ConvergenceDomainError(
                f"direct series needs sum of |eigenvalues| over all bounds < 1, got {worst:.6g}"
            )
        levels = [Level(tuple([ai]), tuple([bi]), -x) for ai, bi, x in zip(a, b, xs)]
        return nested_series(weight, levels, 1, ctrl), np.zeros(tau.shape)
    if np.any(1.0 + tau <= 0):
        raise ConvergenceDomainError("transformed series needs 1 + sum tr X > 0")
    scale = 1.0 + tau
    levels = [Level(tuple([bi - ai]), tuple([bi]), x / scale[:, None]) for ai, bi, x in zip(a, b, xs)]
    return nested_series(weight, levels, 1, ctrl), -c * np.log(scale)


def exp_kernel(
    a: Sequence[float],
    b: Sequence[float],
    xs: Sequence[np.ndarray],
    ctrl: SeriesControl,
    mode: str = "kummer",
) -> tuple[BatchSeries, np.ndarray]:
    """``sum_R 1/R! sum multinom prod Q(a_i; b_i; -X_i)``, i.e. ``prod 1F1(a_i; b_i; -X_i)``."""
    _check_mode(mode)
    xs = [np.asarray(x, dtype=float) for x in xs]
    tau = sum(x.sum(axis=1) for x in xs)

    def weight(R: int) -> SignedLog:
        return SignedLog(-math.lgamma(R + 1), 1)

    if mode == "direct":
        levels = [Level(tuple([ai]), tuple([bi]), -x) for ai, bi, x in zip(a, b, xs)]
        return nested_series(weight, levels, 1, ctrl), np.zeros(tau.shape)
    levels = [Level(tuple([bi - ai]), tuple([bi]), x) for ai, bi, x in zip(a, b, xs)]
    return nested_series(weight, levels, 1, ctrl), -tau


# ---------------------------------------------------------------------------
# beta type II


def _half_bracket(a: float, m: int) -> float:
    return a + (m + 1) / 2.0


def beta2_log_prefactor(c: float, a0m: float, a: Sequence[float], b: Sequence[float], m: int, log_dets: np.ndarray) -> tuple[np.ndarray, int]:
    """Log of ``Gamma(c) Gamma_m[(m+1)/2]^k / (Gamma(a0 m) prod Gamma_m[b_i]) prod |A_i|^a_i``.

    ``log_dets`` has shape ``(k, S)``. Returns the log magnitude per
    spectrum and the (common) sign.
    """
    const = SignedLog(math.lgamma(c), 1) if c > 0 else SignedLog.one()
    if c <= 0:
        raise ParameterError(f"total exponent c must be positive, got {c}")
    const = const * (log_mv_gamma(m, (m + 1) / 2.0) ** len(a)) / SignedLog(math.lgamma(a0m), 1)
    for bi in b:
        const = const / log_mv_gamma(m, bi)
    logs = const.log_magnitude + sum(ai * ld for ai, ld in zip(a, log_dets))
    return np.asarray(logs, dtype=float), const.sign


def beta2_batch(
    c: float,
    a0m: float,
    a: Sequence[float],
    b: Sequence[float],
    eigs: Sequence[np.ndarray],
    ctrl: SeriesControl,
    mode: str = "kummer",
    modes: dict | None = None,
) -> list[ProbResult]:
    """Beta type II cone probability for a batch of diagonal bounds.

    ``eigs[i]`` holds the eigenvalues of bound ``i`` for every spectrum,
    shape ``(S, m)``.
    """
    eigs = [np.asarray(e, dtype=float) for e in eigs]
    if np.any([np.any(e <= 0) for e in eigs]):
        raise DomainError("cone bounds must be positive definite")
    m = eigs[0].shape[1]
    log_dets = np.array([np.log(e).sum(axis=1) for e in eigs])
    log_pref, sign = beta2_log_prefactor(c, a0m, a, b, m, log_dets)
    series, log_outer = pochhammer_kernel(c, a, b, eigs, ctrl, mode)
    info = {"series": mode, "c": c, "b": list(b)}
    info.update(modes or {})
    return _as_results(series, log_pref + log_outer, np.full(len(log_pref), sign), info)


def prob_beta2_cone(
    params: MultimatrixParams,
    bound: ConeBound,
    ctrl: SeriesControl | None = None,
    mode: str = "kummer",
) -> ProbResult:
    """``P(0 < F_1 < A_1, ..., 0 < F_k < A_k)`` for the beta type II law."""
    ctrl = ctrl or SeriesControl()
    if bound.k != params.k or bound.m != params.m:
        raise DimensionError(f"bound has k={bound.k}, m={bound.m}; params have k={params.k}, m={params.m}")
    b = [_half_bracket(ai, params.m) for ai in params.a]
    eigs = [bound.eig_array(i) for i in range(bound.k)]
    return beta2_batch(params.c, params.a0 * params.m, params.a, b, eigs, ctrl, mode)[0]


def largest_root_cdf(
    params: MultimatrixParams,
    i: int,
    x: float,
    ctrl: SeriesControl | None = None,
    mode: str = "kummer",
) -> ProbResult:
    """``P(lambda_max(F_i) < x)`` from the marginal beta type II law of block ``i``."""
    if not 0 < x:
        raise DomainError(f"x must be positive, got {x}")
    marg = params.marginal(i)
    res = prob_beta2_cone(marg, ConeBound.scalar(x, params.m), ctrl, mode)
    res.modes["block"] = i
    return res


# ---------------------------------------------------------------------------
# Wishart


def _wishart_log_prefactor(params: MultimatrixParams, bound: ConeBound) -> tuple[float, int]:
    """``Gamma_m[(m+1)/2]^k prod |A_i|^a_i / prod Gamma_m[a_i + (m+1)/2]``."""
    m = params.m
    out = log_mv_gamma(m, (m + 1) / 2.0) ** params.k
    for ai in params.a:
        out = out / log_mv_gamma(m, _half_bracket(ai, m))
    logdet = sum(ai * s.log_det for ai, s in zip(params.a, bound.spectra))
    return out.log_magnitude + logdet, out.sign


def _check_bound(params: MultimatrixParams, bound: ConeBound) -> None:
    if bound.k != params.k or bound.m != params.m:
        raise DimensionError(f"bound has k={bound.k}, m={bound.m}; params have k={params.k}, m={params.m}")
    params.require_wishart_domain()


def prob_wishart_gaussian(
    params: MultimatrixParams,
    bound: ConeBound,
    ctrl: SeriesControl | None = None,
    mode: str = "kummer",
) -> ProbResult:
    """Independent Gaussian Wishart blocks: product of ``1F1`` closed forms."""
    ctrl = ctrl or SeriesControl()
    _check_bound(params, bound)
    m = params.m
    total_log = 0.0
    parts = []
    for i, ai in enumerate(params.a):
        bi = _half_bracket(ai, m)
        series, log_outer = exp_kernel([ai], [bi], [bound.eig_array(i) / 2.0], ctrl, mode)
        sub = MultimatrixParams(m, params.a0, (ai,))
        lp, sg = _wishart_log_prefactor(sub, ConeBound((bound.matrices[i],), (bound.spectra[i],)))
        lp -= ai * m * math.log(2.0)
        res = _as_results(series, np.array([lp + log_outer[0]]), np.array([sg]), {})[0]
        parts.append(res)
        total_log += math.log(res.raw) if res.raw > 0 else -math.inf
    raw = math.exp(total_log)
    levels = [dict(p.levels[0], level=i + 1) for i, p in enumerate(parts)]
    return ProbResult(
        probability=min(1.0, max(0.0, raw)),
        raw=raw,
        converged=all(p.converged for p in parts) and raw <= 1 + PROB_SLACK,
        degree_used=max(p.degree_used for p in parts),
        tail_estimate=max(p.tail_estimate for p in parts),
        terms_evaluated=sum(p.terms_evaluated for p in parts),
        levels=levels,
        modes={"series": mode, "generator": "gaussian"},
    )


def wishart_elliptical_series(
    deriv: Callable[[int], SignedLog],
    params: MultimatrixParams,
    bound: ConeBound,
    ctrl: SeriesControl | None = None,
    modes: dict | None = None,
) -> ProbResult:
    """Generic elliptical Wishart probability from ``t -> h^(t)(0)``.

    Sums ``sum_t h^(t)(0)/t! sum multinom prod Q_{r_i}(a_i; b_i; A_i)`` as
    written, without any transformation.
    """
    ctrl = ctrl or SeriesControl()
    _check_bound(params, bound)
    m = params.m

    def weight(t: int) -> SignedLog:
        return deriv(t) / SignedLog(math.lgamma(t + 1), 1)

    levels = [
        Level((ai,), (_half_bracket(ai, m),), bound.eig_array(i)) for i, ai in enumerate(params.a)
    ]
    series = nested_series(weight, levels, 1, ctrl)
    lp, sg = _wishart_log_prefactor(params, bound)
    lp += math.fsum(params.a) * m * math.log(math.pi)
    info = {"series": "direct"}
    info.update(modes or {})
    return _as_results(series, np.array([lp]), np.array([sg]), info)[0]


def _prob_wishart_elliptical(gen, params, bound, ctrl, mode):
    ctrl = ctrl or SeriesControl()
    _check_mode(mode)
    _check_bound(params, bound)
    if gen.beta != 1:
        raise ParameterError("Wishart probabilities are real (beta = 1) only")
    m = params.m
    expected = 2.0 * math.fsum(params.a) * m
    if not math.isclose(gen.dimension, expected, rel_tol=1e-12):
        raise DimensionError(f"generator dimension {gen.dimension} must equal (N - n0) m = {expected}")
    tau = math.fsum(s.trace for s in bound.spectra)
    modes = {"generator": gen.kind}
    if gen.kind == "pearson2" and gen.beta * tau >= 1:
        raise ConvergenceDomainError(
            f"Pearson II kernel expansion needs beta * sum tr A < 1, got {gen.beta * tau:.6g}"
        )
    if mode == "direct" or gen.kind == "pearson2":
        return wishart_elliptical_series(lambda t: h_deriv_at_zero(gen, t), params, bound, ctrl, modes)
    a = list(params.a)
    b = [_half_bracket(ai, m) for ai in a]
    h0 = h_deriv_at_zero(gen, 0)
    if gen.kind == "gaussian":
        xs = [bound.eig_array(i) * (gen.beta / 2.0) for i in range(bound.k)]
        series, log_outer = exp_kernel(a, b, xs, ctrl, "kummer")
    else:
        xs = [bound.eig_array(i) * gen.beta for i in range(bound.k)]
        series, log_outer = pochhammer_kernel(gen.exponent, a, b, xs, ctrl, "kummer")
    lp, sg = _wishart_log_prefactor(params, bound)
    lp += math.fsum(params.a) * m * math.log(math.pi) + h0.log_magnitude
    modes["series"] = "kummer"
    return _as_results(series, np.array([lp + log_outer[0]]), np.array([sg]), modes)[0]


def prob_wishart_elliptical_k1(
    gen: EllipticalGenerator,
    params: MultimatrixParams,
    A,
    ctrl: SeriesControl | None = None,
    mode: str = "kummer",
) -> ProbResult:
    """``P(0 < W < A)`` for one generalised Wishart block (generator dimension ``n_1 m``)."""
    if params.k != 1:
        raise ParameterError("this formula is for k = 1")
    bound = A if isinstance(A, ConeBound) else ConeBound.from_matrices([A])
    return _prob_wishart_elliptical(gen, params, bound, ctrl, mode)


def prob_wishart_elliptical_k(
    gen: EllipticalGenerator,
    params: MultimatrixParams,
    bound: ConeBound,
    ctrl: SeriesControl | None = None,
    mode: str = "kummer",
) -> ProbResult:
    """Joint cone probability of ``k >= 2`` dependent generalised Wishart blocks."""
    if params.k < 2:
        raise ParameterError("this formula is for k >= 2; use prob_wishart_elliptical_k1")
    return _prob_wishart_elliptical(gen, params, bound, ctrl, mode)


# ---------------------------------------------------------------------------
# beta type I


def prob_beta1_k1(
    params: MultimatrixParams,
    A,
    ctrl: SeriesControl | None = None,
) -> ProbResult:
    """``P(0 < B < A)`` for the beta type I law with one block.

    The density reduces to ``|B|^(a - (m+1)/2) (1 - tr B)^(a0 m - 1)``; the
    binomial expansion gives
    ``Gamma(c) Gamma_m[(m+1)/2] / (Gamma(a0 m) Gamma_m[b]) |A|^a sum_t (1 - a0 m)_t / t! Q_t(a; b; A)``.
    """
    ctrl = ctrl or SeriesControl()
    if params.k != 1:
        raise ParameterError("the beta type I probability is available for k = 1 only")
    bound = A if isinstance(A, ConeBound) else ConeBound.from_matrices([A])
    _check_bound(params, bound)
    spec = bound.spectra[0]
    if spec.eigenvalues[0] >= 1:
        raise SupportError("the bound must satisfy A < I")
    if spec.trace > 1 + 1e-12:
        raise SupportError(f"the bound must satisfy tr A <= 1, got {spec.trace}")
    m, a = params.m, params.a[0]
    b = _half_bracket(a, m)
    upper = params.a0 * m - 1.0
    # the binomial series still converges (slowly) on the boundary tr A = 1
    level = Level((a,), (b,), bound.eig_array(0))
    series = nested_series(lambda t: pochhammer(-upper, t) / SignedLog(math.lgamma(t + 1), 1), [level], 1, ctrl)
    lp, sg = beta2_log_prefactor(params.c, params.a0 * m, [a], [b], m, np.array([[spec.log_det]]))
    return _as_results(series, lp, np.array([sg]), {"series": "direct", "binomial_upper": upper})[0]


def cone_moment_integral(a: float, r: int, A, sign: str = "+") -> SignedLog:
    """``int_{0<W<A} |W|^(a-(m+1)/2) tr^r(+-W) (dW)`` in closed form.

    Equals ``Gamma_m[a] Gamma_m[(m+1)/2] / Gamma_m[a+(m+1)/2] |A|^a Q_r(a; a+(m+1)/2; +-A)``.
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    spec = A if isinstance(A, Spectrum) else sym_eigenvalues(np.atleast_2d(np.asarray(A, dtype=float)))
    m = spec.m
    if not a > (m - 1) / 2.0:
        raise ParameterError(f"a must exceed (m-1)/2 = {(m - 1) / 2}, got {a}")
    if not spec.is_positive_definite:
        raise DomainError("bound must be positive definite")
    b = a + (m + 1) / 2.0
    pref = log_mv_gamma(m, a) * log_mv_gamma(m, (m + 1) / 2.0) / log_mv_gamma(m, b)
    pref = pref * SignedLog(a * spec.log_det, 1)
    q = partial_sum_rQq(r, [a], [b], spec)
    if sign == "-" and r % 2:
        q = -q
    return pref * SignedLog.from_float(q)
