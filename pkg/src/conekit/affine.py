"""Affine shape (configuration) densities under elliptical models.

A figure ``Z`` (``N`` landmarks in ``K`` coordinates) is reduced to its
configuration ``U = Y Y_1^{-1}`` where ``Y = L Z`` removes translation with
the sub-Helmert contrast ``L`` and ``Y_1`` is the top ``K x K`` block.
The density is the double series

    pref * sum_{t,r} 1 / (t! Gamma(K(N-1)/2 + t)) * tr^r(Omega) / r!
         * Q_t(beta(N-1)/2; beta K/2; Z) * zeta_{t,r}

with ``Z`` similar to ``(U* S U)^{-1/2} U* Omega S U (U* S U)^{-1/2}``,
``S = Sigma^{-1}``. Blocks of constant ``t + r`` are accumulated in order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .generators import EllipticalGenerator, zeta_coeff
from .numeric import (
    DimensionError,
    DomainError,
    NeumaierSum,
    SignedLog,
    Spectrum,
    check_beta,
    jacobi_eigh,
    log_mv_gamma,
    sym_sqrt_inv,
)
from .zonal import TAIL_RUN, JackEvaluator, SeriesControl, SeriesResult, _PartitionWeights, jack_table

Y1_COND_LIMIT = 1e12
REALITY_TOL = 1e-10


def sub_helmert(N: int) -> np.ndarray:
    """``(N-1) x N`` sub-Helmert contrast: orthonormal rows orthogonal to the ones vector."""
    if N < 2:
        raise DimensionError("need at least two landmarks")
    L = np.zeros((N - 1, N))
    for j in range(1, N):
        h = 1.0 / math.sqrt(j * (j + 1))
        L[j - 1, :j] = -h
        L[j - 1, j] = j * h
    return L


@dataclass(frozen=True)
class Configuration:
    """``(N-1) x K`` configuration matrix with identity top block."""

    U: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if U.ndim != 2:
            raise DimensionError("U must be a matrix")
        K = U.shape[1]
        if U.shape[0] < K:
            raise DimensionError(f"U must have at least K = {K} rows")
        if not np.array_equal(U[:K], np.eye(K)):
            raise DomainError("top K x K block of U must be the identity")
        object.__setattr__(self, "U", U)

    @classmethod
    def from_free(cls, lower) -> "Configuration":
        """Build ``U = (I | lower')'`` from the free ``(N-1-K) x K`` block."""
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        K = lower.shape[1]
        return cls(np.vstack([np.eye(K), lower]))

    @property
    def K(self) -> int:
        return self.U.shape[1]

    @property
    def N(self) -> int:
        return self.U.shape[0] + 1


def configuration_from_landmarks(Z) -> Configuration:
    """Configuration of an ``N x K`` landmark matrix."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.ndim != 2:
        raise DimensionError("landmarks must be an N x K matrix")
    N, K = Z.shape
    if N - 1 < K:
        raise DimensionError(f"need N - 1 >= K, got N={N}, K={K}")
    Y = sub_helmert(N) @ Z
    Y1 = Y[:K]
    cond = np.linalg.cond(Y1)
    if not np.isfinite(cond) or cond >= Y1_COND_LIMIT:
        raise DomainError(f"top block of the Helmertized figure is singular (condition {cond:.3g})")
    U = np.linalg.solve(Y1.T, Y.T).T
    U[:K] = np.eye(K)
    return Configuration(U)


def load_landmarks(path) -> np.ndarray:
    """Read an ``N x K`` landmark CSV; a non-numeric first row is taken as a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if rows or lineno > 1:
                    raise ValueError(f"{path}:{lineno}: non-numeric landmark row {row}") from None
    if not rows:
        raise ValueError(f"{path}: no landmarks")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged landmark rows")
    Z = np.array(rows)
    if not np.all(np.isfinite(Z)):
        raise ValueError(f"{path}: non-finite coordinates")
    return Z


@dataclass(frozen=True)
class AffineShapeParams:
    K: int
    N: int
    Sigma: np.ndarray
    Omega: np.ndarray
    generator: EllipticalGenerator
    beta: int = 1

    def __post_init__(self):
        check_beta(self.beta)
        if self.K < 1 or self.N - 1 < self.K:
            raise DimensionError(f"need N - 1 >= K >= 1, got K={self.K}, N={self.N}")
        n = self.N - 1
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        Omega = np.atleast_2d(np.asarray(self.Omega, dtype=float))
        if Sigma.shape != (n, n) or Omega.shape != (n, n):
            raise DimensionError(f"Sigma and Omega must be {n} x {n}")
        vals, _ = jacobi_eigh(Sigma)
        if vals[-1] <= 0:
            raise DomainError("Sigma must be positive definite")
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "Omega", Omega)
        D = self.beta * self.K * (self.N - 1)
        if not math.isclose(self.generator.dimension, D, rel_tol=1e-12):
            raise DimensionError(f"generator dimension {self.generator.dimension} must equal beta K (N-1) = {D}")
        if self.generator.beta != self.beta:
            raise DimensionError("generator and shape parameters disagree on beta")
        G = self.noncentral_form()
        if np.linalg.eigvalsh(G).min() < -REALITY_TOL * max(1.0, np.abs(G).max()):
            raise DomainError("Omega must be positive semidefinite")

    @classmethod
    def central(cls, K: int, N: int, generator: EllipticalGenerator, beta: int = 1) -> "AffineShapeParams":
        n = N - 1
        return cls(K, N, np.eye(n), np.zeros((n, n)), generator, beta)

    def noncentral_form(self) -> np.ndarray:
        """Symmetric ``Omega Sigma^{-1}``."""
        G = self.Omega @ np.linalg.inv(self.Sigma)
        scale = max(1.0, np.abs(G).max())
        if np.abs(G - G.T).max() > REALITY_TOL * scale:
            raise DomainError("Omega Sigma^{-1} must be symmetric (Omega = Sigma^{-1} mu Theta mu*)")
        return 0.5 * (G + G.T)


def zonal_argument(U: Configuration, params: AffineShapeParams) -> Spectrum:
    """Eigenvalues of ``U* Omega Sigma^{-1} U (U* Sigma^{-1} U)^{-1}`` via a symmetric similar form."""
    Sinv = np.linalg.inv(params.Sigma)
    M = U.U.T @ Sinv @ U.U
    Nm = U.U.T @ params.noncentral_form() @ U.U
    R = sym_sqrt_inv(0.5 * (M + M.T))
    S = R @ Nm @ R
    S = 0.5 * (S + S.T)
    vals, _ = jacobi_eigh(S)
    direct = np.linalg.eigvals(Nm @ np.linalg.inv(M))
    scale = max(1.0, float(np.abs(vals).max()))
    if np.abs(direct.imag).max() > REALITY_TOL * scale:
        raise DomainError("zonal argument has non-real eigenvalues")
    vals = np.where(np.abs(vals) < REALITY_TOL * scale, 0.0, vals)
    return Spectrum(tuple(vals))


def log_prefactor(U: Configuration, params: AffineShapeParams) -> float:
    b, K, N = params.beta, params.K, params.N
    Sinv = np.linalg.inv(params.Sigma)
    M = U.U.T @ Sinv @ U.U
    logdet_M = float(np.linalg.slogdet(M)[1])
    logdet_S = float(np.linalg.slogdet(params.Sigma)[1])
    num = SignedLog(b * K * K / 2.0 * math.log(math.pi), 1) * log_mv_gamma(K, b * (N - 1) / 2.0, b)
    den = log_mv_gamma(K, b * K / 2.0, b)
    out = num / den
    return out.log_magnitude - b * K / 2.0 * logdet_S - b * (N - 1) / 2.0 * logdet_M


def affine_shape_logdensity(
    U: Configuration,
    params: AffineShapeParams,
    ctrl: SeriesControl | None = None,
    max_r: int | None = None,
) -> SeriesResult:
    """Log affine-shape density at ``U``.

    ``max_r`` caps the noncentrality degree (``None`` = no cap beyond
    ``ctrl.max_degree``). ``notes`` carries the density, the zonal
    argument and annotations for non-real algebras.
    """
    ctrl = ctrl or SeriesControl()
    if U.K != params.K or U.N != params.N:
        raise DimensionError(f"configuration is {U.U.shape}, params expect ({params.N - 1}, {params.K})")
    b, K, N = params.beta, params.K, params.N
    gen = params.generator
    spec = zonal_argument(U, params)
    tr_omega = float(np.trace(params.Omega))
    table = jack_table(spec.m, b)
    weights = _PartitionWeights([b * (N - 1) / 2.0], [b * K / 2.0], b, table)
    evaluator = JackEvaluator(table, spec.as_array()[None, :])
    central = tr_omega == 0.0
    log_tr = math.log(abs(tr_omega)) if not central else -math.inf

    q_cache: list[SignedLog] = []

    def q_block(t: int) -> SignedLog:
        while len(q_cache) <= t:
            d = len(q_cache)
            logw, signs, top = weights.degree(d)
            vals = evaluator.block(d)[:, 0]
            terms = signs * np.exp(logw) * vals
            s = float(np.cumsum(terms)[-1]) if terms.size else 0.0
            q_cache.append(SignedLog.from_float(s) * SignedLog(top, 1) if s != 0 else SignedLog.zero())
        return q_cache[t]

    acc = NeumaierSum(0.0)
    run = 0
    terms = 0
    degree_used = 0
    tail = math.inf
    converged = False
    r_cap = ctrl.max_degree if max_r is None else max_r
    for d in range(ctrl.max_degree + 1):
        block_terms = []
        for t in range(d + 1):
            r = d - t
            if r > r_cap or (central and r > 0):
                continue
            q = q_block(t)
            if q.sign == 0:
                continue
            z = zeta_coeff(gen, t, r, K, N)
            if z.sign == 0:
                continue
            w = SignedLog(-math.lgamma(t + 1) - math.lgamma(K * (N - 1) / 2.0 + t), 1)
            w = w * SignedLog(r * log_tr - math.lgamma(r + 1), 1 if tr_omega >= 0 or r % 2 == 0 else -1) if r else w
            block_terms.append(float(w * q * z))
            terms += 1
        block = math.fsum(block_terms)
        acc.add(block)
        degree_used = d
        partial = acc.value
        ratio = abs(block) / abs(partial) if partial != 0 else (0.0 if block == 0 else math.inf)
        tail = ratio
        run = run + 1 if ratio < ctrl.tail_tolerance else 0
        if run >= TAIL_RUN:
            converged = True
            break
        if terms > ctrl.hard_term_limit:
            break
    series = acc.value
    notes = {
        "zonal_argument": list(spec.eigenvalues),
        "trace_omega": tr_omega,
    }
    if b != 1:
        notes["gamma_factor"] = "as-printed"
    if b in (4, 8):
        notes["algebra"] = "formal"
    if not series > 0:
        notes["series_value"] = series
        return SeriesResult(math.nan, degree_used, tail, False, terms, notes)
    logd = log_prefactor(U, params) + math.log(series)
    notes["density"] = math.exp(logd)
    return SeriesResult(logd, degree_used, tail, converged, terms, notes)
