"""Multimatrix variate densities and the spherical-block sampler.

Parameters use the extended real domain: ``a0`` stands for ``n0/2`` and
``a[i]`` for ``n_i/2``, so the total exponent is ``c = (a0 + sum a) m``
(``N m / 2`` for integer sizes). Only the real case (``beta = 1``) is
implemented for densities.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .generators import EllipticalGenerator, h_deriv
from .numeric import DimensionError, DomainError, Spectrum, log_mv_gamma, sym_eigenvalues

LAWS = ("pearson7", "beta2", "pearson2", "beta1", "gengamma_wishart", "gen_wishart")
GGW_MODES = ("consistent", "as-printed")


class ParameterError(ValueError):
    """Invalid distribution parameters."""


class SupportError(DomainError):
    """A sample lies outside the support of the law."""


@dataclass(frozen=True)
class MultimatrixParams:
    """Shared ``(m, k, a0, a_1..a_k, beta)`` block.

    ``a0`` replaces ``n0/2`` and ``a[i]`` replaces ``n_i/2``.
    """

    m: int
    a0: float
    a: tuple
    beta: int = 1

    def __post_init__(self):
        a = tuple(float(x) for x in np.atleast_1d(self.a))
        object.__setattr__(self, "a", a)
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        if not a:
            raise ParameterError("need at least one block (k >= 1)")
        if not self.a0 > 0:
            raise ParameterError(f"a0 must be positive, got {self.a0}")
        bad = [x for x in a if not x > 0]
        if bad:
            raise ParameterError(f"block parameters must be positive, got {bad}")
        if self.beta not in (1, 2, 4, 8):
            raise ParameterError(f"beta must be one of 1, 2, 4, 8, got {self.beta}")

    @classmethod
    def from_sizes(cls, m: int, n0: float, n: Sequence[float], beta: int = 1) -> "MultimatrixParams":
        return cls(m=m, a0=n0 / 2.0, a=tuple(x / 2.0 for x in n), beta=beta)

    @property
    def k(self) -> int:
        return len(self.a)

    @property
    def c(self) -> float:
        """Total exponent ``(a0 + sum a) m``."""
        return (self.a0 + math.fsum(self.a)) * self.m

    @property
    def n0(self) -> float:
        return 2.0 * self.a0

    @property
    def n(self) -> tuple:
        return tuple(2.0 * x for x in self.a)

    def integer_sizes(self) -> tuple[int, tuple]:
        sizes = (self.n0,) + self.n
        if any(abs(s - round(s)) > 1e-12 for s in sizes):
            raise ParameterError(f"block sizes must be integers here, got {sizes}")
        return int(round(sizes[0])), tuple(int(round(s)) for s in sizes[1:])

    def marginal(self, i: int) -> "MultimatrixParams":
        """Parameters of block ``i`` alone (the other blocks integrated out)."""
        return MultimatrixParams(self.m, self.a0, (self.a[i],), self.beta)

    def require_wishart_domain(self) -> None:
        lim = (self.m - 1) / 2.0
        bad = [x for x in self.a if not x > lim]
        if bad:
            raise ParameterError(f"block parameters must exceed (m-1)/2 = {lim}, got {bad}")

    def as_dict(self) -> dict:
        return {"m": self.m, "k": self.k, "a0": self.a0, "a": list(self.a), "beta": self.beta, "c": self.c}


@dataclass
class MatrixBlockSample:
    """One draw: ``k`` blocks of a single law, plus ``v`` for the joint gamma law."""

    blocks: list
    law_tag: str = ""
    v: float | None = None

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks]


def _blocks(sample) -> list:
    if isinstance(sample, MatrixBlockSample):
        return sample.blocks
    return [np.atleast_2d(np.asarray(b, dtype=float)) for b in sample]


def _require_real(params: MultimatrixParams) -> None:
    if params.beta != 1:
        raise ParameterError("densities are implemented for the real case beta = 1 only")


def _rect_blocks(sample, params: MultimatrixParams) -> list:
    blocks = _blocks(sample)
    if len(blocks) != params.k:
        raise DimensionError(f"expected {params.k} blocks, got {len(blocks)}")
    for i, b in enumerate(blocks):
        if b.shape[1] != params.m:
            raise DimensionError(f"block {i} has {b.shape[1]} columns, expected m = {params.m}")
        if abs(b.shape[0] - 2.0 * params.a[i]) > 1e-12:
            raise DimensionError(f"block {i} has {b.shape[0]} rows, expected n_{i + 1} = {2 * params.a[i]}")
    return blocks


def _spectra(sample, params: MultimatrixParams) -> list[Spectrum]:
    blocks = _blocks(sample)
    if len(blocks) != params.k:
        raise DimensionError(f"expected {params.k} blocks, got {len(blocks)}")
    out = []
    for i, b in enumerate(blocks):
        if b.shape != (params.m, params.m):
            raise DimensionError(f"block {i} has shape {b.shape}, expected ({params.m}, {params.m})")
        spec = sym_eigenvalues(b)
        if not spec.is_positive_definite:
            raise SupportError(f"block {i} is not positive definite (eigenvalues {spec.eigenvalues})")
        out.append(spec)
    return out


def _log_wishart_factors(spectra, params: MultimatrixParams) -> float:
    """``sum_i (a_i - (m+1)/2) log|W_i| - log Gamma_m[a_i]``."""
    params.require_wishart_domain()
    m = params.m
    total = 0.0
    for a, s in zip(params.a, spectra):
        total += (a - (m + 1) / 2.0) * s.log_det - log_mv_gamma(m, a).log_magnitude
    return total


def logpdf_pearson7(sample, params: MultimatrixParams) -> float:
    """Joint log density of ``T_i = V^(-1/2) X_i``."""
    _require_real(params)
    blocks = _rect_blocks(sample, params)
    m, c = params.m, params.c
    norm2 = math.fsum(float(np.sum(b * b)) for b in blocks)
    return (
        math.lgamma(c)
        - math.fsum(params.a) * m * math.log(math.pi)
        - math.lgamma(params.a0 * m)
        - c * math.log1p(norm2)
    )


def logpdf_beta2(sample, params: MultimatrixParams) -> float:
    """Joint log density of ``F_i = T_i' T_i``."""
    _require_real(params)
    spectra = _spectra(sample, params)
    c = params.c
    tr = math.fsum(s.trace for s in spectra)
    return (
        math.lgamma(c)
        - math.lgamma(params.a0 * params.m)
        + _log_wishart_factors(spectra, params)
        - c * math.log1p(tr)
    )


def logpdf_pearson2(sample, params: MultimatrixParams) -> float:
    """Joint log density of ``R_i = (V + ||X_i||^2)^(-1/2) X_i``."""
    _require_real(params)
    blocks = _rect_blocks(sample, params)
    m, c = params.m, params.c
    total = math.lgamma(c) - math.fsum(params.a) * m * math.log(math.pi) - math.lgamma(params.a0 * m)
    ratio = 0.0
    for i, (a, b) in enumerate(zip(params.a, blocks)):
        r2 = float(np.sum(b * b))
        if r2 >= 1.0:
            raise SupportError(f"block {i} has ||R||^2 = {r2} >= 1")
        ratio += r2 / (1.0 - r2)
        total += (-a * m - 1.0) * math.log1p(-r2)
    return total - c * math.log1p(ratio)


def logpdf_beta1(sample, params: MultimatrixParams) -> float:
    """Joint log density of ``B_i = R_i' R_i``."""
    _require_real(params)
    spectra = _spectra(sample, params)
    m, c = params.m, params.c
    total = math.lgamma(c) - math.lgamma(params.a0 * m) + _log_wishart_factors(spectra, params)
    ratio = 0.0
    for i, (a, s) in enumerate(zip(params.a, spectra)):
        tr = s.trace
        if tr >= 1.0:
            raise SupportError(f"block {i} has tr B = {tr} >= 1")
        ratio += tr / (1.0 - tr)
        total += (-a * m - 1.0) * math.log1p(-tr)
    return total - c * math.log1p(ratio)


def _check_gen_dim(gen: EllipticalGenerator, expected: float, what: str) -> None:
    if not math.isclose(gen.dimension, expected, rel_tol=1e-12):
        raise DimensionError(f"generator dimension {gen.dimension} must equal {what} = {expected}")


def logpdf_gengamma_wishart(sample, params: MultimatrixParams, gen: EllipticalGenerator, mode: str = "consistent") -> float:
    """Joint log density of ``(V, W_1..W_k)``.

    ``mode="consistent"`` uses ``v^(a0 m - 1)``, the exponent produced by
    the polar factor of ``X_0``; ``mode="as-printed"`` uses ``v^(c - 1)``.
    The generator must be the ``N m``-dimensional kernel of the stacked
    matrix.
    """
    _require_real(params)
    if mode not in GGW_MODES:
        raise ValueError(f"mode must be one of {GGW_MODES}, got {mode!r}")
    v = sample.v if isinstance(sample, MatrixBlockSample) else None
    if v is None:
        raise ValueError("this law needs the scalar v")
    if not v > 0:
        raise SupportError(f"v must be positive, got {v}")
    _check_gen_dim(gen, 2.0 * params.c, "N m")
    spectra = _spectra(sample, params)
    m, c = params.m, params.c
    power = params.a0 * m - 1.0 if mode == "consistent" else c - 1.0
    arg = v + math.fsum(s.trace for s in spectra)
    h = float(h_deriv(gen, 0, arg))
    if not h > 0:
        raise SupportError(f"generator vanishes at {arg}")
    return (
        c * math.log(math.pi)
        + power * math.log(v)
        - math.lgamma(params.a0 * m)
        + _log_wishart_factors(spectra, params)
        + math.log(h)
    )


def logpdf_gen_wishart(sample, params: MultimatrixParams, gen: EllipticalGenerator) -> float:
    """Joint log density of ``W_1..W_k``; the generator dimension must be ``(N - n0) m``."""
    _require_real(params)
    _check_gen_dim(gen, 2.0 * math.fsum(params.a) * params.m, "(N - n0) m")
    spectra = _spectra(sample, params)
    arg = math.fsum(s.trace for s in spectra)
    h = float(h_deriv(gen, 0, arg))
    if not h > 0:
        raise SupportError(f"generator vanishes at {arg}")
    return (
        math.fsum(params.a) * params.m * math.log(math.pi)
        + _log_wishart_factors(spectra, params)
        + math.log(h)
    )


LOGPDFS = {
    "pearson7": logpdf_pearson7,
    "beta2": logpdf_beta2,
    "pearson2": logpdf_pearson2,
    "beta1": logpdf_beta1,
}


# ---------------------------------------------------------------------------
# sampling

SCALE_MIXTURES = ("none", "lognormal", "student")


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator fully determined by ``(seed, stream)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass
class SphericalDraws:
    """Vectorised draws of every Lemma construction from one stacked matrix.

    Rectangular arrays have shape ``(count, n_i, m)``, Gram arrays
    ``(count, m, m)``.
    """

    params: MultimatrixParams
    V: np.ndarray
    X: list
    T: list = field(default_factory=list)
    F: list = field(default_factory=list)
    R: list = field(default_factory=list)
    B: list = field(default_factory=list)
    W: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return self.V.shape[0]

    def to_samples(self, law: str) -> list[MatrixBlockSample]:
        key = {"pearson7": "T", "beta2": "F", "pearson2": "R", "beta1": "B", "gen_wishart": "W", "gengamma_wishart": "W"}[law]
        arrs = getattr(self, key)
        v = self.V if law == "gengamma_wishart" else None
        return [
            MatrixBlockSample([a[j] for a in arrs], law, None if v is None else float(v[j]))
            for j in range(self.count)
        ]


def _gram(x: np.ndarray) -> np.ndarray:
    return np.einsum("sni,snj->sij", x, x)


def sample_spherical_blocks(
    params: MultimatrixParams,
    count: int,
    seed: int,
    stream: int = 0,
    gen: str = "gaussian",
    scale_mixture: str = "none",
) -> SphericalDraws:
    """Draw the stacked spherical matrix and derive ``V, T_i, F_i, R_i, B_i, W_i``.

    ``scale_mixture`` multiplies the whole stacked Gaussian matrix by one
    random positive radius per draw, giving a different spherical law with
    identical ``T, F, R, B`` distributions.
    """
    if gen != "gaussian":
        raise ValueError("the sampler draws from the Gaussian spherical law only")
    if scale_mixture not in SCALE_MIXTURES:
        raise ValueError(f"scale_mixture must be one of {SCALE_MIXTURES}")
    n0, sizes = params.integer_sizes()
    m = params.m
    rng = rng_for(seed, stream)
    X0 = rng.standard_normal((count, n0, m))
    X = [rng.standard_normal((count, n, m)) for n in sizes]
    if scale_mixture != "none":
        if scale_mixture == "lognormal":
            radius = rng.lognormal(0.0, 1.0, count)
        else:
            radius = 1.0 / np.sqrt(rng.chisquare(3.0, count) / 3.0)
        X0 = X0 * radius[:, None, None]
        X = [x * radius[:, None, None] for x in X]
    V = np.einsum("sni,sni->s", X0, X0)
    out = SphericalDraws(params=params, V=V, X=X)
    for x in X:
        t = x / np.sqrt(V)[:, None, None]
        norm2 = np.einsum("sni,sni->s", x, x)
        r = x / np.sqrt(V + norm2)[:, None, None]
        out.T.append(t)
        out.F.append(_gram(t))
        out.R.append(r)
        out.B.append(_gram(r))
        out.W.append(_gram(x))
    return out


def dump_samples_csv(draws: SphericalDraws, path, laws: Sequence[str] = ("T", "F", "R", "B", "W")) -> int:
    """Write one row per (law, draw, block): law_tag, draw, block, flattened entries."""
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["law_tag", "draw", "block", "entries"])
        for law in laws:
            arrs = getattr(draws, law)
            for j in range(draws.count):
                for i, a in enumerate(arrs):
                    writer.writerow([law, j, i + 1, *(f"{x:.17g}" for x in a[j].ravel())])
                    rows += 1
    return rows
