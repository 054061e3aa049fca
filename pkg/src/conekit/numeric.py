"""Scalar and small-matrix primitives.

Everything gamma- or Pochhammer-shaped is carried as a :class:`SignedLog`
so that factors such as ``Gamma(34.2)`` or Pochhammers of order 200 never
overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, gammasgn

DIVISION_ALGEBRAS = (1, 2, 4, 8)

JACOBI_MAX_SWEEPS = 30
JACOBI_OFFDIAG_RTOL = 1e-14
SYMMETRY_RTOL = 1e-12
PD_RTOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of a special function."""


class DimensionError(ValueError):
    """Inconsistent or invalid dimensions."""


def check_beta(beta: int) -> int:
    if beta not in DIVISION_ALGEBRAS:
        raise DomainError(f"beta must be one of {DIVISION_ALGEBRAS}, got {beta!r}")
    return int(beta)


# ---------------------------------------------------------------------------
# signed log arithmetic


@dataclass(frozen=True)
class SignedLog:
    """A real number stored as ``sign * exp(log_magnitude)``.

    ``sign == 0`` encodes an exact zero; ``log_magnitude`` is then ``-inf``.
    """

    log_magnitude: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign!r}")
        if self.sign == 0 and self.log_magnitude != -math.inf:
            object.__setattr__(self, "log_magnitude", -math.inf)

    @classmethod
    def from_float(cls, x: float) -> "SignedLog":
        if x == 0:
            return cls.zero()
        return cls(math.log(abs(x)), 1 if x > 0 else -1)

    @classmethod
    def zero(cls) -> "SignedLog":
        return cls(-math.inf, 0)

    @classmethod
    def one(cls) -> "SignedLog":
        return cls(0.0, 1)

    def __mul__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_float(float(other))
        if self.sign == 0 or other.sign == 0:
            return SignedLog.zero()
        return SignedLog(self.log_magnitude + other.log_magnitude, self.sign * other.sign)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, SignedLog):
            other = SignedLog.from_float(float(other))
        if other.sign == 0:
            raise ZeroDivisionError("division by an exact zero")
        if self.sign == 0:
            return SignedLog.zero()
        return SignedLog(self.log_magnitude - other.log_magnitude, self.sign * other.sign)

    def __neg__(self):
        return SignedLog(self.log_magnitude, -self.sign)

    def __pow__(self, p: float):
        if self.sign == 0:
            return SignedLog.zero() if p > 0 else SignedLog.one()
        if self.sign < 0 and p != int(p):
            raise DomainError("non-integer power of a negative value")
        sign = 1 if self.sign > 0 or int(p) % 2 == 0 else -1
        return SignedLog(self.log_magnitude * p, sign)

    def __float__(self):
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    @property
    def value(self) -> float:
        return float(self)


# ---------------------------------------------------------------------------
# compensated summation


class NeumaierSum:
    """Running compensated sum; works elementwise on floats or numpy arrays."""

    def __init__(self, start=0.0):
        self.total = start
        self.compensation = start * 0.0

    def add(self, x):
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        corr = np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.compensation = self.compensation + corr
        self.total = t

    @property
    def value(self):
        return self.total + self.compensation


# ---------------------------------------------------------------------------
# partitions


class Partition(tuple):
    """A nonincreasing tuple of positive integers (trailing zeros dropped)."""

    def __new__(cls, parts: Sequence[int] = ()):
        parts = [int(p) for p in parts]
        if any(p < 0 for p in parts):
            raise ValueError(f"negative part in partition {parts}")
        if any(parts[i] < parts[i + 1] for i in range(len(parts) - 1)):
            raise ValueError(f"partition parts must be nonincreasing: {parts}")
        while parts and parts[-1] == 0:
            parts.pop()
        return super().__new__(cls, parts)

    @property
    def parts(self) -> tuple:
        return tuple(self)

    @property
    def weight(self) -> int:
        return sum(self)

    def conjugate(self) -> "Partition":
        if not self:
            return Partition()
        return Partition(sum(1 for p in self if p > j) for j in range(self[0]))

    def __repr__(self):
        return f"Partition({tuple(self)})"


def enumerate_partitions(r: int, max_parts: int) -> list[Partition]:
    """All partitions of ``r`` into at most ``max_parts`` parts.

    The order is reverse-lexicographic, e.g. ``(4), (3, 1), (2, 2)``. This
    order is part of the public contract: series blocks are summed in it.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if max_parts < 1:
        raise ValueError("max_parts must be at least 1")
    return [Partition(p) for p in _revlex(r, max_parts, r)]


def _revlex(r: int, slots: int, cap: int) -> Iterator[tuple]:
    if r == 0:
        yield ()
        return
    if slots == 0:
        return
    for first in range(min(r, cap), 0, -1):
        for rest in _revlex(r - first, slots - 1, first):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# gamma functions


def _lgamma_signed(x: float) -> SignedLog:
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"gamma function pole at {x}")
    return SignedLog(float(gammaln(x)), int(gammasgn(x)))


def log_mv_gamma(m: int, a: float, beta: int = 1) -> SignedLog:
    """Multivariate gamma ``pi^{m(m-1)beta/4} prod_i Gamma(a - (i-1)beta/2)``."""
    check_beta(beta)
    if m < 1:
        raise DimensionError(f"m must be >= 1, got {m}")
    out = SignedLog(m * (m - 1) * beta / 4.0 * math.log(math.pi), 1)
    for i in range(m):
        out = out * _lgamma_signed(a - i * beta / 2.0)
    return out


def log_gamma(a: float) -> SignedLog:
    return _lgamma_signed(a)


def pochhammer(a: float, n: int) -> SignedLog:
    """Rising factorial ``a (a+1) ... (a+n-1)`` with sign tracking."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    if n == 0:
        return SignedLog.one()
    # an exact zero factor exists iff a is a nonpositive integer > -n
    if a <= 0 and a == math.floor(a) and a > -n:
        return SignedLog.zero()
    if a > 0:
        return SignedLog(float(gammaln(a + n) - gammaln(a)), 1)
    # k leading factors are negative, the rest positive
    k = min(n, math.ceil(-a)) if a != math.floor(a) else min(n, int(-a))
    logmag = float(gammaln(1.0 - a) - gammaln(1.0 - a - k))
    if k < n:
        logmag += float(gammaln(a + n) - gammaln(a + k))
    return SignedLog(logmag, -1 if k % 2 else 1)


def gen_pochhammer(a: float, rho: Sequence[int], beta: int = 1) -> SignedLog:
    """Generalized Pochhammer ``prod_i (a - (i-1) beta/2)_{rho_i}``."""
    rho = rho if isinstance(rho, Partition) else Partition(rho)
    check_beta(beta)
    out = SignedLog.one()
    for i, part in enumerate(rho):
        out = out * pochhammer(a - i * beta / 2.0, part)
        if out.sign == 0:
            break
    return out


def stiefel_volume(m: int, n: int, beta: int = 1) -> SignedLog:
    """Log volume ``2^m pi^{mn beta/2} / Gamma_m^beta[n beta/2]`` of V_{m,n}."""
    if m < 1 or n < m:
        raise DimensionError(f"need n >= m >= 1, got m={m}, n={n}")
    num = SignedLog(m * math.log(2.0) + m * n * beta / 2.0 * math.log(math.pi), 1)
    return num / log_mv_gamma(m, n * beta / 2.0, beta)


# ---------------------------------------------------------------------------
# symmetric eigenproblem


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric matrix, sorted nonincreasing."""

    eigenvalues: tuple

    def __post_init__(self):
        vals = tuple(sorted((float(v) for v in self.eigenvalues), reverse=True))
        if not vals:
            raise DimensionError("a spectrum needs at least one eigenvalue")
        object.__setattr__(self, "eigenvalues", vals)

    @classmethod
    def of(cls, values) -> "Spectrum":
        return cls(tuple(np.asarray(values, dtype=float).ravel()))

    @classmethod
    def from_matrix(cls, S) -> "Spectrum":
        return sym_eigenvalues(S)

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    @property
    def trace(self) -> float:
        return math.fsum(self.eigenvalues)

    @property
    def log_det(self) -> float:
        return math.fsum(math.log(v) for v in self.eigenvalues)

    @property
    def is_positive_definite(self) -> bool:
        tol = PD_RTOL * max(1.0, abs(self.trace))
        return self.eigenvalues[-1] > tol

    def scaled(self, c: float) -> "Spectrum":
        return Spectrum(tuple(c * v for v in self.eigenvalues))

    def as_array(self) -> np.ndarray:
        return np.array(self.eigenvalues)


def jacobi_eigh(S) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations for a small symmetric matrix.

    Returns ``(values, vectors)`` with values sorted nonincreasing and
    ``S @ vectors[:, j] == values[j] * vectors[:, j]``.
    """
    A = np.array(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    norm = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > SYMMETRY_RTOL * max(norm, 1e-300):
        raise ValueError("matrix is not symmetric within tolerance")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    threshold = JACOBI_OFFDIAG_RTOL * norm
    for _ in range(JACOBI_MAX_SWEEPS):
        off = math.sqrt(sum(A[p, q] ** 2 for p in range(n) for q in range(n) if p != q))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                A[p, q] = A[q, p] = 0.0
                V = V @ rot
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


def sym_eigenvalues(S) -> Spectrum:
    vals, _ = jacobi_eigh(S)
    return Spectrum(tuple(vals))


def sym_sqrt_inv(S) -> np.ndarray:
    """``S^{-1/2}`` of a symmetric positive definite matrix."""
    vals, vecs = jacobi_eigh(S)
    if vals[-1] <= 0:
        raise DomainError("matrix is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T
