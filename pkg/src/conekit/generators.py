"""Elliptical generator kernels ``h`` and their kernel integrals.

Each generator normalises a spherical law of total real dimension ``D``::

    Gaussian     h(y) = (2 pi / beta)^(-D/2) exp(-beta y / 2)
    PearsonVII   h(y) = Gamma(s) / ((pi/beta)^(D/2) Gamma(s - D/2)) (1 + beta y)^(-s),
                 s = (D + beta nu) / 2
    PearsonII    h(y) = Gamma(D/2 + beta q + 1) / ((pi/beta)^(D/2) Gamma(beta q + 1))
                 (1 - beta y)^(beta q),  beta y < 1

so that ``int_0^inf v^(D/2-1) h(a v) dv = a^(-D/2) Gamma(D/2) / pi^(D/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .numeric import DomainError, DimensionError, SignedLog, check_beta, log_gamma, pochhammer

KINDS = ("gaussian", "pearson7", "pearson2")
_ALIASES = {
    "gaussian": "gaussian",
    "normal": "gaussian",
    "pearson7": "pearson7",
    "pearsonvii": "pearson7",
    "t": "pearson7",
    "pearson2": "pearson2",
    "pearsonii": "pearson2",
}

QUAD_EPSREL = 1e-13
QUAD_LIMIT = 400


class DivergentIntegralError(ArithmeticError):
    """A kernel integral does not converge."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""


@dataclass(frozen=True)
class EllipticalGenerator:
    """A generator kernel with explicit total dimension ``D``.

    Parameters
    ----------
    kind : {"gaussian", "pearson7", "pearson2"}
    dimension : float
        Real dimension ``D`` the kernel normalises (e.g. ``n m`` for a
        Wishart block or ``beta K (N-1)`` for affine shape).
    shape : float, optional
        ``nu`` for Pearson VII, ``q`` for Pearson II, ignored for Gaussian.
    beta : int
        Division algebra index.
    """

    kind: str
    dimension: float
    shape: float | None = None
    beta: int = 1

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower().replace("_", "").replace(" ", ""))
        if kind is None:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        check_beta(self.beta)
        if not self.dimension > 0:
            raise DimensionError(f"generator dimension must be positive, got {self.dimension}")
        if kind == "gaussian":
            if self.shape is not None:
                raise ValueError("the Gaussian generator takes no shape parameter")
        elif self.shape is None or not self.shape > 0:
            name = "nu" if kind == "pearson7" else "q"
            raise ValueError(f"{kind} needs a positive shape {name}, got {self.shape}")

    @classmethod
    def from_config(cls, block: dict) -> "EllipticalGenerator":
        return cls(
            kind=block["kind"],
            dimension=float(block["dimension"]),
            shape=None if block.get("shape") is None else float(block["shape"]),
            beta=int(block.get("beta", 1)),
        )

    def to_config(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension, "shape": self.shape, "beta": self.beta}

    def with_dimension(self, dimension: float) -> "EllipticalGenerator":
        return EllipticalGenerator(self.kind, dimension, self.shape, self.beta)

    @property
    def exponent(self) -> float:
        """Power of the kernel: ``s`` for Pearson VII, ``beta q`` for Pearson II."""
        if self.kind == "pearson7":
            return (self.dimension + self.beta * self.shape) / 2.0
        if self.kind == "pearson2":
            return self.beta * self.shape
        return math.nan

    @property
    def support_end(self) -> float:
        return 1.0 / self.beta if self.kind == "pearson2" else math.inf

    def log_constant(self) -> float:
        """Log of the normalising constant multiplying the kernel shape."""
        D, b = self.dimension, self.beta
        if self.kind == "gaussian":
            return -D / 2.0 * math.log(2.0 * math.pi / b)
        lead = -D / 2.0 * math.log(math.pi / b)
        if self.kind == "pearson7":
            s = self.exponent
            return lead + float(gammaln(s) - gammaln(s - D / 2.0))
        bq = self.exponent
        return lead + float(gammaln(D / 2.0 + bq + 1.0) - gammaln(bq + 1.0))


def _deriv_factor(gen: EllipticalGenerator, n: int) -> SignedLog:
    """``h^(n)(v) = const * factor * shape(v)^(...)``; returns the v-free factor."""
    b = gen.beta
    if gen.kind == "gaussian":
        return SignedLog(n * math.log(b / 2.0), -1 if n % 2 else 1)
    if gen.kind == "pearson7":
        return SignedLog(n * math.log(b), -1 if n % 2 else 1) * pochhammer(gen.exponent, n)
    # falling factorial of beta q times (-beta)^n equals beta^n (-beta q)_n
    return SignedLog(n * math.log(b), 1) * pochhammer(-gen.exponent, n)


def h_deriv(gen: EllipticalGenerator, t: int, v) -> np.ndarray:
    """``t``-th derivative of ``h`` at ``v`` (array friendly, no support check)."""
    if t < 0:
        raise ValueError("derivative order must be nonnegative")
    v = np.asarray(v, dtype=float)
    fac = _deriv_factor(gen, t)
    if fac.sign == 0:
        return np.zeros_like(v)
    logc = gen.log_constant() + fac.log_magnitude
    b = gen.beta
    if gen.kind == "gaussian":
        return fac.sign * np.exp(logc - b * v / 2.0)
    if gen.kind == "pearson7":
        return fac.sign * np.exp(logc - (gen.exponent + t) * np.log1p(b * v))
    base = 1.0 - b * v
    with np.errstate(divide="ignore", invalid="ignore"):
        return fac.sign * np.exp(logc + (gen.exponent - t) * np.log(base))


def h_value(gen: EllipticalGenerator, v: float) -> float:
    """Kernel value including its normalising constant."""
    if v < 0:
        raise DomainError(f"generator argument must be nonnegative, got {v}")
    if gen.kind == "pearson2" and gen.beta * v >= 1:
        raise DomainError(f"Pearson II support requires beta*v < 1, got beta*v = {gen.beta * v}")
    return float(h_deriv(gen, 0, v))


def h_deriv_at_zero(gen: EllipticalGenerator, t: int) -> SignedLog:
    """Exact ``h^(t)(0)`` in signed-log form (sign 0 when it vanishes)."""
    if t < 0:
        raise ValueError("derivative order must be nonnegative")
    fac = _deriv_factor(gen, t)
    if fac.sign == 0:
        return SignedLog.zero()
    return SignedLog(gen.log_constant(), 1) * fac


def _log_norm_closed(D: float, a: float) -> float:
    return -D / 2.0 * math.log(a) + math.lgamma(D / 2.0) - D / 2.0 * math.log(math.pi)


def _moment_quad(gen: EllipticalGenerator, p: float, n: int, a: float = 1.0) -> float:
    """``int_0^inf v^(p-1) h^(n)(a v) dv`` by adaptive quadrature.

    Endpoint singularities are absorbed into algebraic weights; Pearson II
    uses the exact ``(end - v)^e`` weight on its compact support.
    """
    if p <= 0:
        raise DivergentIntegralError(f"v^{p - 1} is not integrable at 0")
    fac = _deriv_factor(gen, n)
    if fac.sign == 0:
        return 0.0
    b = gen.beta
    opts = dict(epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, full_output=1)
    pieces = []
    if gen.kind == "pearson2":
        e = gen.exponent - n
        if e <= -1:
            raise DivergentIntegralError(
                f"Pearson II derivative {n} with beta*q={gen.exponent} is not integrable at the support edge"
            )
        end = 1.0 / (a * b)
        # h^(n)(a v) = C (1 - a b v)^e = C (a b)^e (end - v)^e
        logc = gen.log_constant() + fac.log_magnitude + e * math.log(a * b)
        res = integrate.quad(lambda v: 1.0, 0.0, end, weight="alg", wvar=(p - 1.0, e), **opts)
        pieces.append((res, fac.sign * math.exp(logc)))
    else:
        if gen.kind == "pearson7" and p - gen.exponent - n >= 0:
            raise DivergentIntegralError(
                f"Pearson VII tail v^{p - 1 - gen.exponent - n:.3g} is not integrable"
            )
        split = 1.0 / a
        res = integrate.quad(lambda v: float(h_deriv(gen, n, a * v)), 0.0, split, weight="alg", wvar=(p - 1.0, 0.0), **opts)
        pieces.append((res, 1.0))
        res = integrate.quad(lambda v: v ** (p - 1.0) * float(h_deriv(gen, n, a * v)), split, math.inf, **opts)
        pieces.append((res, 1.0))
    total = 0.0
    for res, mult in pieces:
        if len(res) > 3 and res[3] and "roundoff" not in str(res[3]):
            raise QuadratureError(str(res[3]))
        total += mult * res[0]
    return total


def kernel_moment(gen: EllipticalGenerator, p: float, n: int) -> SignedLog:
    """Closed form of ``int_0^inf v^(p-1) h^(n)(v) dv``."""
    if p <= 0:
        raise DivergentIntegralError(f"v^{p - 1} is not integrable at 0")
    h0 = h_deriv_at_zero(gen, n)
    if h0.sign == 0:
        return SignedLog.zero()
    b = gen.beta
    if gen.kind == "gaussian":
        return h0 * SignedLog(p * math.log(2.0 / b) + math.lgamma(p), 1)
    if gen.kind == "pearson7":
        rest = gen.exponent + n - p
        if rest <= 0:
            raise DivergentIntegralError("Pearson VII kernel moment diverges")
        return h0 * SignedLog(-p * math.log(b) + math.lgamma(p) + math.lgamma(rest) - math.lgamma(gen.exponent + n), 1)
    e = gen.exponent - n
    # reflected real form of the Beta integral on [0, 1/beta]
    top = log_gamma(p) * log_gamma(e + 1.0)
    den_arg = p + e + 1.0
    if den_arg <= 0 and den_arg == math.floor(den_arg):
        return SignedLog.zero()
    return h0 * SignedLog(-p * math.log(b), 1) * top / log_gamma(den_arg)


def normalization_check(gen: EllipticalGenerator, a: float) -> float:
    """Relative residual of ``int v^(D/2-1) h(a v) dv`` against its closed form."""
    if not a > 0:
        raise DomainError("scale a must be positive")
    D = gen.dimension
    quad = _moment_quad(gen, D / 2.0, 0, a)
    closed = math.exp(_log_norm_closed(D, a))
    return abs(quad - closed) / closed


def _check_shape_dims(gen: EllipticalGenerator, K: int, N: int) -> float:
    if K < 1 or N < 2:
        raise DimensionError(f"need K >= 1 and N >= 2, got K={K}, N={N}")
    D = gen.beta * K * (N - 1)
    if not math.isclose(gen.dimension, D, rel_tol=1e-12):
        raise DimensionError(f"generator dimension {gen.dimension} differs from beta*K*(N-1) = {D}")
    return D


def zeta_coeff(gen: EllipticalGenerator, t: int, r: int, K: int, N: int) -> SignedLog:
    """Closed-form kernel coefficient ``zeta_{t,r}`` for the affine shape density.

    Equals ``int_0^inf v^(D/2+t-1) h^(2t+r)(v) dv`` with ``D = beta K (N-1)``.
    For Pearson II the Beta integral is kept in its real form
    ``Gamma(t+D/2) Gamma(beta q - n + 1) / (beta^(t+D/2) Gamma(D/2 + t + beta q - n + 1))``,
    analytically continued past the support edge.
    """
    if t < 0 or r < 0:
        raise ValueError("t and r must be nonnegative")
    D = _check_shape_dims(gen, K, N)
    p = D / 2.0 + t
    n = 2 * t + r
    if gen.kind == "pearson2":
        h0 = h_deriv_at_zero(gen, n)
        if h0.sign == 0:
            return SignedLog.zero()
        e = gen.exponent - n
        if e + 1.0 <= 0 and e + 1.0 == math.floor(e + 1.0):
            raise ZeroDivisionError(f"Pearson II coefficient has a gamma pole at t={t}, r={r}")
        den_arg = p + e + 1.0
        if den_arg <= 0 and den_arg == math.floor(den_arg):
            return SignedLog.zero()
        return h0 * SignedLog(-p * math.log(gen.beta), 1) * log_gamma(p) * log_gamma(e + 1.0) / log_gamma(den_arg)
    return kernel_moment(gen, p, n)


def gamma_tr_integral(gen: EllipticalGenerator, t: int, r: int, K: int, N: int) -> float:
    """Quadrature of ``int_0^inf v^(D/2+t-1) h^(2t+r)(v) dv`` (independent oracle for :func:`zeta_coeff`)."""
    if t < 0 or r < 0:
        raise ValueError("t and r must be nonnegative")
    D = _check_shape_dims(gen, K, N)
    return _moment_quad(gen, D / 2.0 + t, 2 * t + r)


def kernel_moment_quad(gen: EllipticalGenerator, p: float, n: int) -> float:
    """Quadrature of ``int_0^inf v^(p-1) h^(n)(v) dv``."""
    return _moment_quad(gen, p, n)
