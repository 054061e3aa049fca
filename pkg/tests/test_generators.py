import math

import numpy as np
import pytest
from scipy import integrate

from conekit.generators import (
    DivergentIntegralError,
    EllipticalGenerator,
    gamma_tr_integral,
    h_deriv,
    h_deriv_at_zero,
    h_value,
    kernel_moment,
    kernel_moment_quad,
    normalization_check,
    zeta_coeff,
)
from conekit.numeric import DimensionError, DomainError

GAUSS2 = EllipticalGenerator("gaussian", 2)
CAUCHY1 = EllipticalGenerator("pearson7", 1, 1.0)


@pytest.mark.parametrize(
    "gen, v, expected",
    [
        (GAUSS2, 0.0, 1.0 / (2.0 * math.pi)),
        (CAUCHY1, 0.0, 1.0 / math.pi),
        (GAUSS2, 1.3, math.exp(-0.65) / (2.0 * math.pi)),
    ],
)
def test_h_value_examples(gen, v, expected):
    assert h_value(gen, v) == pytest.approx(expected, rel=1e-14)


def test_pearson2_support_edge():
    gen = EllipticalGenerator("pearson2", 3, 1.5)
    with pytest.raises(DomainError):
        h_value(gen, 1.0)
    with pytest.raises(DomainError):
        h_value(gen, -0.1)


@pytest.mark.parametrize(
    "gen, t, expected",
    [
        (GAUSS2, 0, 1.0 / (2.0 * math.pi)),
        (GAUSS2, 1, -1.0 / (4.0 * math.pi)),
        (CAUCHY1, 2, 2.0 / math.pi),
    ],
)
def test_derivative_at_zero_examples(gen, t, expected):
    assert float(h_deriv_at_zero(gen, t)) == pytest.approx(expected, rel=1e-14)


def test_pearson2_integer_exponent_has_vanishing_derivatives():
    gen = EllipticalGenerator("pearson2", 2, 2.0)
    assert h_deriv_at_zero(gen, 2).sign != 0
    assert h_deriv_at_zero(gen, 3).sign == 0


@pytest.mark.parametrize(
    "gen",
    [GAUSS2, EllipticalGenerator("pearson7", 3, 2.5), EllipticalGenerator("pearson2", 4, 6.5), EllipticalGenerator("gaussian", 3, beta=2)],
    ids=lambda g: f"{g.kind}-D{g.dimension}-b{g.beta}",
)
@pytest.mark.parametrize("t", [1, 2, 3])
def test_derivatives_by_central_differences(gen, t):
    v, h = 0.3, 1e-2
    lower = h_deriv(gen, t - 1, np.array([v - h, v + h, v - 2 * h, v + 2 * h]))
    # fourth-order stencil
    fd = (8.0 * (lower[1] - lower[0]) - (lower[3] - lower[2])) / (12.0 * h)
    exact = float(h_deriv(gen, t, v))
    assert fd == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize(
    "gen, a",
    [(GAUSS2, 1.0), (GAUSS2, 2.0), (CAUCHY1, 1.0), (EllipticalGenerator("pearson2", 3, 2.0), 1.5)],
)
def test_normalization_examples(gen, a):
    assert normalization_check(gen, a) <= 1e-8


@pytest.mark.parametrize("D", [1, 2, 5, 9])
def test_generators_integrate_to_one_over_space(D):
    # int_{R^D} h(|x|^2) dx = pi^{D/2}/Gamma(D/2) int v^{D/2-1} h(v) dv
    for gen in (EllipticalGenerator("gaussian", D), EllipticalGenerator("pearson7", D, 2.0), EllipticalGenerator("pearson2", D, 1.5)):
        moment = float(kernel_moment(gen, D / 2.0, 0))
        assert moment * math.pi ** (D / 2.0) / math.gamma(D / 2.0) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("t", range(6))
@pytest.mark.parametrize("D", [1, 2, 6])
def test_gaussian_moment_identity(D, t):
    gen = EllipticalGenerator("gaussian", D)
    expected = math.pi ** (-D / 2.0) * math.gamma(D / 2.0) * (-0.5) ** t
    assert float(kernel_moment(gen, D / 2.0, t)) == pytest.approx(expected, rel=1e-12)
    assert kernel_moment_quad(gen, D / 2.0, t) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize(
    "t, r, expected",
    [(0, 0, 1.0), (0, 1, -0.5)],
)
def test_zeta_gaussian_examples(t, r, expected):
    gen = EllipticalGenerator("gaussian", 1)
    assert float(zeta_coeff(gen, t, r, 1, 2)) == pytest.approx(expected, rel=1e-13)


def test_zeta_quadrature_gaussian_t1():
    gen = EllipticalGenerator("gaussian", 1)
    assert float(zeta_coeff(gen, 1, 0, 1, 2)) == pytest.approx(gamma_tr_integral(gen, 1, 0, 1, 2), rel=1e-8)


@pytest.mark.parametrize(
    "gen, tol",
    [
        (EllipticalGenerator("gaussian", 2), 1e-7),
        (EllipticalGenerator("pearson7", 2, 3.0), 1e-6),
        (EllipticalGenerator("pearson2", 2, 12.5), 1e-6),
    ],
    ids=["gaussian", "pearson7", "pearson2"],
)
def test_zeta_matches_quadrature(gen, tol):
    for t in range(5):
        for r in range(5):
            assert float(zeta_coeff(gen, t, r, 1, 3)) == pytest.approx(gamma_tr_integral(gen, t, r, 1, 3), rel=tol)


def test_pearson2_divergent_moment_detected():
    gen = EllipticalGenerator("pearson2", 2, 1.5)
    with pytest.raises(DivergentIntegralError):
        kernel_moment_quad(gen, 1.0, 3)


def test_dimension_contract():
    with pytest.raises(DimensionError):
        zeta_coeff(EllipticalGenerator("gaussian", 3), 0, 0, 1, 3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "cauchy-ish", "dimension": 2},
        {"kind": "pearson7", "dimension": 2},
        {"kind": "gaussian", "dimension": 2, "shape": 1.0},
        {"kind": "gaussian", "dimension": 0},
    ],
)
def test_invalid_generators(kwargs):
    with pytest.raises(ValueError):
        EllipticalGenerator(**kwargs)


def test_config_roundtrip():
    gen = EllipticalGenerator.from_config({"kind": "Pearson_VII", "dimension": 4, "shape": 3})
    assert gen.kind == "pearson7"
    assert EllipticalGenerator.from_config(gen.to_config()) == gen


def test_pearson2_quadrature_of_density_matches_closed_form():
    gen = EllipticalGenerator("pearson2", 3, 2.0)
    val = integrate.quad(lambda v: v**0.5 * h_value(gen, v), 0.0, 1.0)[0]
    assert val == pytest.approx(float(kernel_moment(gen, 1.5, 0)), rel=1e-10)
