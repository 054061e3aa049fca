import math

import numpy as np
import pytest
from scipy import integrate, stats

from conekit.cones import (
    ConeBound,
    cone_moment_integral,
    largest_root_cdf,
    prob_beta1_k1,
    prob_beta2_cone,
    prob_wishart_elliptical_k,
    prob_wishart_elliptical_k1,
    prob_wishart_gaussian,
)
from conekit.densities import MultimatrixParams, sample_spherical_blocks
from conekit.generators import EllipticalGenerator, h_value
from conekit.numeric import DomainError
from conekit.selftest import mc_cases, mc_estimate
from conekit.zonal import ConvergenceDomainError, SeriesControl


def scalar(x):
    return ConeBound.from_roots([[x]])


@pytest.mark.parametrize("mode", ["kummer", "direct"])
def test_beta2_worked_example(mode):
    res = prob_beta2_cone(MultimatrixParams.from_sizes(1, 2, [2]), scalar(0.5), mode=mode)
    assert res.converged
    assert res.probability == pytest.approx(1.0 / 3.0, abs=1e-8)


@pytest.mark.parametrize("n0, n1", [(1, 1), (2, 3), (5, 2)])
@pytest.mark.parametrize("x", [0.1, 0.9, 4.0])
def test_beta2_scalar_matches_f_distribution(n0, n1, x):
    expected = stats.f.cdf(x * n0 / n1, n1, n0)
    res = prob_beta2_cone(MultimatrixParams.from_sizes(1, n0, [n1]), scalar(x))
    assert res.probability == pytest.approx(expected, abs=1e-10)


def test_beta2_vanishing_cone():
    res = prob_beta2_cone(MultimatrixParams.from_sizes(2, 3, [3]), ConeBound.from_roots([[1e-9, 1e-9]]))
    assert res.probability < 1e-12


def test_beta2_direct_mode_domain():
    with pytest.raises(ConvergenceDomainError):
        prob_beta2_cone(MultimatrixParams.from_sizes(1, 2, [2]), scalar(1.5), mode="direct")


def test_kummer_and_direct_agree_inside_domain():
    params = MultimatrixParams.from_sizes(2, 3, [2, 3])
    bound = ConeBound.from_roots([[0.3, 0.1], [0.2, 0.15]])
    k = prob_beta2_cone(params, bound)
    d = prob_beta2_cone(params, bound, mode="direct")
    assert k.probability == pytest.approx(d.probability, abs=1e-10)


def test_bound_must_be_positive_definite():
    with pytest.raises(DomainError):
        ConeBound.from_matrices([[[1.0, 2.0], [2.0, 1.0]]])


def test_largest_root_cdf_is_scaled_identity_cone():
    params = MultimatrixParams.from_sizes(2, 3, [4, 2])
    a = largest_root_cdf(params, 0, 0.6)
    b = prob_beta2_cone(params.marginal(0), ConeBound.from_roots([[0.6, 0.6]]))
    assert a.probability == pytest.approx(b.probability, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("A", [0.5, 1.0, 2.0])
def test_gaussian_wishart_matches_chi2(n, A):
    params = MultimatrixParams.from_sizes(1, 1, [n])
    res = prob_wishart_gaussian(params, scalar(A))
    assert res.probability == pytest.approx(stats.chi2.cdf(A, n), abs=1e-8)
    ell = prob_wishart_elliptical_k1(EllipticalGenerator("gaussian", n), params, [[A]])
    assert ell.probability == pytest.approx(stats.chi2.cdf(A, n), abs=1e-8)


@pytest.mark.parametrize("A, expected", [(1.0, 0.682689492137), (2.0, 1 - math.exp(-1))])
def test_gaussian_wishart_examples(A, expected):
    n = 1 if A == 1.0 else 2
    res = prob_wishart_gaussian(MultimatrixParams.from_sizes(1, 1, [n]), scalar(A))
    assert res.probability == pytest.approx(expected, abs=1e-10)


def test_gaussian_wishart_tail_tends_to_one():
    res = prob_wishart_gaussian(MultimatrixParams.from_sizes(1, 1, [3]), scalar(60.0))
    assert res.probability == pytest.approx(stats.chi2.cdf(60.0, 3), abs=1e-10)


def test_gaussian_cascade_matches_product():
    params = MultimatrixParams.from_sizes(2, 1, [3, 4])
    A1 = np.array([[1.2, 0.3], [0.3, 0.9]])
    A2 = np.array([[2.0, -0.4], [-0.4, 1.5]])
    gen = EllipticalGenerator("gaussian", 14)
    joint = prob_wishart_elliptical_k(gen, params, ConeBound.from_matrices([A1, A2]))
    p1 = prob_wishart_gaussian(params.marginal(0), ConeBound.from_matrices([A1]))
    p2 = prob_wishart_gaussian(params.marginal(1), ConeBound.from_matrices([A2]))
    assert joint.converged
    assert joint.probability == pytest.approx(p1.probability * p2.probability, abs=1e-6)


def test_pearson7_k1_matches_quadrature():
    gen = EllipticalGenerator("pearson7", 1, 3.0)
    res = prob_wishart_elliptical_k1(gen, MultimatrixParams.from_sizes(1, 1, [1]), [[1.0]])
    expected = integrate.quad(lambda x: h_value(gen, x * x), -1.0, 1.0, epsabs=1e-13)[0]
    assert res.probability == pytest.approx(expected, abs=1e-6)


def test_pearson7_two_blocks_match_quadrature():
    gen = EllipticalGenerator("pearson7", 2, 3.0)
    res = prob_wishart_elliptical_k(gen, MultimatrixParams.from_sizes(1, 1, [1, 1]), ConeBound.from_roots([[0.5], [0.8]]))
    s1, s2 = math.sqrt(0.5), math.sqrt(0.8)
    expected = integrate.dblquad(lambda y, x: h_value(gen, x * x + y * y), -s1, s1, -s2, s2, epsabs=1e-12)[0]
    assert res.probability == pytest.approx(expected, abs=1e-8)


def test_elliptical_dimension_contract():
    with pytest.raises(ValueError):
        prob_wishart_elliptical_k1(EllipticalGenerator("gaussian", 3), MultimatrixParams.from_sizes(1, 1, [2]), [[1.0]])


def test_wishart_gaussian_m2_monte_carlo():
    params = MultimatrixParams.from_sizes(2, 1, [3])
    A = np.array([[3.0, 0.5], [0.5, 2.0]])
    d = sample_spherical_blocks(params, 200_000, seed=31)
    hit = np.linalg.eigvalsh(A[None] - d.W[0])[:, 0] > 0
    p, se = hit.mean(), math.sqrt(hit.mean() * (1 - hit.mean()) / hit.size)
    res = prob_wishart_gaussian(params, ConeBound.from_matrices([A]))
    assert abs(res.probability - p) < 4 * se


@pytest.mark.parametrize(
    "n0, n1, A, expected",
    [
        (1, 1, 0.25, 1.0 / 3.0),
        (2, 2, 0.5, 0.5),
        (3, 4, 0.4, stats.beta.cdf(0.4, 2.0, 1.5)),
    ],
)
def test_beta1_scalar(n0, n1, A, expected):
    res = prob_beta1_k1(MultimatrixParams.from_sizes(1, n0, [n1]), [[A]])
    assert res.probability == pytest.approx(expected, abs=1e-8)


def test_beta1_near_full_support_reports_slow_convergence():
    res = prob_beta1_k1(MultimatrixParams.from_sizes(1, 1, [1]), [[1 - 1e-3]], SeriesControl(max_degree=60))
    assert not res.converged
    assert 0.9 < res.probability <= 1.0


def test_beta1_domain():
    with pytest.raises(DomainError):
        prob_beta1_k1(MultimatrixParams.from_sizes(2, 3, [3]), np.diag([0.7, 0.6]))


@pytest.mark.parametrize("a, r, expected", [(1.0, 0, 1.0), (1.0, 1, 0.5)])
def test_cone_moment_integral_scalar(a, r, expected):
    assert float(cone_moment_integral(a, r, [[1.0]])) == pytest.approx(expected, rel=1e-14)


def test_cone_moment_integral_m2_monte_carlo():
    # int_{0 < W < I/2} tr(W) dW over (w11, w12, w22), uniform proposals on a box
    rng = np.random.default_rng(8)
    n = 1_000_000
    x, z = rng.uniform(0, 0.5, n), rng.uniform(0, 0.5, n)
    y = rng.uniform(-0.5, 0.5, n)
    inside = (x * z > y * y) & ((0.5 - x) * (0.5 - z) > y * y)
    vals = np.where(inside, x + z, 0.0) * 0.25
    est, se = vals.mean(), vals.std() / math.sqrt(n)
    got = float(cone_moment_integral(1.5, 1, 0.5 * np.eye(2)))
    assert abs(got - est) < 3 * se


@pytest.mark.slow
@pytest.mark.parametrize("case", range(3), ids=["beta2-k1", "beta2-k2", "beta1-k1"])
def test_series_match_monte_carlo_m2(case):
    name, params, bounds, series = mc_cases()[case]
    value = series(params, bounds).probability
    p, se = mc_estimate(name, params, bounds, seed=101, stream=case)
    assert abs(value - p) < 3 * se
