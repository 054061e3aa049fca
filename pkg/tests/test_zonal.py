import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from conekit.numeric import SignedLog, Spectrum, enumerate_partitions, gen_pochhammer
from conekit.zonal import (
    CACHE_ENV,
    JackEvaluator,
    JackTable,
    Level,
    SeriesControl,
    SeriesPoleError,
    hypergeometric_pFq,
    jack_table,
    nested_series,
    partial_sum_rQq,
    weighted_series_rPq,
    zonal_C,
    zonal_values,
)


def _monomials(x, y, z=0.0):
    return {
        "3": x**3 + y**3 + z**3,
        "21": x * x * (y + z) + y * y * (x + z) + z * z * (x + y),
        "111": x * y * z,
    }


def test_degree_one_is_trace():
    s = Spectrum.of([0.5, 0.3])
    assert zonal_C((1,), s) == pytest.approx(0.8, abs=1e-15)


@pytest.mark.parametrize("beta", [1, 2])
@pytest.mark.parametrize("r", [0, 1, 4, 9])
def test_single_variable_power(r, beta):
    assert zonal_C((r,) if r else (), Spectrum.of([0.7]), beta) == pytest.approx(0.7**r, rel=1e-14)


def test_partition_longer_than_spectrum_vanishes():
    assert zonal_C((2, 1), Spectrum.of([1.0])) == 0.0


def test_real_zonal_degree_two_closed_form():
    x, y = 0.9, 0.4
    s = Spectrum.of([x, y])
    assert zonal_C((2,), s) == pytest.approx(x * x + y * y + 2.0 / 3.0 * x * y, rel=1e-14)
    assert zonal_C((1, 1), s) == pytest.approx(4.0 / 3.0 * x * y, rel=1e-14)


def test_real_zonal_degree_three_closed_form():
    x, y, z = 0.9, 0.4, 0.25
    M = _monomials(x, y, z)
    s = Spectrum.of([x, y, z])
    assert zonal_C((3,), s) == pytest.approx(M["3"] + 0.6 * M["21"] + 0.4 * M["111"], rel=1e-13)
    assert zonal_C((2, 1), s) == pytest.approx(2.4 * M["21"] + 3.6 * M["111"], rel=1e-13)
    assert zonal_C((1, 1, 1), s) == pytest.approx(2.0 * M["111"], rel=1e-13)


def test_complex_case_is_schur_scaled():
    # alpha = 1: C_kappa = k! / prod(hooks) s_kappa
    x, y = 0.9, 0.4
    s = Spectrum.of([x, y])
    assert zonal_C((2,), s, beta=2) == pytest.approx(x * x + x * y + y * y, rel=1e-14)
    assert zonal_C((1, 1), s, beta=2) == pytest.approx(x * y, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 4),
    st.sampled_from([1, 2, 4]),
    st.integers(0, 10),
    st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4),
)
def test_sum_rule(m, beta, r, vals):
    x = np.array(vals[:m])
    total = sum(v for _, v in zonal_values(r, Spectrum.of(x), beta))
    assert total == pytest.approx(x.sum() ** r, rel=1e-11)


def test_zonal_polynomials_are_homogeneous():
    s = Spectrum.of([0.8, 0.5, 0.1])
    for kappa in enumerate_partitions(5, 3):
        assert zonal_C(kappa, s.scaled(0.3)) == pytest.approx(0.3**5 * zonal_C(kappa, s), rel=1e-12)


def test_batch_evaluator_matches_single():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (7, 3))
    block = JackEvaluator(jack_table(3, 1), x).block(6)
    for s in range(7):
        single = [v for _, v in zonal_values(6, Spectrum.of(x[s]))]
        assert np.allclose(block[:, s], single, rtol=1e-13)


def test_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    fresh = JackTable(3, 2.0)
    fresh.ensure(14)
    files = list(tmp_path.glob("*.npz"))
    assert len(files) == 1
    loaded = JackTable(3, 2.0)
    assert loaded.degree == 14
    x = np.array([[0.6, 0.3, 0.1]])
    assert np.array_equal(JackEvaluator(fresh, x).block(12), JackEvaluator(loaded, x).block(12))


def test_corrupt_cache_is_ignored(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    (tmp_path / "jack_m2_alpha2.0.npz").write_bytes(b"not a cache")
    table = JackTable(2, 2.0)
    assert table.degree == -1
    table.ensure(3)
    assert table.degree == 3


# -- hypergeometric series ---------------------------------------------------


@pytest.mark.parametrize(
    "a, b, x, expected",
    [
        ([], [], 1.0, math.e),
        ([2.0], [], 0.5, 4.0),
        ([1.0], [2.0], 1.0, math.e - 1.0),
    ],
)
def test_pFq_scalar_examples(a, b, x, expected):
    res = hypergeometric_pFq(a, b, Spectrum.of([x]))
    assert res.converged
    assert res.value == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("a, b, x", [(0.5, 1.5, -2.0), (3.0, 1.25, 0.8), (-2.0, 0.5, 1.7)])
def test_1F1_scalar_vs_scipy(a, b, x):
    assert hypergeometric_pFq([a], [b], Spectrum.of([x])).value == pytest.approx(special.hyp1f1(a, b, x), rel=1e-10)


@pytest.mark.parametrize("x", [[0.3, 0.2], [0.5, 0.1, 0.05]])
def test_0F0_is_exponential_of_trace(x):
    for beta in (1, 2):
        assert hypergeometric_pFq([], [], Spectrum.of(x), beta).value == pytest.approx(math.exp(sum(x)), rel=1e-13)


@pytest.mark.parametrize("beta", [1, 2])
def test_1F0_is_determinant_power(beta):
    x = [0.4, 0.25, 0.1]
    a = 1.7
    got = hypergeometric_pFq([a], [], Spectrum.of(x), beta).value
    assert got == pytest.approx(np.prod(1 - np.array(x)) ** (-a), rel=1e-10)


def test_weighted_series_examples():
    s = Spectrum.of([1.3])
    assert weighted_series_rPq(lambda r: 1.0, [], [], s).value == pytest.approx(hypergeometric_pFq([], [], s).value, rel=1e-15)
    got = weighted_series_rPq(lambda r: math.gamma(2 + r), [1.0], [2.0], Spectrum.of([-0.5]))
    assert got.value == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert weighted_series_rPq(lambda r: 1.0 if r == 0 else 0.0, [1.0], [2.0], s).value == 1.0


@pytest.mark.parametrize(
    "r, a, b, x, expected",
    [
        (0, [1.0], [2.0], [0.3, 0.2], 1.0),
        (3, [1.0], [2.0], [1.0], 0.25),
    ],
)
def test_partial_sum_examples(r, a, b, x, expected):
    assert partial_sum_rQq(r, a, b, Spectrum.of(x)) == pytest.approx(expected, rel=1e-14)


def test_partial_sum_degree_one():
    x = [0.6, 0.2]
    got = partial_sum_rQq(1, [1.5, 2.0], [3.0], Spectrum.of(x))
    assert got == pytest.approx(1.5 * 2.0 / 3.0 * 0.8, rel=1e-14)


def test_partial_sum_matches_explicit_terms():
    s = Spectrum.of([0.7, 0.4, 0.2])
    a, b = [1.25], [2.5]
    explicit = sum(
        float(gen_pochhammer(a[0], k)) / float(gen_pochhammer(b[0], k)) * zonal_C(k, s) for k in enumerate_partitions(4, 3)
    )
    assert partial_sum_rQq(4, a, b, s) == pytest.approx(explicit, rel=1e-13)


def test_denominator_pole_is_reported():
    # (b)_kappa vanishes for b = 0.5 once kappa has a second part (0.5 - 1/2 = 0)
    with pytest.raises(SeriesPoleError):
        hypergeometric_pFq([1.0], [0.5], Spectrum.of([0.3, 0.2]))


def test_terminating_series_with_negative_integer_parameter():
    # 1F0(-2; x) = (1 - x)^2 terminates after degree 2
    res = hypergeometric_pFq([-2.0], [], Spectrum.of([3.0]))
    assert res.value == pytest.approx(4.0, rel=1e-14)


def test_unconverged_series_is_flagged():
    res = hypergeometric_pFq([], [], Spectrum.of([40.0]), ctrl=SeriesControl(max_degree=5))
    assert not res.converged
    assert res.degree_used == 5


def test_two_level_series_factorizes_for_exp_weight():
    # sum_R 1/R! sum multinom prod Q = prod 0F0 when a = b = ()
    x1, x2 = np.array([[0.3, 0.1]]), np.array([[0.2, 0.05]])
    weight = lambda R: SignedLog(-math.lgamma(R + 1), 1)
    out = nested_series(weight, [Level((), (), x1), Level((), (), x2)], 1, SeriesControl())
    assert out.value[0] == pytest.approx(math.exp(0.65), rel=1e-13)
