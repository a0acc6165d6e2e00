import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from branchmax.errors import DomainError, ParameterError
from branchmax.offspring import (F_of, F_series, TABLE_SIZE, from_table, make_canonical, pmf,
                                 sample_offspring, stable_constant, tail_sum)

LAW = make_canonical(1.5, 0.5)

betas = st.floats(1.05, 1.95)


@st.composite
def laws(draw):
    beta = draw(betas)
    c = draw(st.floats(0.05, 1.0)) / beta
    return make_canonical(beta, c)


def test_canonical_pmf_values():
    np.testing.assert_allclose(pmf(LAW, np.arange(4)), [0.5, 0.25, 0.1875, 0.03125], rtol=0, atol=1e-12)


def test_boundary_c_gives_no_single_child():
    law = make_canonical(1.7, 1 / 1.7)
    assert pmf(law, 1) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("beta,c", [(1.0, 0.5), (2.0, 0.3), (1.5, 0.0), (1.5, 0.7)])
def test_out_of_range_parameters(beta, c):
    with pytest.raises(ParameterError):
        make_canonical(beta, c)


def test_pmf_log_gamma_matches_direct_product():
    # c (-1)^k binom(beta, k) by the running product beta (beta-1) ... (beta-k+1) / k!
    beta, c = LAW.beta, LAW.c
    k = np.arange(2, 51)
    term = 1.0
    direct = []
    for j in range(1, 51):
        term *= (beta - j + 1) / j
        if j >= 2:
            direct.append(c * (-1) ** j * term)
    np.testing.assert_allclose(pmf(LAW, k), direct, rtol=1e-12)


def test_normalization_with_analytic_tail():
    k = np.arange(0, 10 ** 6)
    total = math.fsum(pmf(LAW, k)) + tail_sum(LAW, 10 ** 6)
    assert total == pytest.approx(1.0, abs=1e-12)


@given(laws())
@settings(max_examples=30, deadline=None)
def test_tail_and_mean_identities(law):
    k = np.arange(0, 2000)
    p = pmf(law, k)
    assert np.all(p >= 0)
    assert tail_sum(law, 0) == 1.0
    assert tail_sum(law, 1) == pytest.approx(1 - pmf(law, 0), abs=1e-14)
    assert math.fsum(p) + tail_sum(law, 2000) == pytest.approx(1.0, abs=1e-12)
    # E[N] = sum_{n>=1} P(N >= n); the tail beyond 2000 is summed in closed-form-free chunks
    n = np.arange(1, 10 ** 6)
    head = math.fsum(tail_sum(law, n))
    # remaining sum_{n >= 1e6} c_beta n^-beta ~ c_beta N^{1-beta} / (beta - 1)
    rest = law.c_beta * (10 ** 6) ** (1 - law.beta) / (law.beta - 1)
    assert head + rest == pytest.approx(1.0, rel=2e-3)


def test_tail_constant():
    assert stable_constant(LAW) == pytest.approx(0.25 / math.sqrt(math.pi), abs=1e-12)
    n = np.array([10 ** 3, 10 ** 5, 10 ** 7])
    ratio = n ** 1.5 * tail_sum(LAW, n)
    assert abs(ratio[-1] - LAW.c_beta) < abs(ratio[0] - LAW.c_beta)
    assert ratio[-1] == pytest.approx(LAW.c_beta, rel=1e-6)


def test_tail_against_brute_force_sum():
    k = np.arange(0, 10 ** 7)
    p = pmf(LAW, k)
    cum = np.cumsum(p[::-1])[::-1]  # tail within the truncated range
    for n in (2, 10, 1000, 10 ** 5):
        assert tail_sum(LAW, n) == pytest.approx(cum[n] + tail_sum(LAW, 10 ** 7), rel=1e-9)


@given(laws())
@settings(max_examples=30, deadline=None)
def test_family_identity(law):
    assert law.c_beta * math.gamma(2 - law.beta) / (law.beta - 1) == pytest.approx(law.c, rel=1e-12)


def test_F_special_values():
    assert F_of(LAW, 0.0) == 0.0
    assert F_of(LAW, 1.0) == pytest.approx(pmf(LAW, 0))
    assert F_of(LAW, 0.5) == pytest.approx(0.5 * 0.5 ** 1.5, abs=1e-15)
    series = F_series(lambda n: pmf(LAW, n), 0.5, tail_bound=lambda n: tail_sum(LAW, n))
    assert series == pytest.approx(F_of(LAW, 0.5), abs=1e-12)
    with pytest.raises(DomainError):
        F_of(LAW, 1.5)


def test_F_small_z_asymptotics_against_series():
    target = LAW.c_beta * math.gamma(0.5) / 0.5
    errs = []
    for z in (1e-2, 1e-4, 1e-6):
        series = F_series(lambda n: pmf(LAW, n), z, tail_bound=lambda n: tail_sum(LAW, n))
        errs.append(abs(series / z ** 1.5 - target) / target)
    assert errs[-1] < 1e-6 or errs == sorted(errs, reverse=True)
    assert F_of(LAW, 1e-6) / 1e-9 == pytest.approx(target, rel=1e-6)


@given(laws(), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_F_shape(law, a, b):
    z1, z2 = min(a, b), max(a, b)
    f1, f2 = F_of(law, z1), F_of(law, z2)
    assert 0.0 <= f1 <= z1 + 1e-15
    assert f2 >= f1
    assert (z2 - f2) - (z1 - f1) >= -1e-15


def _taylor_rhs(n, u, coef):
    integral, _ = integrate.quad(lambda t: (1 - u * t) ** (n - 2) * (1 - t), 0, 1, epsabs=1e-14, epsrel=1e-14)
    return 1 - n * u + coef * u * u * integral


@pytest.mark.parametrize("n", range(2, 11))
@pytest.mark.parametrize("u", [0.1, 0.5, 0.9])
def test_taylor_identity(n, u):
    # integral form of the second-order remainder: the coefficient is n (n - 1)
    assert (1 - u) ** n == pytest.approx(_taylor_rhs(n, u, n * (n - 1)), abs=1e-10)


@pytest.mark.xfail(strict=True, reason="the printed expansion carries n(n-1)/2, which is off by a factor 2 "
                                        "in the remainder term; see the decisions ledger")
def test_taylor_identity_as_printed():
    assert (1 - 0.5) ** 2 == pytest.approx(_taylor_rhs(2, 0.5, 1.0), abs=1e-10)


def test_sampler_mean_and_p0(rng):
    draws = sample_offspring(LAW, rng, 10 ** 7)
    # infinite variance: use the truncated second moment bound for the stderr
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - 1.0) < 3 * se
    p0 = np.mean(draws[: 10 ** 6] == 0)
    assert abs(p0 - 0.5) < 3 * math.sqrt(0.25 / 10 ** 6)
    frac = np.mean(draws >= 100)
    se = math.sqrt(frac * (1 - frac) / draws.size)
    assert abs(100 ** 1.5 * frac - 100 ** 1.5 * tail_sum(LAW, 100)) < 3 * 100 ** 1.5 * se


def test_sampler_chi_square(rng):
    draws = sample_offspring(LAW, rng, 10 ** 6)
    counts = np.bincount(np.minimum(draws, 51), minlength=52)
    expected = np.append(pmf(LAW, np.arange(51)), tail_sum(LAW, 51)) * draws.size
    _, p = stats.chisquare(counts, expected)
    assert p > 1e-3


def test_sampler_inverts_analytic_tail():
    # uniforms deep in the tail land past the table and still invert P(N >= n) >= u > P(N >= n+1)
    from branchmax.offspring import _sample_many

    us = np.array([1e-7, 1e-9, 1e-12])
    n = _sample_many(us, LAW.tail, LAW.beta, LAW.log_tail_coef)
    assert np.all(n > TABLE_SIZE)
    for ni, u in zip(n, us):
        assert tail_sum(LAW, ni) >= u > tail_sum(LAW, ni + 1)


def _closed_table(K=20_000):
    # canonical law cut at K, with the missing mass and mean put back at K-1 and 0
    p = pmf(LAW, np.arange(K))
    m = 1.0 - math.fsum(p)
    d = 1.0 - math.fsum(np.arange(K) * p)
    a = d / (K - 1)
    p[K - 1] += a
    p[0] -= a - m
    return p


def test_from_table_validates():
    p = _closed_table()
    law = from_table(p, 1.5, LAW.c_beta, rtol=1.0)
    assert F_of(law, 0.5) == pytest.approx(F_of(LAW, 0.5), abs=1e-4)
    draws = sample_offspring(law, np.random.default_rng(3), 10 ** 5)
    assert draws.max() < p.size
    with pytest.raises(ParameterError):
        from_table(p, 1.5, LAW.c_beta / 3, rtol=1.0)
    with pytest.raises(ParameterError):
        from_table(p / 2, 1.5, LAW.c_beta)
