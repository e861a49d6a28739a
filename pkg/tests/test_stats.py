import pytest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from bayespilot.stats import (
    DistSpec, ParameterDomainError, RngStream, beta_cdf, beta_sf, draw, logpdf
)


def test_beta_sf_quadrature():
    expected, _ = integrate.quad(stats.beta(41, 21).pdf, 0.8, 1, epsabs=1e-12)
    assert_allclose(beta_sf(0.8, 41, 21), expected, atol=1e-8)


@pytest.mark.parametrize('x,alpha,beta', [
    (0.7, 1, 1),
    (0.5, 3, 3),
    (0.8, 41, 21),
    (0.66, 22.4, 9.6),
    (0.01, 0.5, 0.5),
])
def test_beta_cdf_sf(x, alpha, beta):
    assert_allclose(beta_cdf(x, alpha, beta), stats.beta(alpha, beta).cdf(x),
                    rtol=1e-10)
    assert_allclose(beta_cdf(x, alpha, beta) + beta_sf(x, alpha, beta), 1,
                    rtol=1e-12)


def test_beta_cdf_limits():
    assert beta_cdf(0, 2, 3) == 0
    assert beta_cdf(1, 2, 3) == 1
    assert beta_sf(1, 2, 3) == 0


def test_beta_cdf_vectorized():
    x = np.linspace(0, 1, 11)
    result = beta_cdf(x, 2, 5)
    assert result.shape == x.shape
    assert np.all(np.diff(result) >= 0)


@pytest.mark.parametrize('x,alpha,beta', [
    (0.5, 0, 1),
    (0.5, 1, -1),
    (0.5, np.inf, 1),
    (1.5, 1, 1),
    (-0.1, 1, 1),
])
def test_beta_cdf_domain(x, alpha, beta):
    with pytest.raises(ParameterDomainError):
        beta_cdf(x, alpha, beta)


def test_stream_reproducible():
    a = RngStream(5, 3, (1, 2)).generator.random(10)
    b = RngStream(5, 3, (1, 2)).generator.random(10)
    assert_array_equal(a, b)


def test_stream_independence():
    base = RngStream(5)
    draws = [
        base.generator.random(5),
        base.substream(1).generator.random(5),
        base.child(0).generator.random(5),
        base.child(1).generator.random(5),
        RngStream(6).generator.random(5),
    ]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_stream_advances():
    stream = RngStream(1)
    a = draw(DistSpec.normal(0, 1), stream)
    b = draw(DistSpec.normal(0, 1), stream)
    assert a != b


def test_stream_key_validation():
    with pytest.raises(ParameterDomainError):
        RngStream(-1)
    with pytest.raises(ParameterDomainError):
        RngStream(1, 2**64)


def test_beta_draws():
    x = draw(DistSpec.beta(40, 10), RngStream(1), 10**6)
    assert abs(x.mean() - 0.8) < 0.001


@pytest.mark.parametrize('dist, cdf', [
    (DistSpec.beta(40, 10), lambda x: beta_cdf(x, 40, 10)),
    (DistSpec.beta(0.5, 2), lambda x: beta_cdf(x, 0.5, 2)),
    (DistSpec.normal(0.2, 0.25), stats.norm(0.2, 0.25).cdf),
])
def test_draws_ks(dist, cdf):
    x = draw(dist, RngStream(11), 10**5)
    assert stats.kstest(x, cdf).pvalue > 0.01


@pytest.mark.parametrize('beta', [0.5, 1, 3.5, 20])
def test_beta_cdf_alpha_one(beta):
    x = np.linspace(0, 1, 101)
    assert_allclose(beta_cdf(x, 1, beta), 1 - (1 - x)**beta, rtol=0, atol=1e-12)


def test_normal_inverse_gamma_draws():
    sigma2, mu = draw(DistSpec.normal_inverse_gamma(10, 6, 20, 39), RngStream(2), 10**6)
    assert abs(sigma2.mean() - 39 / 19) < 0.01
    assert abs(mu.mean() - 10) < 0.01
    # mu | sigma2 ~ N(mu0, sigma2/nu0)
    z = (mu - 10) / np.sqrt(sigma2 / 6)
    assert abs(z.std() - 1) < 0.01


def test_inverse_gamma_draws():
    x = draw(DistSpec.inverse_gamma(50, 45), RngStream(3), 10**5)
    assert abs(x.mean() - 45 / 49) < 0.005


def test_binomial_draws():
    x = draw(DistSpec.binomial(60, 0.8), RngStream(4), 10**5)
    assert abs(x.mean() - 48) < 0.5
    assert x.min() >= 0 and x.max() <= 60
    assert isinstance(draw(DistSpec.binomial(60, 0.8), RngStream(4)), int)


def test_draw_scalar():
    x = draw(DistSpec.beta(2, 2), RngStream(1))
    assert isinstance(x, float)


@pytest.mark.parametrize('dist,x', [
    (DistSpec.beta(22.4, 9.6), np.array([0.3, 0.7, 0.9])),
    (DistSpec.normal(0.2, 0.25), np.array([-1.0, 0.2, 3.0])),
    (DistSpec.inverse_gamma(2, 2), np.array([0.1, 1.0, 10.0])),
])
def test_logpdf(dist, x):
    assert_allclose(logpdf(dist, x), dist.frozen().logpdf(x), rtol=1e-10)


@pytest.mark.parametrize('kind,params', [
    ('beta', (0, 1)),
    ('beta', (1, np.nan)),
    ('binomial', (10.5, 0.5)),
    ('binomial', (10, 1.5)),
    ('normal', (0, 0)),
    ('inverse_gamma', (-1, 1)),
    ('normal_inverse_gamma', (0, 1, 0, 1)),
    ('gamma', (1, 1)),
])
def test_distspec_domain(kind, params):
    with pytest.raises(ParameterDomainError):
        DistSpec(kind, params)


def test_distspec_dict():
    spec = DistSpec.beta(40, 10)
    assert spec.as_dict() == {'dist': 'beta', 'alpha': 40, 'beta': 10}
    assert DistSpec.from_dict(spec.as_dict()) == spec
    assert spec.get('alpha') == 40
    with pytest.raises(ParameterDomainError):
        DistSpec.from_dict({'dist': 'beta', 'alpha': 1})
    with pytest.raises(ParameterDomainError):
        DistSpec.from_dict({'dist': 'beta', 'alpha': 1, 'beta': 1, 'gamma': 1})
