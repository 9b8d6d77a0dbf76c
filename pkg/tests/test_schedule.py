import numpy as np
import pytest
from scipy import stats

from voxdiff.errors import ConfigError
from voxdiff.rng import stream
from voxdiff.schedule import (
    Schedule,
    TimeDistribution,
    alpha,
    alpha_prime,
    make_grid,
    sample_time,
)


def test_alpha_boundaries_linear():
    s = Schedule("linear", 1e-4, 1e-4)
    assert alpha(s, 0.0) == pytest.approx(0.9999, abs=1e-15)
    assert alpha(s, 1.0) == pytest.approx(1e-4, abs=1e-15)


def test_alpha_cosine_midpoint():
    s = Schedule("cosine", 1e-4, 1e-4)
    expected = 1e-4 + (1 - 2e-4) * np.cos(np.pi / 4)
    assert alpha(s, 0.5) == pytest.approx(expected, rel=1e-14)
    assert alpha(s, 0.0) == pytest.approx(0.9999, abs=1e-15)
    assert alpha(s, 1.0) == pytest.approx(1e-4, abs=1e-12)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
def test_alpha_strictly_decreasing_in_unit_interval(kind):
    s = Schedule(kind)
    t = np.linspace(0, 1, 513)
    vals = alpha(s, t)
    assert np.all(np.diff(vals) < 0)
    assert np.all((vals > 0) & (vals < 1))


def test_alpha_prime_linear_constant():
    s = Schedule("linear", 1e-4, 1e-4)
    assert alpha_prime(s, 0.3) == pytest.approx(-0.9998, abs=1e-15)


def test_alpha_prime_cosine_values():
    s = Schedule("cosine", 1e-4, 1e-4)
    assert alpha_prime(s, 0.0) == 0.0
    expected = -(1 - 2e-4) * (np.pi / 2) * np.sin(np.pi / 4)
    assert alpha_prime(s, 0.5) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
def test_alpha_prime_matches_finite_differences(kind):
    s = Schedule(kind)
    gen = stream(11, "fd", kind)
    ts = gen.uniform(1e-3, 1 - 1e-3, size=100)
    h = 1e-6
    fd = (alpha(s, ts + h) - alpha(s, ts - h)) / (2 * h)
    an = alpha_prime(s, ts)
    rel = np.abs(fd - an) / np.abs(an)
    assert rel.max() < 1e-6


def test_time_domain_errors():
    s = Schedule("linear")
    with pytest.raises(ConfigError):
        alpha(s, -0.1)
    with pytest.raises(ConfigError):
        alpha_prime(s, 1.5)
    with pytest.raises(ConfigError):
        Schedule("quadratic")


def test_sample_time_moments():
    n = 10**5
    u = sample_time(TimeDistribution("uniform"), stream(0, "u"), n)
    assert abs(u.mean() - 0.5) < 3 * np.sqrt(1 / 12 / n)
    ln = sample_time(TimeDistribution("logit-normal", (0.0, 1.0)), stream(0, "ln"), n)
    assert abs(np.median(ln) - 0.5) < 0.01
    be = sample_time(TimeDistribution("beta", (3.0, 1.0)), stream(0, "be"), n)
    var = 3 * 1 / ((4) ** 2 * 5)
    assert abs(be.mean() - 0.75) < 3 * np.sqrt(var / n)


def test_sample_time_invalid_params():
    with pytest.raises(ConfigError):
        TimeDistribution("logit-normal", (0.0, -1.0))
    with pytest.raises(ConfigError):
        TimeDistribution("beta", (0.0, 1.0))
    with pytest.raises(ConfigError):
        TimeDistribution("cauchy")


def test_sample_time_ks_against_analytic_cdf():
    n = 10**5
    cases = [
        (TimeDistribution("uniform"), stats.uniform.cdf),
        (
            TimeDistribution("logit-normal", (1.0, 1.0)),
            lambda x: stats.norm.cdf((np.log(x / (1 - x)) - 1.0) / 1.0),
        ),
        (TimeDistribution("beta", (3.0, 1.0)), lambda x: stats.beta.cdf(x, 3, 1)),
    ]
    for idx, (dist, cdf) in enumerate(cases):
        draws = sample_time(dist, stream(5, "ks", idx), n)
        ks = stats.ks_1samp(draws, cdf).statistic
        assert ks < 0.01, (dist.kind, ks)


def test_make_grid_endpoints_and_examples():
    g = make_grid(1, "linear", 0.001)
    assert np.allclose(g.values, [1.0, 0.001])
    g = make_grid(2, "cosine", 0.0)
    assert np.allclose(g.values, [1.0, np.cos(np.pi / 4), 0.0])
    g = make_grid(4, "linear", 0.0)
    assert np.allclose(g.values, [1.0, 0.75, 0.5, 0.25, 0.0])


@pytest.mark.parametrize("kind", ["linear", "cosine"])
@pytest.mark.parametrize("T", [1, 2, 7, 64, 256])
def test_make_grid_monotone_sweep(kind, T):
    g = make_grid(T, kind, 1e-3)
    assert g.values[0] == 1.0
    assert g.values[-1] == 1e-3
    assert np.all(np.diff(g.values) < 0)
    assert len(g.values) == T + 1


def test_make_grid_rejects_zero_steps():
    with pytest.raises(ConfigError):
        make_grid(0, "linear", 0.001)
