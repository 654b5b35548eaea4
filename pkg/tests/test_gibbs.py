import math

import numpy as np
import pytest
from scipy import stats

from hardwall.dynamics import rescale
from hardwall.errors import AcceptanceTooLowError, ParameterError
from hardwall.gibbs import (limit_paths, pnc_from_increments, sample_limit_invariant,
                           sample_limit_invariant_batch, sample_pnc, sample_pnc_plus,
                           sample_pnc_plus_batch)
from hardwall.harness.stats import ks_two_sample
from hardwall.potential import make_gaussian, make_quartic


def test_degenerate_increments_give_flat_profile():
    phi = pnc_from_increments(np.zeros(9), 0.7)
    assert np.allclose(phi, 0.7 * math.sqrt(10))
    assert phi.sum() == pytest.approx(0.7 * 10 ** 1.5)


def test_sum_is_exact_at_large_N():
    rng = np.random.default_rng(0)
    for p in (make_gaussian(1.0), make_quartic(1.0)):
        phi = sample_pnc(10_000, 1.3, p, rng)
        assert abs(phi.sum() - 1.3 * 10_000 ** 1.5) < 1e-9 * 10_000


def test_n2_marginal_is_quarter_variance_normal():
    rng = np.random.default_rng(1)
    c = 0.4
    T1 = sample_pnc(2, c, make_gaussian(1.0), rng, 100_000)[:, 0] - c * math.sqrt(2)
    ks = stats.kstest(T1, stats.norm(scale=0.5).cdf)
    assert ks.statistic < 1.628 / math.sqrt(T1.size)
    v = T1.var()
    assert abs(v - 0.25) < 4 * 0.25 * math.sqrt(2 / T1.size)


def test_n2_variance_monte_carlo_1e6():
    T1 = sample_pnc(2, 1.0, make_gaussian(1.0), np.random.default_rng(2), 10 ** 6)[:, 0]
    assert abs(T1.var() - 0.25) < 4 * 0.25 * math.sqrt(2 / T1.size)


def test_large_c_rarely_rejects():
    rep = sample_pnc_plus_batch(16, 10.0, make_gaussian(1.0), np.random.default_rng(3), 10_000)
    assert rep.acceptance_estimate > 0.99
    assert rep.sample.min() >= 0


def test_acceptance_stabilizes_in_N():
    rng = np.random.default_rng(4)
    acc = [sample_pnc_plus_batch(N, 1.0, make_gaussian(1.0), rng, 20_000).acceptance_estimate
           for N in (16, 64, 256)]
    assert min(acc) > 0.5
    # successive changes shrink and the limit value is bounded away from 0
    assert abs(acc[2] - acc[1]) < abs(acc[1] - acc[0]) + 0.01


def test_conditioned_samples_are_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(50):
        rep = sample_pnc_plus(12, 0.5, make_quartic(1.0), rng)
        assert rep.sample.min() >= 0
        assert rep.attempts >= 1
        assert 0 < rep.acceptance_estimate <= 1


def test_acceptance_too_low_carries_attempts():
    with pytest.raises(AcceptanceTooLowError) as err:
        sample_pnc_plus(400, 1e-4, make_gaussian(1.0), np.random.default_rng(6), max_attempts=5)
    assert err.value.attempts == 5
    with pytest.raises(ParameterError):
        sample_pnc_plus(4, 0.0, make_gaussian(1.0), np.random.default_rng(6))


def test_limit_sampler_errors_and_mean():
    with pytest.raises(ParameterError):
        sample_limit_invariant(16, 0.0, 1.0, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        sample_limit_invariant(1, 1.0, 1.0, np.random.default_rng(0))
    y = limit_paths(64, 1.5, 1.0, np.random.default_rng(7), 100_000)
    avg = y.mean(axis=1)
    assert np.allclose(avg, 1.5, atol=1e-12)


def test_conditioning_raises_profile():
    rep = sample_limit_invariant_batch(64, 0.5, 1.0, np.random.default_rng(8), 5000)
    assert rep.sample.min() >= 0
    # the spatial average is conserved exactly, so conditioning shows in the minimum
    assert np.allclose(rep.sample.mean(axis=1), 0.5)
    assert rep.acceptance_estimate < 0.9
    big = sample_limit_invariant_batch(64, 10.0, 1.0, np.random.default_rng(9), 5000)
    assert big.acceptance_estimate > 0.99


def test_rescaled_gaussian_gibbs_equals_limit_sampler_law():
    """For gaussian(q) increments the rescaled profile has the grid law of the limit sampler."""
    M, c, q = 32, 1.0, 0.8
    a = sample_pnc(M, c, make_gaussian(q), np.random.default_rng(10), 50_000) / math.sqrt(M)
    b = limit_paths(M, c, q, np.random.default_rng(11), 50_000)
    for x in (0, M // 3, M - 1):
        assert ks_two_sample(a[:, x], b[:, x]).statistic < 1.628 * math.sqrt(2 / 50_000)
    assert np.allclose(rescale(a[0] * math.sqrt(M)).cells, a[0])
