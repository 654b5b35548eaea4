import math

import numpy as np
import pytest
from scipy import linalg

from hardwall.errors import ConfigurationError, ParameterError
from hardwall.geometry import StepField, cosine_mode
from hardwall.gibbs import limit_paths, sample_limit_invariant_batch
from hardwall.harness.stats import ks_two_sample, pooled_variance_se
from hardwall.lattice import laplacian_neumann
from hardwall.spde import (banded_solve, bilaplacian_factor, default_eps, default_penalty_dt,
                           penalized_ensemble, penalized_weights, reference_ensemble,
                           sample_penalized_invariant, simulate_limit_penalized,
                           simulate_limit_reference)
from hardwall.streams import generator, generators


def mode_variance(sample, k):
    M = sample.shape[1]
    w = cosine_mode(k, M).cells / M
    return sample @ w


def test_banded_solver_matches_dense():
    M, q, dt = 20, 0.7, 1e-6
    cb = bilaplacian_factor(M, q, dt)
    L = laplacian_neumann(np.eye(M))
    A = np.eye(M) + dt * M ** 4 / q * (L @ L)
    b = np.random.default_rng(0).normal(size=M)
    x = np.empty(M)
    banded_solve(cb, b, x)
    assert np.allclose(x, linalg.solve(A, b), rtol=1e-12, atol=1e-14)
    assert x.sum() == pytest.approx(b.sum(), rel=1e-13)


def test_penalized_rejects_unstable_dt_and_bad_eps():
    u0 = np.ones((1, 16))
    eps = default_eps(16)
    with pytest.raises(ConfigurationError):
        penalized_ensemble(u0, 1.0, 1e-6, eps, eps, [cosine_mode(1, 16)], 1,
                           [np.random.default_rng(0)])
    with pytest.raises(ParameterError):
        penalized_ensemble(u0, 1.0, 1e-6, 1e-9, 0.0, [cosine_mode(1, 16)], 1,
                           [np.random.default_rng(0)])
    with pytest.raises(ParameterError):
        simulate_limit_reference(1.0, 1.0, 2, 1e-6, [cosine_mode(1, 2)], 1,
                                 np.random.default_rng(0))


def test_penalized_mean_is_conserved():
    M = 64
    run = simulate_limit_penalized(0.6, 1.0, M, 500 * default_penalty_dt(M, default_eps(M)),
                                   None, None, [StepField(np.ones(1))], 10,
                                   np.random.default_rng(1))
    assert run.diagnostics["max_mean_gap"] < 1e-9
    assert np.allclose(run.records[:, 0], 0.6, atol=1e-9)
    assert run.final.reflection_mass >= 0


def test_reference_constant_observer_and_wall():
    run = simulate_limit_reference(0.8, 1.0, 16, 1e-4, [StepField(np.ones(1))], 5,
                                   np.random.default_rng(2))
    assert np.allclose(run.records[:, 0], 0.8, atol=1e-12)
    assert run.final.u.cells.min() >= -1e-12
    assert run.diagnostics["max_mean_gap"] < 1e-9


def test_penalized_linear_regime_matches_mode_recursion():
    """Wall inactive: each cosine mode follows the exact linear recursion of the scheme."""
    M, q, c = 16, 1.0, 10.0
    eps = default_eps(M)
    dt = default_penalty_dt(M, eps)
    n_traj, n_steps = 2000, 400
    u0 = limit_paths(M, c, q, np.random.default_rng(3), n_traj)
    modes = list(range(1, M))
    run = penalized_ensemble(u0, q, n_steps * dt, dt, eps, [cosine_mode(k, M) for k in modes],
                             n_steps, generators(4, "lin", n_traj))
    assert run.diagnostics[:, 2].max() == 0  # no penalty mass
    W = penalized_weights([cosine_mode(k, M) for k in modes], M)
    for i, k in enumerate(modes):
        w = W[i]
        mu = 4 * math.sin(k * math.pi / (2 * M)) ** 2
        lam = M ** 4 / q * mu * mu
        a = 1 / (1 + dt * lam)
        s2 = 2 * dt * M ** 3 * mu * (w @ w) * a * a
        v = q / M * (w @ w) / mu
        for _ in range(n_steps):
            v = a * a * v + s2
        x = run.records[:, -1, i]
        assert abs(x.var() - v) < 4 * v * math.sqrt(2 / n_traj), k


def test_soft_wall_sampler_matches_weighting():
    """Rejection draws agree with importance weighting of unconditioned proposals."""
    M, c, q = 32, 0.5, 1.0
    eps = default_eps(M)
    u = sample_penalized_invariant(M, c, q, eps, np.random.default_rng(5), 40_000)
    prop = limit_paths(M, c, q, np.random.default_rng(6), 200_000)
    neg = np.minimum(prop, 0)
    wgt = np.exp(-np.sum(neg * neg, axis=1) / (2 * M * eps))
    x = mode_variance(prop, 1)
    m_w = np.sum(wgt * x) / wgt.sum()
    v_w = np.sum(wgt * (x - m_w) ** 2) / wgt.sum()
    y = mode_variance(u, 1)
    assert abs(y.var() - v_w) < 4 * v_w * math.sqrt(2 / y.size + 2 / 100_000)


def test_penalized_integrator_preserves_soft_wall_law():
    M, c, q = 64, 1.0, 1.0
    eps = default_eps(M)
    dt = default_penalty_dt(M, eps)
    n = 3000
    u0 = sample_penalized_invariant(M, c, q, eps, np.random.default_rng(7), n)
    run = penalized_ensemble(u0, q, 400 * dt, dt, eps, [cosine_mode(1, M), cosine_mode(2, M)],
                             400, generators(8, "pen", n))
    for i in range(2):
        ks = ks_two_sample(run.initial[:, i], run.records[:, -1, i])
        assert ks.statistic < ks.critical_1pct


def test_soft_wall_converges_to_hard_wall_in_eps():
    """The soft-wall mode variance approaches the hard-wall one as eps shrinks."""
    M, c, q = 64, 1.0, 1.0
    n = 100_000
    hard = mode_variance(sample_limit_invariant_batch(M, c, q, generator(9, "h", 0), n).sample, 1)
    vh = hard.var()
    devs = []
    for j, f in enumerate((1, 16, 256)):
        soft = sample_penalized_invariant(M, c, q, default_eps(M) / f, generator(9, "s", j), n)
        devs.append(mode_variance(soft, 1).var() / vh - 1)
    se = 2 * math.sqrt(2 / n)
    assert devs[0] > devs[1] + 2 * se
    assert devs[1] > devs[2]
    assert abs(devs[2]) < 0.05


def test_penalized_contact_declines_with_eps():
    M, c, q = 32, 0.4, 1.0
    out = []
    for f in (1, 16):
        eps = default_eps(M) / f
        dt = default_penalty_dt(M, eps)
        u0 = sample_penalized_invariant(M, c, q, eps, np.random.default_rng(10), 500)
        run = penalized_ensemble(u0, q, 200 * dt, dt, eps, [cosine_mode(1, M)], 200,
                                 generators(11, f"c{f}", 500))
        out.append(run.diagnostics[:, 3].max())
    assert out[1] < out[0] / 4


def test_eps_refinement_of_penalized_stationary_variance():
    """Stationary first-mode variance at eps and eps/4 agree within 2 SE."""
    M, c, q = 128, 1.0, 1.0
    n, steps = 20_000, 100
    res = []
    for f in (1, 4):
        eps = default_eps(M) / f
        dt = default_penalty_dt(M, eps)
        u0 = np.concatenate([sample_penalized_invariant(M, c, q, eps, generator(12, f"e{f}", b),
                                                        5000) for b in range(n // 5000)])
        run = penalized_ensemble(u0, q, steps * dt, dt, eps, [cosine_mode(1, M)], steps // 4,
                                 generators(13, f"e{f}", n))
        res.append(pooled_variance_se(run.records[:, :, 0]))
    (v1, s1), (v2, s2) = res
    assert abs(v1 - v2) < 2 * math.hypot(s1, s2), (v1, v2, s1, s2)


def test_reference_mesh_refinement_and_stationarity():
    c, q = 1.0, 1.0
    obs = [cosine_mode(1, 256)]
    out = {}
    for M in (128, 256):
        run = reference_ensemble(c, q, M, 1e-8, obs, 10, generators(14, f"m{M}", 2000))
        ks = ks_two_sample(run.initial[:, 0], run.records[:, -1, 0])
        assert ks.statistic < ks.critical_1pct
        out[M] = pooled_variance_se(run.records[:, :, 0])
    (v1, s1), (v2, s2) = out[128], out[256]
    assert abs(v1 - v2) < 4 * math.hypot(s1, s2)
