"""The acceptance suites.

Each ``run_*`` function returns a :class:`SuiteResult`: summary records
plus a table (fixed header, one row per line) destined for the suite's
CSV file.  All randomness comes from counter-derived streams keyed by
the master seed, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import streams
from ..dynamics import (DIAG_COMPLEMENTARITY, DIAG_MIN_PHI, DIAG_SUM_GAP, default_dt,
                        n_steps_for, observer_weights, run_ensemble)
from ..errors import AcceptanceTooLowError, BudgetError
from ..geometry import (StepField, check_est0, cosine_mode, h_norm_sq, hn_norm_sq,
                        project_PiN)
from ..gibbs import sample_limit_invariant_batch, sample_pnc_plus, sample_pnc_plus_batch
from ..potential import from_name, make_gaussian
from ..spde import (default_eps, default_penalty_dt, penalized_ensemble, reference_ensemble,
                    sample_penalized_invariant)
from .config import ExperimentConfig
from .stats import (TOLERANCES, Tolerance, cross_cov_asymmetry, ks_two_sample, mean_se,
                    pooled_variance_se, ratio_dev, record, variance_se)

FINE_CELLS = 4096
_BLOCK = 5000


@dataclass
class SuiteResult:
    suite: str
    header: list
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


def potential_of(cfg: ExperimentConfig):
    return from_name(cfg.potential, cfg.variance, cfg.coefficient)


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def random_fields(rng: np.random.Generator, count: int, N: int, zero_mean: bool) -> np.ndarray:
    """A mix of white-noise cells, random walks, spikes and alternating patterns."""
    out = np.empty((count, N))
    kind = np.arange(count) % 4
    for j in range(count):
        k = kind[j]
        if k == 0:
            h = rng.standard_normal(N)
        elif k == 1:
            h = np.cumsum(rng.standard_normal(N))
        elif k == 2:
            h = np.zeros(N)
            h[rng.integers(N)] = rng.standard_normal() * N
            h += 0.01 * rng.standard_normal(N)
        else:
            h = (-1.0) ** np.arange(N) * rng.uniform(0.5, 2.0) + 0.1 * rng.standard_normal(N)
        h *= math.exp(rng.uniform(-3, 3))
        out[j] = h
    if zero_mean:
        out -= out.mean(axis=1, keepdims=True)
    return out


def run_geometry_audit(cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("geometry", ["N", "max_est0_gap", "min_ratio", "max_ratio",
                                   "pin_norm_error"])
    smooth = cosine_mode(1, FINE_CELLS)
    smooth = StepField(smooth.cells - smooth.cells.mean())
    smooth_norm = math.sqrt(h_norm_sq(smooth))
    errors = {}
    for N in cfg.N_list:
        rng = streams.generator(cfg.master_seed, "geometry", N)
        h = random_fields(rng, 100, N, zero_mean=False)
        lhs, rhs = check_est0(h)
        gap = float(np.max(np.abs(lhs - rhs) / (1.0 + np.abs(lhs))))
        if N > 1:
            z = random_fields(rng, cfg.samples, N, zero_mean=True)
            ratio = h_norm_sq(z) / hn_norm_sq(z)
            lo, hi = float(ratio.min()), float(ratio.max())
        else:
            lo = hi = float("nan")  # H_1^0 = {0}
        if FINE_CELLS % N == 0:
            pin = project_PiN(smooth, N)
            err = abs(math.sqrt(hn_norm_sq(pin)) - smooth_norm)
        else:
            err = float("nan")
        errors[N] = err
        res.rows.append([N, gap, lo, hi, err])
        p = {"N": N}
        res.records.append(record("geometry", p, "est0_rel_gap", gap, 0.0,
                                  TOLERANCES["est0_rel_gap"]))
        if N > 1:
            res.records.append(record("geometry", p, "min_norm_ratio", lo, 0.0,
                                      TOLERANCES["min_norm_ratio"]))
            res.records.append(record("geometry", p, "max_norm_ratio", hi, 0.0,
                                      TOLERANCES["max_norm_ratio"]))
    finite = [n for n in cfg.N_list if n >= 16 and math.isfinite(errors[n])]
    if 16 in finite and max(finite) > 16:
        top = max(finite)
        ratio = errors[top] / errors[16] if errors[16] > 0 else 0.0
        res.records.append(record("geometry", {"N": top, "N_ref": 16}, "pin_error_decay",
                                  ratio, 0.0, TOLERANCES["pin_error_decay"]))
    return res


# --------------------------------------------------------------------------
# invariant measures
# --------------------------------------------------------------------------

def _clean(x: np.ndarray) -> np.ndarray:
    # drop last-bit rounding so that exactly conserved observables compare equal
    return np.round(x, 12)


def gibbs_observables(N: int, c: float, p, modes, count: int, seed: int, tag: str) -> np.ndarray:
    """``<rescale(phi), h_k>`` for ``count`` conditioned Gibbs draws, in blocks."""
    W = observer_weights([cosine_mode(k, N) for k in modes], N)
    out = []
    for b, lo in enumerate(range(0, count, _BLOCK)):
        rng = streams.generator(seed, tag, b)
        try:
            rows = sample_pnc_plus_batch(N, c, p, rng, min(_BLOCK, count - lo)).sample
        except AcceptanceTooLowError as exc:
            raise AcceptanceTooLowError(exc.attempts, f"(N={N}, c={c}): {exc}") from exc
        out.append(rows @ W.T)
    return _clean(np.concatenate(out))


def limit_observables(M: int, c: float, q: float, modes, count: int, seed: int,
                      tag: str) -> np.ndarray:
    """``<Y, h_k>`` for ``count`` draws of the conditioned limit profile on M cells."""
    W = np.stack([cosine_mode(k, M).cells / M for k in modes])
    out = []
    for b, lo in enumerate(range(0, count, _BLOCK)):
        rng = streams.generator(seed, tag, b)
        try:
            rows = sample_limit_invariant_batch(M, c, q, rng, min(_BLOCK, count - lo)).sample
        except AcceptanceTooLowError as exc:
            raise AcceptanceTooLowError(exc.attempts, f"(M={M}, c={c}): {exc}") from exc
        out.append(rows @ W.T)
    return _clean(np.concatenate(out))


def run_invariant_measures(cfg: ExperimentConfig) -> SuiteResult:
    res = SuiteResult("invariant-measures", ["N", "mode", "ks", "ks_se", "ks_critical",
                                             "mean_diff", "mean_diff_se", "var_diff",
                                             "var_diff_se"])
    p = potential_of(cfg)
    modes = cfg.observers
    ref = limit_observables(cfg.M, cfg.c, p.q, modes, cfg.samples, cfg.master_seed, "limit")
    ks_by = {}
    for N in cfg.N_list:
        obs = gibbs_observables(N, cfg.c, p, modes, cfg.samples, cfg.master_seed, f"gibbs-{N}")
        for i, k in enumerate(modes):
            a, b = obs[:, i], ref[:, i]
            ks = ks_two_sample(a, b)
            ma, sa = mean_se(a)
            mb, sb = mean_se(b)
            va, sva = variance_se(a)
            vb, svb = variance_se(b)
            row = [N, k, ks.statistic, ks.se, ks.critical_1pct, ma - mb, math.hypot(sa, sb),
                   va - vb, math.hypot(sva, svb)]
            res.rows.append(row)
            ks_by[(N, k)] = ks
            if N == max(cfg.N_list):
                res.records.append(record("invariant-measures", {"N": N, "M": cfg.M, "mode": k},
                                          "measure_ks", ks.statistic, 0.0,
                                          TOLERANCES["measure_ks"]))
    Ns = list(cfg.N_list)
    for k in modes:
        for n0, n1 in zip(Ns, Ns[1:]):
            a, b = ks_by[(n0, k)], ks_by[(n1, k)]
            res.records.append(record("invariant-measures", {"N": n1, "N_prev": n0, "mode": k},
                                      "measure_ks_trend", b.statistic - a.statistic,
                                      math.hypot(a.se, b.se), TOLERANCES["measure_ks_trend"]))
    return res


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------

def equilibrium_ensemble(N: int, c: float, p, count: int, seed: int, tag: str):
    """Per-trajectory generators and conditioned Gibbs initial states."""
    rngs = streams.generators(seed, tag, count)
    phi0 = np.stack([sample_pnc_plus(N, c, p, g).sample for g in rngs])
    return rngs, phi0


def _stride(n_steps: int, records: int) -> int:
    return max(1, n_steps // records)


def run_dynamics_suite(cfg: ExperimentConfig, threads: int | None = None) -> SuiteResult:
    res = SuiteResult("dynamics", ["N", "statistic", "mode", "mode2", "time", "value", "se",
                                   "bound"])
    p = potential_of(cfg)
    modes = cfg.observers
    for N in cfg.N_list:
        dt = cfg.dt or default_dt(p)
        n_steps = n_steps_for(N, cfg.macro_T, dt)
        stride = _stride(n_steps, cfg.records)
        rngs, phi0 = equilibrium_ensemble(N, cfg.c, p, cfg.ensemble, cfg.master_seed,
                                          f"dynamics-{N}")
        W = observer_weights([cosine_mode(k, N) for k in modes], N)
        run = run_ensemble(phi0, cfg.c, p, n_steps, dt, W, stride, rngs, threads=threads)
        par = {"N": N, "c": cfg.c, "macro_T": cfg.macro_T, "dt": dt,
               "ensemble": cfg.ensemble}
        t_end = float(run.times[-1])
        x0 = _clean(run.initial)
        xt = _clean(run.records[:, -1, :])
        for i, k in enumerate(modes):
            ks = ks_two_sample(x0[:, i], xt[:, i])
            res.rows.append([N, "stationarity_ks", k, "", t_end, ks.statistic, ks.se,
                             ks.critical_1pct])
            tol = Tolerance("le", ks.critical_1pct)
            res.records.append(record("dynamics", {**par, "mode": k}, "stationarity_ks",
                                      ks.statistic, 0.0, tol))
        lag = len(run.times) // 2
        t_lag = float(run.times[lag])
        for i in range(len(modes)):
            for j in range(i + 1, len(modes)):
                val, se = cross_cov_asymmetry(run.initial[:, i], run.records[:, lag, i],
                                              run.initial[:, j], run.records[:, lag, j])
                res.rows.append([N, "reversibility", modes[i], modes[j], t_lag, val, se,
                                 4.0 * se])
                res.records.append(record("dynamics", {**par, "mode": modes[i],
                                                       "mode2": modes[j], "time": t_lag},
                                          "reversibility", val, se,
                                          TOLERANCES["reversibility"]))
        d = run.diagnostics
        gap = float(d[:, DIAG_SUM_GAP].max()) / N
        low = float(d[:, DIAG_MIN_PHI].min())
        comp = float(d[:, DIAG_COMPLEMENTARITY].max()) / N
        for name, val in (("conservation", gap), ("wall", low), ("complementarity", comp)):
            res.rows.append([N, name, "", "", t_end, val, 0.0, TOLERANCES[name].bound])
            res.records.append(record("dynamics", par, name, val, 0.0, TOLERANCES[name]))
    return res


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------

def sweep_cost(cfg: ExperimentConfig, p) -> float:
    """Microscopic site-steps of a convergence sweep (trajectories x sites x steps)."""
    dt = cfg.dt or default_dt(p)
    total = sum(cfg.ensemble * N * n_steps_for(N, cfg.macro_T, dt) for N in cfg.N_list)
    ref_T = cfg.ref_macro_T or cfg.macro_T
    dt_ref = default_dt(make_gaussian(p.q))
    return total + cfg.ensemble * cfg.M * n_steps_for(cfg.M, ref_T, dt_ref)


def _correlations(run, i) -> list:
    x0 = run.initial[:, i]
    return [float(np.mean((x0 - x0.mean()) * (run.records[:, r, i] - run.records[:, r, i].mean())))
            for r in range(run.records.shape[1])]


def run_convergence_sweep(cfg: ExperimentConfig, threads: int | None = None) -> SuiteResult:
    res = SuiteResult("convergence", ["N", "mode", "statistic", "time", "value", "se"])
    p = potential_of(cfg)
    cost = sweep_cost(cfg, p)
    if cost > cfg.step_budget:
        raise BudgetError(f"convergence sweep needs {cost:.3g} site-steps, "
                          f"budget is {cfg.step_budget:.3g}")
    modes = cfg.observers
    observers = [cosine_mode(k, cfg.M) for k in modes]
    ref_T = cfg.ref_macro_T or cfg.macro_T
    ref_rngs = streams.generators(cfg.master_seed, f"reference-{cfg.M}", cfg.ensemble)
    dt_ref = default_dt(make_gaussian(p.q))
    ref = reference_ensemble(cfg.c, p.q, cfg.M, ref_T, observers,
                             _stride(n_steps_for(cfg.M, ref_T, dt_ref), cfg.records),
                             ref_rngs, threads=threads)
    ref_var = {}
    for i, k in enumerate(modes):
        v, se = pooled_variance_se(ref.records[:, :, i])
        ref_var[k] = (v, se)
        res.rows.append([cfg.M, k, "reference_variance", "", v, se])
    devs = {}
    for N in cfg.N_list:
        dt = cfg.dt or default_dt(p)
        n_steps = n_steps_for(N, cfg.macro_T, dt)
        rngs, phi0 = equilibrium_ensemble(N, cfg.c, p, cfg.ensemble, cfg.master_seed,
                                          f"convergence-{N}")
        W = observer_weights([cosine_mode(k, N) for k in modes], N)
        run = run_ensemble(phi0, cfg.c, p, n_steps, dt, W, _stride(n_steps, cfg.records),
                           rngs, threads=threads)
        for i, k in enumerate(modes):
            for t, cval in zip(run.times, _correlations(run, i)):
                res.rows.append([N, k, "correlation", float(t), cval, ""])
            par = {"N": N, "M": cfg.M, "mode": k, "c": cfg.c}
            if k == 0:
                worst = max(abs(v) for v in _correlations(run, i))
                res.records.append(record("convergence", par, "zero_mode_covariance", worst,
                                          0.0, TOLERANCES["zero_mode_covariance"]))
                continue
            v, se = pooled_variance_se(run.records[:, :, i])
            dev, dse = ratio_dev(v, se, *ref_var[k])
            devs[(N, k)] = (dev, dse)
            res.rows.append([N, k, "variance", "", v, se])
            res.rows.append([N, k, "relative_deviation", "", dev, dse])
    Ns = list(cfg.N_list)
    for k in modes:
        if k == 0:
            continue
        top = Ns[-1]
        dev, dse = devs[(top, k)]
        res.records.append(record("convergence", {"N": top, "M": cfg.M, "mode": k},
                                  "variance_rel_dev", dev, dse, TOLERANCES["variance_rel_dev"]))
        d0, s0 = devs[(Ns[0], k)]
        for N in Ns[1:]:
            d1, s1 = devs[(N, k)]
            res.records.append(record("convergence", {"N": N, "N_ref": Ns[0], "mode": k},
                                      "deviation_trend", abs(d0) - abs(d1), math.hypot(s0, s1),
                                      TOLERANCES["deviation_trend"]))
    return res


# --------------------------------------------------------------------------
# penalized versus reference integrator
# --------------------------------------------------------------------------

def run_cross_integrator(c: float, q: float, M: int, ensemble: int, master_seed: int,
                         eps: float | None = None, ref_macro_T: float = 1e-8,
                         pen_steps: int = 1000, modes=(1, 2), records: int = 4,
                         threads: int | None = None) -> SuiteResult:
    """Stationary mode variances of the reference and penalized integrators at mesh M.

    Both start from their own exact invariant law (hard wall for the
    reference, soft wall for the penalized scheme) and are pooled over
    records at positive times.
    """
    res = SuiteResult("cross-integrator", ["mode", "integrator", "variance", "se"])
    eps = default_eps(M) if eps is None else eps
    observers = [cosine_mode(k, M) for k in modes]
    dt_ref = default_dt(make_gaussian(q))
    ref_rngs = streams.generators(master_seed, f"xref-{M}", ensemble)
    ref = reference_ensemble(c, q, M, ref_macro_T, observers,
                             _stride(n_steps_for(M, ref_macro_T, dt_ref), records), ref_rngs,
                             threads=threads)
    dt = default_penalty_dt(M, eps)
    u0 = np.concatenate([
        sample_penalized_invariant(M, c, q, eps, streams.generator(master_seed, "xpen-init", b),
                                   min(_BLOCK, ensemble - lo))
        for b, lo in enumerate(range(0, ensemble, _BLOCK))])
    pen_rngs = streams.generators(master_seed, f"xpen-{M}", ensemble)
    pen = penalized_ensemble(u0, q, pen_steps * dt, dt, eps, observers,
                             max(1, pen_steps // records), pen_rngs, threads=threads)
    for i, k in enumerate(modes):
        vr, sr = pooled_variance_se(ref.records[:, :, i])
        vp, sp = pooled_variance_se(pen.records[:, :, i])
        res.rows.append([k, "reference", vr, sr])
        res.rows.append([k, "penalized", vp, sp])
        dev, dse = ratio_dev(vp, sp, vr, sr)
        res.records.append(record("cross-integrator", {"M": M, "mode": k, "eps": eps, "c": c,
                                                       "q": q, "ensemble": ensemble},
                                  "cross_integrator_rel_dev", dev, dse,
                                  TOLERANCES["cross_integrator_rel_dev"]))
    return res


SUITE_RUNNERS = {
    "geometry": lambda cfg, threads=None: run_geometry_audit(cfg),
    "invariant-measures": lambda cfg, threads=None: run_invariant_measures(cfg),
    "dynamics": run_dynamics_suite,
    "convergence": run_convergence_sweep,
}
