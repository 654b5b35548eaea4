"""Projected Euler-Maruyama integration of the reflected conservative dynamics.

One step is

    phi_hat = phi - dt sigma sigma^T sigma V'(sigma^T phi) + sqrt(2 dt) sigma xi
    phi     = projection of phi_hat onto {phi >= 0, sum phi = c N^{3/2}}

with the projection taken in the V_N metric.  Its KKT multipliers are the
local-time increments, so ``phi = phi_hat + sigma sigma^T dl``.

Ensembles run in a compiled kernel that releases the GIL; each trajectory
owns its own generator, so the output does not depend on how trajectories
are spread over threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, NumericalBlowupError, ParameterError
from .geometry import StepField, cell_weights
from .lattice import apply_sigma, constraint_total, drift, project_kernel, project_onto_constraint
from .potential import ConvexPotential

# diagnostics columns
DIAG_SUM_GAP = 0
DIAG_MIN_PHI = 1
DIAG_COMPLEMENTARITY = 2
DIAG_LOCAL_TIME = 3
N_DIAG = 4


def dt_max(p: ConvexPotential) -> float:
    """Largest stable explicit step: the linearized drift has spectral radius <= 16 sup V''."""
    return 1.0 / (8.0 * p.sup_deriv2)


def default_dt(p: ConvexPotential) -> float:
    return 1.0 / (20.0 * p.sup_deriv2)


def check_dt(dt: float, p: ConvexPotential) -> None:
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if dt > dt_max(p) * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:g} exceeds the stability bound {dt_max(p):g}")


@dataclass
class MicroState:
    phi: np.ndarray
    c: float
    t: float = 0.0
    local_time: np.ndarray | None = None
    step_count: int = 0

    def __post_init__(self):
        self.phi = np.array(self.phi, dtype=float)
        if self.local_time is None:
            self.local_time = np.zeros_like(self.phi)

    @property
    def N(self) -> int:
        return self.phi.size


def flat_state(N: int, c: float) -> MicroState:
    return MicroState(np.full(N, c * math.sqrt(N)), c)


def rescale(phi) -> StepField:
    """Macroscopic profile: cell x carries phi(x)/sqrt(N)."""
    phi = np.asarray(phi, dtype=float)
    return StepField(phi / math.sqrt(phi.size))


def observer_weights(observers, N: int) -> np.ndarray:
    """Rows w with <rescale(phi), h>_{L^2} = w . phi."""
    W = np.empty((len(observers), N))
    for i, h in enumerate(observers):
        W[i] = cell_weights(h, N) / math.sqrt(N)
    return W


def step(s: MicroState, dt: float, p: ConvexPotential, rng: np.random.Generator,
         noise: float = 1.0) -> MicroState:
    """One projected Euler-Maruyama step (reference implementation)."""
    check_dt(dt, p)
    N = s.N
    xi = np.zeros(N)
    xi[:-1] = rng.standard_normal(N - 1) * noise
    phi_hat = s.phi + dt * drift(s.phi, p) + math.sqrt(2.0 * dt) * apply_sigma(xi)
    if not np.all(np.isfinite(phi_hat)):
        raise NumericalBlowupError(s.step_count + 1)
    # re-anchor the sum: the predictor conserves it up to rounding
    phi_hat[-1] += constraint_total(N, s.c) - phi_hat.sum()
    res = project_onto_constraint(phi_hat, s.c)
    return MicroState(res.projected, s.c, s.t + dt, s.local_time + res.multipliers,
                      s.step_count + 1)


# --------------------------------------------------------------------------
# compiled integrator
# --------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True, inline="always")
def _vprime(r, kind, x0, h, tab):
    if kind == 0:
        return r * tab[0]
    pos = (r - x0) / h
    j = int(math.floor(pos))
    if j < 0:
        j = 0
    elif j > tab.shape[0] - 2:
        j = tab.shape[0] - 2
    return tab[j] + (pos - j) * (tab[j + 1] - tab[j])


@numba.njit(cache=True, nogil=True)
def _run_one(rng, phi, lt, target, dt, noise, kind, x0, h, tab, n_steps, stride, W,
             rec, diag):
    """Advance one trajectory in place; returns the blow-up step or -1."""
    n = phi.shape[0]
    f = np.zeros(n)
    g = np.empty(n)
    hh = np.empty(n)
    xi = np.zeros(n)
    phat = np.empty(n)
    lam = np.empty(n)
    s1 = np.empty(n)
    s2 = np.empty(n)
    s3 = np.empty(n)
    cnt = np.empty(n, dtype=np.int64)
    amp = math.sqrt(2.0 * dt) * noise
    n_obs = W.shape[0]
    gap = 0.0
    lo = np.inf
    comp_max = 0.0
    r_i = 0
    for it in range(1, n_steps + 1):
        if n > 1:
            for i in range(n - 1):
                f[i] = _vprime(phi[i + 1] - phi[i], kind, x0, h, tab)
                xi[i] = rng.standard_normal()
            f[n - 1] = 0.0
            # g = sigma f
            g[0] = -f[0]
            for x in range(1, n - 1):
                g[x] = f[x - 1] - f[x]
            g[n - 1] = f[n - 2]
            # hh = sigma^T g
            for i in range(n - 1):
                hh[i] = g[i + 1] - g[i]
            hh[n - 1] = 0.0
            # phat = phi - dt sigma hh + amp sigma xi
            phat[0] = phi[0] + dt * hh[0] - amp * xi[0]
            for x in range(1, n - 1):
                phat[x] = phi[x] - dt * (hh[x - 1] - hh[x]) + amp * (xi[x - 1] - xi[x])
            phat[n - 1] = phi[n - 1] - dt * hh[n - 2] + amp * xi[n - 2]
        else:
            phat[0] = phi[0]
        tot = 0.0
        for x in range(n):
            tot += phat[x]
        if not math.isfinite(tot):
            diag[DIAG_SUM_GAP] = gap
            diag[DIAG_MIN_PHI] = lo
            diag[DIAG_COMPLEMENTARITY] = comp_max
            return it
        phat[n - 1] += target - tot
        feasible = True
        for x in range(n):
            if phat[x] < 0.0:
                feasible = False
                break
        if feasible:
            # a feasible predictor is its own projection
            for x in range(n):
                phi[x] = phat[x]
                lam[x] = 0.0
        else:
            comp = project_kernel(phat, target, phi, lam, s1, s2, s3, cnt)
            if comp > comp_max:
                comp_max = comp
        tot = 0.0
        for x in range(n):
            tot += phi[x]
            lt[x] += lam[x]
            if phi[x] < lo:
                lo = phi[x]
        d = abs(tot - target)
        if d > gap:
            gap = d
        if stride > 0 and it % stride == 0 and r_i < rec.shape[0]:
            for k in range(n_obs):
                acc = 0.0
                for x in range(n):
                    acc += W[k, x] * phi[x]
                rec[r_i, k] = acc
            r_i += 1
    diag[DIAG_SUM_GAP] = gap
    diag[DIAG_MIN_PHI] = lo
    diag[DIAG_COMPLEMENTARITY] = comp_max
    total = 0.0
    for x in range(n):
        total += lt[x]
    diag[DIAG_LOCAL_TIME] = total
    return -1


def default_threads() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else (os.cpu_count() or 1))


@dataclass
class EnsembleResult:
    """Output of :func:`run_ensemble`.

    ``records[j, r, k]`` is observer k of trajectory j after ``(r+1)*stride``
    steps, at macroscopic time ``times[r]``; ``initial[j, k]`` is the same
    observable at time 0.
    """

    times: np.ndarray
    initial: np.ndarray
    records: np.ndarray
    final: np.ndarray
    local_time: np.ndarray
    diagnostics: np.ndarray
    n_steps: int
    dt: float


def n_steps_for(N: int, macro_T: float, dt: float) -> int:
    if not macro_T > 0:
        raise ParameterError(f"macro_T must be positive, got {macro_T}")
    return max(1, math.ceil(N ** 4 * macro_T / dt - 1e-9))


def run_ensemble(phi0: np.ndarray, c: float, p: ConvexPotential, n_steps: int, dt: float,
                 W: np.ndarray, stride: int, rngs, threads: int | None = None,
                 noise: float = 1.0) -> EnsembleResult:
    """Integrate every row of ``phi0`` for ``n_steps`` steps.

    Trajectory j draws its noise from ``rngs[j]`` (a numpy Generator).
    """
    check_dt(dt, p)
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    phis = np.array(phi0, dtype=float, ndmin=2, copy=True)
    n_traj, N = phis.shape
    W = np.ascontiguousarray(W, dtype=float)
    if W.shape[1] != N:
        raise ParameterError("observer weights do not match N")
    rngs = list(rngs)
    if len(rngs) != n_traj:
        raise ParameterError("need one generator per trajectory")
    target = constraint_total(N, c)
    kind, x0, h, tab = p.kernel_params()
    n_rec = n_steps // stride
    recs = np.zeros((n_traj, n_rec, W.shape[0]))
    lts = np.zeros((n_traj, N))
    diags = np.zeros((n_traj, N_DIAG))
    status = np.full(n_traj, -1, dtype=np.int64)
    initial = phis @ W.T

    def work(j):
        status[j] = _run_one(rngs[j], phis[j], lts[j], target, dt, noise, kind, x0, h, tab,
                             n_steps, stride, W, recs[j], diags[j])

    threads = threads or default_threads()
    if threads == 1:
        for j in range(n_traj):
            work(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n_traj)))
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        raise NumericalBlowupError(int(status[bad[0]]),
                                   f"trajectory {int(bad[0])} blew up at step {int(status[bad[0]])}")
    times = (np.arange(1, n_rec + 1) * stride * dt) / N ** 4
    return EnsembleResult(times, initial, recs, phis, lts, diags, n_steps, dt)


@dataclass
class SimulationResult:
    times: np.ndarray
    records: np.ndarray
    initial: np.ndarray
    final: MicroState
    diagnostics: dict = field(default_factory=dict)


def simulate(initial: MicroState, macro_T: float, dt: float, p: ConvexPotential,
             observers, stride: int, rng: np.random.Generator,
             noise: float = 1.0) -> SimulationResult:
    """Run ``ceil(N^4 macro_T / dt)`` steps, recording observers every ``stride`` steps.

    Returns ``floor(steps/stride)`` records of ``<rescale(phi), h>`` with
    macroscopic timestamps (microscopic time divided by N^4).
    """
    N = initial.N
    n_steps = n_steps_for(N, macro_T, dt)
    W = observer_weights(observers, N)
    res = run_ensemble(initial.phi[None, :], initial.c, p, n_steps, dt, W, stride, [rng],
                       threads=1, noise=noise)
    final = MicroState(res.final[0], initial.c, initial.t + n_steps * dt,
                       initial.local_time + res.local_time[0], initial.step_count + n_steps)
    d = res.diagnostics[0]
    diag = {"max_sum_gap": float(d[DIAG_SUM_GAP]), "min_phi": float(d[DIAG_MIN_PHI]),
            "max_complementarity": float(d[DIAG_COMPLEMENTARITY])}
    return SimulationResult(initial.t / N ** 4 + res.times, res.records[0], res.initial[0],
                            final, diag)
