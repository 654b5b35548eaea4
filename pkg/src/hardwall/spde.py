"""Two discretizations of the reflected stochastic Cahn-Hilliard equation.

``u_t = -d^2/dtheta^2 [ (1/q) u'' + eta ] + sqrt(2) d/dtheta W'``,
Neumann boundary, ``u >= 0`` and ``eta`` a reflection measure supported
where ``u = 0``.

The reference integrator is the Gaussian microscopic dynamics on M sites,
rescaled.  The penalized integrator is a finite-difference scheme on M
cells with the wall replaced by ``eta = max(-u, 0)/eps``: the
bilaplacian is treated implicitly (banded Cholesky of a pentadiagonal
matrix), the penalty explicitly.

In cell units, with L the Neumann matrix ``sigma sigma^T``, the penalized
scheme reads

    (I + dt (M^4/q) L^2) u' = u + dt M^2 L eta(u) + sqrt(2 dt) M^{3/2} sigma xi.

The ``M^{3/2}`` noise amplitude is the one that makes the stationary
covariance of the linear part equal to ``(q/M) L^+``, the covariance of
the rescaled Gaussian Gibbs measure.  The continuous-time penalized
system is then reversible with respect to that Gaussian law tilted by
``exp(-sum(u^-)^2 / (2 M eps))``, which :func:`sample_penalized_invariant`
draws exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg

from .dynamics import (DIAG_COMPLEMENTARITY, DIAG_SUM_GAP, EnsembleResult, default_dt,
                       default_threads, n_steps_for, observer_weights, run_ensemble)
from .errors import (AcceptanceTooLowError, ConfigurationError, NumericalBlowupError,
                     NumericalError, ParameterError)
from .geometry import StepField, cell_weights
from .gibbs import DEFAULT_MAX_ATTEMPTS, limit_paths, sample_pnc_plus
from .lattice import laplacian_neumann
from .potential import make_gaussian


@dataclass
class LimitField:
    u: StepField
    c: float
    q: float
    t: float = 0.0
    reflection_mass: float = 0.0


@dataclass
class LimitRun:
    times: np.ndarray
    records: np.ndarray
    initial: np.ndarray
    final: LimitField
    diagnostics: dict


def _check(c, q, M, min_M):
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    if not q > 0:
        raise ParameterError(f"q must be positive, got {q}")
    if M < min_M:
        raise ParameterError(f"M must be >= {min_M}, got {M}")


# --------------------------------------------------------------------------
# reference: the Gaussian microscopic dynamics
# --------------------------------------------------------------------------

def simulate_limit_reference(c: float, q: float, M: int, macro_T: float, observers,
                             stride: int, rng: np.random.Generator,
                             dt: float | None = None) -> LimitRun:
    """One trajectory of the rescaled Gaussian(q) dynamics on M sites, started in equilibrium."""
    res = reference_ensemble(c, q, M, macro_T, observers, stride, [rng], dt=dt, threads=1)
    phi = res.final[0]
    u = StepField(phi / math.sqrt(M))
    d = res.diagnostics[0]
    return LimitRun(res.times, res.records[0], res.initial[0],
                    LimitField(u, c, q, res.times[-1] if res.times.size else macro_T,
                               float(res.local_time[0].sum()) / M ** 2.5),
                    {"max_mean_gap": float(d[DIAG_SUM_GAP]) / M ** 1.5,
                     "max_complementarity": float(d[DIAG_COMPLEMENTARITY])})


def reference_ensemble(c: float, q: float, M: int, macro_T: float, observers, stride: int,
                       rngs, dt: float | None = None, threads: int | None = None
                       ) -> EnsembleResult:
    """Equilibrium-started ensemble of the reference integrator.

    Each generator in ``rngs`` first draws its trajectory's initial state
    from the conditioned Gibbs measure, then drives its noise.
    """
    _check(c, q, M, 4)
    p = make_gaussian(q)
    dt = default_dt(p) if dt is None else dt
    rngs = list(rngs)
    phi0 = np.stack([sample_pnc_plus(M, c, p, g).sample for g in rngs])
    W = observer_weights(observers, M)
    n_steps = n_steps_for(M, macro_T, dt)
    return run_ensemble(phi0, c, p, n_steps, dt, W, stride, rngs, threads=threads)


# --------------------------------------------------------------------------
# penalized finite differences
# --------------------------------------------------------------------------

def penalty_dt_max(M: int, eps: float) -> float:
    """Explicit-penalty bound: dt M^2 |L| / eps <= 2 with |L| <= 4."""
    return eps / (2.0 * M * M)


def default_penalty_dt(M: int, eps: float) -> float:
    return eps / (4.0 * M * M)


def default_eps(M: int) -> float:
    return 1.0 / (M * M)


def bilaplacian_factor(M: int, q: float, dt: float) -> np.ndarray:
    """Lower banded Cholesky factor of ``I + dt (M^4/q) L^2``."""
    L = laplacian_neumann(np.eye(M))
    A = np.eye(M) + dt * M ** 4 / q * (L @ L)
    ab = np.zeros((3, M))
    for k in range(3):
        ab[k, : M - k] = np.diag(A, -k)
    try:
        return linalg.cholesky_banded(ab, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("bilaplacian factorization failed") from exc


@numba.njit(cache=True, nogil=True)
def banded_solve(cb, b, x):
    """Solve (C C^T) x = b for a lower banded factor C with two sub-diagonals."""
    n = b.shape[0]
    for j in range(n):
        v = b[j]
        if j >= 1:
            v -= cb[1, j - 1] * x[j - 1]
        if j >= 2:
            v -= cb[2, j - 2] * x[j - 2]
        x[j] = v / cb[0, j]
    for j in range(n - 1, -1, -1):
        v = x[j]
        if j + 1 < n:
            v -= cb[1, j] * x[j + 1]
        if j + 2 < n:
            v -= cb[2, j] * x[j + 2]
        x[j] = v / cb[0, j]


@numba.njit(cache=True, nogil=True)
def _penalized_one(rng, u, cb, dt, eps, noise, n_steps, stride, W, rec, diag):
    """Advance one penalized trajectory in place; returns the blow-up step or -1.

    diag: [max |sum u - sum u_0|, min u, reflection mass, largest per-step
    contact |sum_x u_x eta_x| dt / M].
    """
    M = u.shape[0]
    eta = np.zeros(M)
    xi = np.zeros(M)
    rhs = np.empty(M)
    amp = math.sqrt(2.0 * dt) * M ** 1.5 * noise
    pen = dt * M * M
    total0 = 0.0
    for x in range(M):
        total0 += u[x]
    gap = 0.0
    lo = np.inf
    mass = 0.0
    contact = 0.0
    r_i = 0
    n_obs = W.shape[0]
    for it in range(1, n_steps + 1):
        ue = 0.0
        for x in range(M):
            e = -u[x] / eps if u[x] < 0.0 else 0.0
            eta[x] = e
            mass += e * dt / M
            ue += u[x] * e
        if abs(ue) * dt / M > contact:
            contact = abs(ue) * dt / M
        for i in range(M - 1):
            xi[i] = rng.standard_normal()
        # rhs = u + pen L eta + amp sigma xi, with L eta = sigma sigma^T eta
        for x in range(M):
            le = 2.0 * eta[x]
            if x > 0:
                le -= eta[x - 1]
            else:
                le -= eta[x]
            if x < M - 1:
                le -= eta[x + 1]
            else:
                le -= eta[x]
            # xi[M-1] stays 0, so the last row reduces to xi[M-2]
            sx = -xi[0] if x == 0 else xi[x - 1] - xi[x]
            rhs[x] = u[x] + pen * le + amp * sx
        banded_solve(cb, rhs, u)
        tot = 0.0
        for x in range(M):
            tot += u[x]
            if u[x] < lo:
                lo = u[x]
        if not math.isfinite(tot):
            return it
        d = abs(tot - total0)
        if d > gap:
            gap = d
        if it % stride == 0 and r_i < rec.shape[0]:
            for k in range(n_obs):
                acc = 0.0
                for x in range(M):
                    acc += W[k, x] * u[x]
                rec[r_i, k] = acc
            r_i += 1
    diag[0] = gap
    diag[1] = lo
    diag[2] = mass
    diag[3] = contact
    return -1


def penalized_weights(observers, M: int) -> np.ndarray:
    """Rows w with <u, h>_{L^2} = w . u for an M-cell field u."""
    W = np.empty((len(observers), M))
    for i, h in enumerate(observers):
        W[i] = cell_weights(h, M)
    return W


def penalized_ensemble(u0: np.ndarray, q: float, macro_T: float, dt: float, eps: float,
                       observers, stride: int, rngs, threads: int | None = None,
                       noise: float = 1.0) -> EnsembleResult:
    """Run the penalized scheme from every row of ``u0`` (M-cell profiles)."""
    u = np.array(u0, dtype=float, ndmin=2, copy=True)
    n_traj, M = u.shape
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if dt > penalty_dt_max(M, eps) * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:g} violates the penalty bound "
                                 f"{penalty_dt_max(M, eps):g} for M={M}, eps={eps:g}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    n_steps = max(1, math.ceil(macro_T / dt - 1e-9))
    cb = bilaplacian_factor(M, q, dt)
    W = penalized_weights(observers, M)
    rngs = list(rngs)
    n_rec = n_steps // stride
    recs = np.zeros((n_traj, n_rec, W.shape[0]))
    diags = np.zeros((n_traj, 4))
    status = np.full(n_traj, -1, dtype=np.int64)
    initial = u @ W.T

    def work(j):
        status[j] = _penalized_one(rngs[j], u[j], cb, dt, eps, noise, n_steps, stride, W,
                                   recs[j], diags[j])

    threads = threads or default_threads()
    if threads == 1:
        for j in range(n_traj):
            work(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(n_traj)))
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        raise NumericalBlowupError(int(status[bad[0]]))
    times = np.arange(1, n_rec + 1) * stride * dt
    return EnsembleResult(times, initial, recs, u, np.zeros((n_traj, M)), diags, n_steps, dt)


def simulate_limit_penalized(c: float, q: float, M: int, macro_T: float, dt: float | None,
                             eps: float | None, observers, stride: int,
                             rng: np.random.Generator, initial: np.ndarray | None = None
                             ) -> LimitRun:
    """One penalized trajectory; by default started from its exact invariant law."""
    _check(c, q, M, 4)
    eps = default_eps(M) if eps is None else eps
    dt = default_penalty_dt(M, eps) if dt is None else dt
    if initial is None:
        initial = sample_penalized_invariant(M, c, q, eps, rng, 1)[0]
    res = penalized_ensemble(initial[None, :], q, macro_T, dt, eps, observers, stride,
                             [rng], threads=1)
    d = res.diagnostics[0]
    final = LimitField(StepField(res.final[0]), c, q, res.n_steps * dt, float(d[2]))
    return LimitRun(res.times, res.records[0], res.initial[0], final,
                    {"max_mean_gap": float(d[0]) / M, "min_u": float(d[1]),
                     "contact": float(d[3])})


def sample_penalized_invariant(M: int, c: float, q: float, eps: float,
                               rng: np.random.Generator, count: int,
                               max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> np.ndarray:
    """Exact draws from the soft-wall law ``Gaussian x exp(-sum(u^-)^2/(2 M eps))``.

    Proposals are unconditioned rescaled Gaussian profiles; a proposal is
    kept with probability ``exp(-sum(u^-)^2/(2 M eps))``.
    """
    _check(c, q, M, 2)
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    kept = []
    got = 0
    attempts = 0
    while got < count:
        if attempts >= max_attempts:
            raise AcceptanceTooLowError(attempts)
        k = min(4096, max_attempts - attempts)
        u = limit_paths(M, c, q, rng, k)
        neg = np.minimum(u, 0.0)
        logw = -np.sum(neg * neg, axis=1) / (2.0 * M * eps)
        ok = rng.random(k) < np.exp(logw)
        attempts += k
        good = u[ok][: count - got]
        kept.append(good)
        got += good.shape[0]
    return np.concatenate(kept, axis=0)
