"""Difference operators, Hamiltonian, V_N geometry and the Skorohod projection.

Lattice vectors are plain 1-D numpy arrays of length N (heights or
increments).  The stencil functions also accept stacked arrays and act
along the last axis.

The operators follow the matrix conventions

    sigma^T phi = (phi_2 - phi_1, ..., phi_N - phi_{N-1}, 0)
    sigma r     = (-r_1, r_1 - r_2, ..., r_{N-2} - r_{N-1}, r_{N-1})

so that ``sigma sigma^T`` is the (positive semidefinite) Neumann
second-difference matrix and ``sigma^T 1 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError, ParameterError


def apply_sigma_t(phi):
    phi = np.asarray(phi, dtype=float)
    out = np.zeros_like(phi)
    out[..., :-1] = np.diff(phi, axis=-1)
    return out


def apply_sigma(r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    n = r.shape[-1]
    if n == 1:
        out[...] = 0.0
        return out
    out[..., 0] = -r[..., 0]
    out[..., 1:-1] = r[..., :-2] - r[..., 1:-1]
    out[..., -1] = r[..., -2]
    return out


def laplacian_neumann(phi):
    """``sigma sigma^T phi``: minus the Neumann second difference."""
    return apply_sigma(apply_sigma_t(phi))


def drift(phi, p):
    """Deterministic part of the conservative dynamics, ``-sigma sigma^T sigma V'(sigma^T phi)``.

    The last component of ``sigma^T phi`` is identically zero and is
    annihilated by ``sigma``, so ``V'(0)`` never contributes.
    """
    grad = apply_sigma_t(phi)
    force = np.asarray(p.deriv(grad), dtype=float)
    force[..., -1] = 0.0
    return -apply_sigma(apply_sigma_t(apply_sigma(force)))


def hamiltonian(phi, p):
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] < 2:
        return np.zeros(phi.shape[:-1]) if phi.ndim > 1 else 0.0
    return np.sum(p.value(np.diff(phi, axis=-1)), axis=-1)


def _check_zero_sum(v):
    n = v.shape[-1]
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    if np.any(np.abs(np.sum(v, axis=-1)) > 1e-9 * n * scale):
        raise DomainError("V_N norm requires a zero-sum vector")


def vn_norm_sq(v):
    """Squared V_N norm: sum over i < N of the squared partial sums of ``v``.

    This is the Brownian-representation form E[<v, D>^2]; ``v`` must sum
    to zero.
    """
    v = np.asarray(v, dtype=float)
    _check_zero_sum(v)
    partial = np.cumsum(v, axis=-1)[..., :-1]
    return np.sum(partial * partial, axis=-1)


def vn_inner(v, w):
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_zero_sum(v)
    _check_zero_sum(w)
    pv = np.cumsum(v, axis=-1)[..., :-1]
    pw = np.cumsum(w, axis=-1)[..., :-1]
    return np.sum(pv * pw, axis=-1)


# --------------------------------------------------------------------------
# Bounded isotonic regression (pool adjacent violators + clipping)
# --------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def pava_clip(y, upper, out, sums, counts):
    """Least-squares non-decreasing fit of ``y`` clipped to ``[0, upper]``.

    ``sums`` and ``counts`` are scratch buffers of length ``len(y)``.
    Pooled blocks take the mean of their targets.
    """
    n = y.shape[0]
    k = -1
    for i in range(n):
        k += 1
        sums[k] = y[i]
        counts[k] = 1
        while k > 0 and sums[k - 1] * counts[k] > sums[k] * counts[k - 1]:
            sums[k - 1] += sums[k]
            counts[k - 1] += counts[k]
            k -= 1
    idx = 0
    for b in range(k + 1):
        v = sums[b] / counts[b]
        if v < 0.0:
            v = 0.0
        elif v > upper:
            v = upper
        for _ in range(counts[b]):
            out[idx] = v
            idx += 1


@numba.njit(cache=True, nogil=True)
def project_kernel(phi_hat, target, psi, lam, partial, fit, sums, counts):
    """Project ``phi_hat`` onto {psi >= 0, sum psi = target} in the V_N metric.

    Writes the projection into ``psi`` and the KKT multipliers into
    ``lam``; ``partial``, ``fit``, ``sums`` and ``counts`` are scratch
    buffers of length N.  Returns the complementarity sum
    ``sum(psi * lam)``.
    """
    n = phi_hat.shape[0]
    if n == 1:
        psi[0] = target
        lam[0] = 0.0
        return 0.0
    acc = 0.0
    for i in range(n - 1):
        acc += phi_hat[i]
        partial[i] = acc
    pava_clip(partial[: n - 1], target, fit, sums, counts)
    prev = 0.0
    for i in range(n - 1):
        psi[i] = fit[i] - prev
        prev = fit[i]
    psi[n - 1] = target - prev
    # psi - phi_hat = sigma sigma^T lam, i.e. fit_i - partial_i = lam_i - lam_{i+1}
    lam[0] = 0.0
    lo = 0.0
    for x in range(1, n):
        lam[x] = lam[x - 1] - (fit[x - 1] - partial[x - 1])
        if lam[x] < lo:
            lo = lam[x]
    comp = 0.0
    for x in range(n):
        v = lam[x] - lo
        if v < 0.0:
            v = 0.0
        lam[x] = v
        comp += psi[x] * v
    return comp


@dataclass(frozen=True)
class ProjectionResult:
    projected: np.ndarray
    multipliers: np.ndarray

    @property
    def complementarity(self) -> float:
        return float(np.dot(self.projected, self.multipliers))


def constraint_total(n: int, c: float) -> float:
    """Conserved area ``c N^{3/2}`` for N sites at macroscopic height c."""
    return c * n ** 1.5


def project_onto_constraint(phi_hat, c: float) -> ProjectionResult:
    """Skorohod projection onto the hard-wall, fixed-area constraint set.

    Minimises ``||psi - phi_hat||_{V_N}`` over ``psi >= 0`` with
    ``sum(psi) = c N^{3/2}``.  In partial-sum coordinates this is a
    bounded isotonic regression, solved by pool-adjacent-violators and
    clipping in O(N).  The returned multipliers satisfy
    ``psi = phi_hat + sigma sigma^T multipliers``, are non-negative and
    vanish wherever ``psi > 0``.
    """
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    phi_hat = np.ascontiguousarray(phi_hat, dtype=float)
    if phi_hat.ndim != 1 or phi_hat.size < 1:
        raise ParameterError("phi_hat must be a non-empty 1-D array")
    n = phi_hat.size
    target = constraint_total(n, c)
    if abs(phi_hat.sum() - target) > 1e-6 * n * max(1.0, target / n):
        raise DomainError(
            f"sum(phi_hat)={phi_hat.sum():.12g} differs from c N^(3/2)={target:.12g}"
        )
    psi = np.empty(n)
    lam = np.empty(n)
    project_kernel(phi_hat, target, psi, lam, np.empty(n), np.empty(n),
                   np.empty(n), np.empty(n, dtype=np.int64))
    return ProjectionResult(psi, lam)
