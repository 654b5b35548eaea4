"""Exact samplers for the conditioned Gibbs measures and their continuum limit.

The unconstrained law on heights with fixed area is the image of a random
walk with i.i.d. exp(-V) increments, recentred so that the heights sum to
``c N^{3/2}``.  Positivity is imposed by rejection.  The continuum analogue
replaces the walk by a Brownian path of variance ``q`` per unit time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AcceptanceTooLowError, ParameterError
from .potential import ConvexPotential

DEFAULT_MAX_ATTEMPTS = 10 ** 6
_BLOCK = 4096


@dataclass(frozen=True)
class ConditionedSampleReport:
    sample: np.ndarray
    attempts: int
    acceptance_estimate: float


def pnc_from_increments(x: np.ndarray, c: float) -> np.ndarray:
    """Heights from N-1 walk increments (last axis): recentred walk plus ``c sqrt(N)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] + 1
    s = np.zeros(x.shape[:-1] + (n,))
    np.cumsum(x, axis=-1, out=s[..., 1:])
    return s - s.mean(axis=-1, keepdims=True) + c * math.sqrt(n)


def sample_pnc(N: int, c: float, p: ConvexPotential, rng: np.random.Generator,
               size: int | None = None) -> np.ndarray:
    """Draw from the fixed-area Gibbs measure (no wall). ``size`` stacks draws on axis 0."""
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    shape = (N - 1,) if size is None else (size, N - 1)
    return pnc_from_increments(p.sample(rng, shape), c)


def _check_attempts(max_attempts):
    if max_attempts < 1:
        raise ParameterError(f"max_attempts must be >= 1, got {max_attempts}")


def _reject(draw, count, max_attempts, what):
    """Collect ``count`` rows of ``draw(k)`` with non-negative minimum.

    Returns the rows, the number of proposals and the number of proposals
    that passed (surplus accepted rows of the last block are discarded).
    """
    kept = []
    got = 0
    passed = 0
    attempts = 0
    while got < count:
        if attempts >= max_attempts:
            raise AcceptanceTooLowError(attempts, f"{what}: {got} of {count} accepted "
                                        f"after {attempts} attempts")
        k = min(_BLOCK, max(count - got, 1) * 2, max_attempts - attempts)
        block = draw(k)
        ok = block.min(axis=-1) >= 0.0
        attempts += k
        good = block[ok]
        passed += good.shape[0]
        kept.append(good[: count - got])
        got += min(good.shape[0], count - got)
    return np.concatenate(kept, axis=0), attempts, passed


def sample_pnc_plus(N: int, c: float, p: ConvexPotential, rng: np.random.Generator,
                    max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ConditionedSampleReport:
    """One draw from the fixed-area Gibbs measure conditioned on non-negative heights."""
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    _check_attempts(max_attempts)
    for attempt in range(1, max_attempts + 1):
        phi = sample_pnc(N, c, p, rng)
        if phi.min() >= 0.0:
            return ConditionedSampleReport(phi, attempt, 1.0 / attempt)
    raise AcceptanceTooLowError(max_attempts, f"P_N^(c,+) with N={N}, c={c}: no acceptance "
                                f"in {max_attempts} attempts")


def sample_pnc_plus_batch(N: int, c: float, p: ConvexPotential, rng: np.random.Generator,
                          count: int, max_attempts: int = DEFAULT_MAX_ATTEMPTS
                          ) -> ConditionedSampleReport:
    """``count`` independent conditioned draws, stacked on axis 0.

    ``max_attempts`` bounds the total number of proposals.
    """
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    _check_attempts(max_attempts)
    rows, attempts, passed = _reject(lambda k: sample_pnc(N, c, p, rng, k), count,
                                     max_attempts, f"N={N}, c={c}")
    return ConditionedSampleReport(rows, attempts, passed / attempts)


def limit_paths(M: int, c: float, q: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Unconditioned ``sqrt(q) (B - mean B) + c`` on the grid i/M, i = 0..M-1."""
    b = np.zeros((size, M))
    inc = rng.standard_normal((size, M - 1))
    inc *= math.sqrt(1.0 / M)
    np.cumsum(inc, axis=1, out=b[:, 1:])
    b -= b.mean(axis=1, keepdims=True)
    b *= math.sqrt(q)
    b += c
    return b


def _check_limit(M, c, q):
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    if not q > 0:
        raise ParameterError(f"q must be positive, got {q}")
    if M < 2:
        raise ParameterError(f"M must be >= 2, got {M}")


def sample_limit_invariant(M: int, c: float, q: float, rng: np.random.Generator,
                           max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ConditionedSampleReport:
    """M-point grid draw of the non-negative conditioned Brownian profile."""
    _check_limit(M, c, q)
    _check_attempts(max_attempts)
    for attempt in range(1, max_attempts + 1):
        y = limit_paths(M, c, q, rng, 1)[0]
        if y.min() >= 0.0:
            return ConditionedSampleReport(y, attempt, 1.0 / attempt)
    raise AcceptanceTooLowError(max_attempts, f"limit law with M={M}, c={c}: no acceptance "
                                f"in {max_attempts} attempts")


def sample_limit_invariant_batch(M: int, c: float, q: float, rng: np.random.Generator,
                                 count: int, max_attempts: int = DEFAULT_MAX_ATTEMPTS
                                 ) -> ConditionedSampleReport:
    _check_limit(M, c, q)
    _check_attempts(max_attempts)
    rows, attempts, passed = _reject(lambda k: limit_paths(M, c, q, rng, k), count,
                                     max_attempts, f"M={M}, c={c}")
    return ConditionedSampleReport(rows, attempts, passed / attempts)
