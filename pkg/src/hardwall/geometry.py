"""Discrete and continuum Hilbert norms on step functions of [0, 1).

A :class:`StepField` with K cells is constant on [i/K, (i+1)/K).  For such
functions every quantity below is an exact finite sum: the antiderivative
``k(t) = int_0^t (h - <h,1>)`` is piecewise linear, so integrals of ``k^2``
and ``k_f k_g`` are evaluated with the P1 mass-matrix formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericalError, ParameterError


@dataclass(frozen=True, eq=False)
class StepField:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=float)
        if cells.ndim != 1 or cells.size < 1:
            raise ParameterError("a StepField needs at least one cell")
        object.__setattr__(self, "cells", cells)

    @property
    def K(self) -> int:
        return self.cells.size

    def __add__(self, other):
        a, b = _common(self, other)
        return StepField(a + b)

    def __sub__(self, other):
        a, b = _common(self, other)
        return StepField(a - b)

    def __mul__(self, s):
        return StepField(self.cells * float(s))

    __rmul__ = __mul__


def as_field(h) -> StepField:
    return h if isinstance(h, StepField) else StepField(np.asarray(h, dtype=float))


def refine(h: StepField, K: int) -> StepField:
    """Same function represented on K cells (K a multiple of h.K)."""
    if K % h.K:
        raise ParameterError(f"cannot refine {h.K} cells to {K}")
    return StepField(np.repeat(h.cells, K // h.K))


def _common(f: StepField, g: StepField):
    K = f.K * g.K // math.gcd(f.K, g.K)
    return refine(f, K).cells, refine(g, K).cells


def mean_of(h) -> float:
    return float(np.mean(as_field(h).cells))


def l2_inner(f, g) -> float:
    a, b = _common(as_field(f), as_field(g))
    return float(np.dot(a, b) / a.size)


def l2_norm_sq(h) -> float:
    c = as_field(h).cells
    return float(np.dot(c, c) / c.size)


def cosine_mode(k: int, K: int) -> StepField:
    """Cell averages of cos(k pi theta) on K cells.

    Any H_K function pairs with this field exactly as with the cosine.
    """
    edges = np.arange(K + 1) / K
    if k == 0:
        return StepField(np.ones(K))
    return StepField(K * np.diff(np.sin(k * math.pi * edges)) / (k * math.pi))


def cell_weights(h, N: int) -> np.ndarray:
    """``w_x = int_{I(x)} h`` for the N cells I(x) = [(x-1)/N, x/N)."""
    h = as_field(h)
    K = h.K * N // math.gcd(h.K, N)
    fine = refine(h, K).cells
    return fine.reshape(N, K // N).sum(axis=1) / K


def _antiderivative_nodes(cells: np.ndarray) -> np.ndarray:
    """Node values of t -> int_0^t (h - <h,1>) at t = j/K, j = 0..K."""
    K = cells.shape[-1]
    g = cells - cells.mean(axis=-1, keepdims=True)
    k = np.zeros(cells.shape[:-1] + (K + 1,))
    k[..., 1:] = np.cumsum(g, axis=-1) / K
    k[..., -1] = 0.0
    return k


def _p1_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact integral of the product of two piecewise-linear node vectors on [0,1]."""
    K = a.shape[-1] - 1
    a0, a1, b0, b1 = a[..., :-1], a[..., 1:], b[..., :-1], b[..., 1:]
    return np.sum(2 * a0 * b0 + a0 * b1 + a1 * b0 + 2 * a1 * b1, axis=-1) / (6.0 * K)


def hn_norm_sq(h) -> float | np.ndarray:
    """Squared H_N norm of an N-cell field (N = number of cells).

    ``<h,1>^2 + (1/N) sum_{i<N} (sum_{j<=i} <h - <h,1>, 1_{I(j)}>)^2``.
    Accepts a StepField or an array whose last axis holds the cells.
    """
    cells = h.cells if isinstance(h, StepField) else np.asarray(h, dtype=float)
    N = cells.shape[-1]
    m = cells.mean(axis=-1)
    partial = np.cumsum(cells - m[..., None], axis=-1)[..., :-1] / N
    out = m * m + np.sum(partial * partial, axis=-1) / N
    return float(out) if np.ndim(out) == 0 else out


def h_norm_sq(h) -> float | np.ndarray:
    """Squared H norm: ``<h,1>^2 + int_0^1 k(t)^2 dt``, exact for step functions."""
    cells = h.cells if isinstance(h, StepField) else np.asarray(h, dtype=float)
    k = _antiderivative_nodes(cells)
    m = cells.mean(axis=-1)
    out = m * m + _p1_inner(k, k)
    return float(out) if np.ndim(out) == 0 else out


def h_inner(f, g) -> float:
    """H scalar product (polarization of :func:`h_norm_sq`, evaluated directly)."""
    a, b = _common(as_field(f), as_field(g))
    ka, kb = _antiderivative_nodes(a), _antiderivative_nodes(b)
    return float(a.mean() * b.mean() + _p1_inner(ka, kb))


def hn_inner(f, g) -> float:
    a, b = as_field(f).cells, as_field(g).cells
    if a.size != b.size:
        raise ParameterError("H_N inner product needs fields on the same N cells")
    N = a.size
    pa = np.cumsum(a - a.mean())[:-1] / N
    pb = np.cumsum(b - b.mean())[:-1] / N
    return float(a.mean() * b.mean() + np.dot(pa, pb) / N)


def check_est0(h) -> tuple[float, float]:
    """Both sides of ``|h|_{H_N}^2 + <h,1>^2/(6N^2) = |h|_H^2 + |h|_{L^2}^2/(6N^2)``."""
    cells = h.cells if isinstance(h, StepField) else np.asarray(h, dtype=float)
    N = cells.shape[-1]
    m = cells.mean(axis=-1)
    l2 = np.mean(cells * cells, axis=-1)
    lhs = hn_norm_sq(cells) + m * m / (6.0 * N * N)
    rhs = h_norm_sq(cells) + l2 / (6.0 * N * N)
    return lhs, rhs


def project_PN(h, N: int) -> StepField:
    """L^2-orthogonal projection onto N-cell step functions (block averages)."""
    h = as_field(h)
    if N < 1 or h.K % N:
        raise ParameterError(f"K={h.K} is not divisible by N={N}")
    return StepField(h.cells.reshape(N, h.K // N).mean(axis=1))


def _basis_nodes(N: int, K: int) -> np.ndarray:
    """Antiderivative node values (on K cells) of d_i = 1_{I(i)} - 1_{I(i+1)}, i = 1..N-1."""
    rows = np.zeros((N - 1, N))
    idx = np.arange(N - 1)
    rows[idx, idx] = 1.0
    rows[idx, idx + 1] = -1.0
    return _antiderivative_nodes(np.repeat(rows, K // N, axis=1))


def gram_h0(N: int) -> np.ndarray:
    """Gram matrix of the H_N^0 basis d_i in the H^0 scalar product."""
    k = _basis_nodes(N, N)
    return _p1_inner(k[:, None, :], k[None, :, :])


def project_PiN(h, N: int) -> StepField:
    """H^0-orthogonal projection of a zero-mean field onto H_N^0.

    Solves the tridiagonal Gram system for the basis
    ``d_i = 1_{I(i)} - 1_{I(i+1)}`` by banded Cholesky.
    """
    h = as_field(h)
    if N < 1 or h.K % N:
        raise ParameterError(f"K={h.K} is not divisible by N={N}")
    if abs(mean_of(h)) > 1e-10 * max(1.0, float(np.max(np.abs(h.cells)))):
        raise DomainError("project_PiN expects a zero-mean field")
    if N == 1:
        return StepField(np.zeros(1))
    K = h.K
    m = K // N
    G = gram_h0(N)
    band = np.zeros((2, N - 1))
    band[0, 1:] = np.diag(G, 1)
    band[1] = np.diag(G)
    # right-hand side b_i = int k_h k_{d_i}: the hat k_{d_i} lives on 2m fine cells
    kh = _antiderivative_nodes(h.cells)
    kd = _basis_nodes(N, K)
    b = np.empty(N - 1)
    for i in range(N - 1):
        sl = slice(i * m, (i + 2) * m + 1)
        b[i] = _p1_inner(kd[i, sl], kh[sl]) * (2 * m) / K
    try:
        if N == 2:
            a = b / band[1]
        else:
            a = linalg.solveh_banded(band, b)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Gram solve failed for N={N}") from exc
    cells = np.zeros(N)
    cells[:-1] += a
    cells[1:] -= a
    return StepField(cells)
