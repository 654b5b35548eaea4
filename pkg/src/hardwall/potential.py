"""Convex interaction potentials V with exp(-V) a centred probability density.

Two constructors are provided: :func:`make_gaussian`, whose sampler is an
exact normal draw, and :func:`normalize`, which turns any convex,
coercive ``raw_V`` into a potential with unit mass and zero mean and
samples it through a tabulated inverse CDF refined by one Newton step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, IntegrabilityError, ParameterError

N_QUANTILES = 4096
N_AUDIT = 1025
TAIL_MASS = 1e-12
_CDF_INTERVALS = 1 << 14
_DTAB_POINTS = (1 << 14) + 1

KIND_GAUSSIAN = 0
KIND_TABULATED = 1


@dataclass(frozen=True, eq=False)
class ConvexPotential:
    """Normalized convex potential.

    ``value``, ``deriv`` and ``deriv2`` are vectorized callables.  ``q`` is
    the second moment of exp(-V); ``support`` is the interval outside of
    which exp(-V) carries less than ``TAIL_MASS`` on each side.
    """

    kind: str
    value: Callable
    deriv: Callable
    deriv2: Callable
    q: float
    support: tuple[float, float]
    sup_deriv2: float
    variance: float | None = None
    name: str = ""
    _cdf_r: np.ndarray | None = field(default=None, repr=False)
    _cdf_F: np.ndarray | None = field(default=None, repr=False)
    _quantiles: np.ndarray | None = field(default=None, repr=False)
    _dtab: tuple | None = field(default=None, repr=False)

    def density(self, r):
        return np.exp(-self.value(r))

    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the density exp(-V)."""
        if self.kind == "gaussian":
            return rng.normal(0.0, math.sqrt(self.variance), size)
        u = rng.random(size)
        return self._inverse_cdf(u)

    def cdf(self, r):
        """Distribution function of exp(-V) (tabulated kind only)."""
        if self.kind == "gaussian":
            from scipy.special import ndtr
            return ndtr(np.asarray(r) / math.sqrt(self.variance))
        r = np.asarray(r, dtype=float)
        rr = np.clip(r, self._cdf_r[0], self._cdf_r[-1])
        j = np.clip(np.searchsorted(self._cdf_r, rr, side="right") - 1,
                    0, self._cdf_r.size - 2)
        a = self._cdf_r[j]
        mid = 0.5 * (a + rr)
        piece = (rr - a) / 6.0 * (self.density(a) + 4.0 * self.density(mid)
                                  + self.density(rr))
        return np.clip(self._cdf_F[j] + piece, 0.0, 1.0)

    def _inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        n = self._quantiles.size - 1
        pos = u * n
        j = np.clip(np.floor(pos).astype(np.int64), 0, n - 1)
        a, b = self._quantiles[j], self._quantiles[j + 1]
        r = a + (pos - j) * (b - a)
        # Newton refinement, kept inside the bracketing quantile cell
        r = np.clip(r - (self.cdf(r) - u) / self.density(r), a, b)
        # the two outer cells span the exponential tails: iterate there
        tail = (j == 0) | (j == n - 1)
        if np.any(tail):
            rt, ut, at, bt = r[tail], u[tail], a[tail], b[tail]
            for _ in range(40):
                rt = np.clip(rt - (self.cdf(rt) - ut) / self.density(rt), at, bt)
            r = np.array(r, copy=True)
            r[tail] = rt
        return r

    def kernel_params(self):
        """(kind code, x0, h, table) describing V' for the compiled integrators."""
        if self.kind == "gaussian":
            return KIND_GAUSSIAN, 0.0, 1.0, np.array([1.0 / self.variance])
        x0, h, tab = self._dtab
        return KIND_TABULATED, x0, h, tab


def sample_step(p: ConvexPotential, rng: np.random.Generator) -> float:
    """One draw from exp(-V)."""
    return float(p.sample(rng))


def make_gaussian(variance: float) -> ConvexPotential:
    if not (variance > 0 and math.isfinite(variance)):
        raise ParameterError(f"variance must be positive, got {variance}")
    v = float(variance)
    log_norm = 0.5 * math.log(2.0 * math.pi * v)
    half_width = math.sqrt(v) * 7.1345  # normal tail mass ~ 4.9e-13 beyond
    return ConvexPotential(
        kind="gaussian",
        value=lambda r: np.asarray(r, dtype=float) ** 2 / (2.0 * v) + log_norm,
        deriv=lambda r: np.asarray(r, dtype=float) / v,
        deriv2=lambda r: np.full_like(np.asarray(r, dtype=float), 1.0 / v),
        q=v,
        support=(-half_width, half_width),
        sup_deriv2=1.0 / v,
        variance=v,
        name=f"gaussian({v:g})",
    )


def make_quartic(coefficient: float = 1.0) -> ConvexPotential:
    """Normalized version of ``coefficient * r**4``."""
    if not (coefficient > 0 and math.isfinite(coefficient)):
        raise ParameterError(f"coefficient must be positive, got {coefficient}")
    a = float(coefficient)
    return normalize(
        lambda r: a * np.asarray(r, dtype=float) ** 4,
        deriv=lambda r: 4.0 * a * np.asarray(r, dtype=float) ** 3,
        deriv2=lambda r: 12.0 * a * np.asarray(r, dtype=float) ** 2,
        name=f"quartic({a:g})",
    )


def from_name(potential: str, variance: float = 1.0, coefficient: float = 1.0):
    if potential == "gaussian":
        return make_gaussian(variance)
    if potential == "quartic":
        return make_quartic(coefficient)
    raise ParameterError(f"unknown potential {potential!r}")


def _numeric_deriv(f, h):
    return lambda r: (f(np.asarray(r, dtype=float) + h) - f(np.asarray(r, dtype=float) - h)) / (2 * h)


def _numeric_deriv2(f, h):
    def d2(r):
        r = np.asarray(r, dtype=float)
        return (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h)
    return d2


def _scalar(f):
    return lambda x: float(np.asarray(f(np.asarray(x, dtype=float))))


def _bracket(g, start, direction, level):
    """First point start + direction*R (R doubling) where g exceeds ``level``."""
    step = 1.0
    while step < 1e8:
        x = start + direction * step
        val = g(x)
        if not math.isfinite(val):
            raise IntegrabilityError(f"raw_V is not finite at {x}")
        if val >= level:
            return x
        step *= 2.0
    raise IntegrabilityError("raw_V does not grow to +infinity (growth probe failed)")


def _quad(f, lo, hi, points=None):
    val, err = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=1000,
                              points=points)
    if not math.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise IntegrabilityError(f"quadrature did not converge (err={err:.3g})")
    return val


def _tail_point(V, dV, direction, mass):
    """Point beyond which the tangent-line bound on the tail of exp(-V) is below ``mass``.

    For convex V, V(s) >= V(r) + V'(r)(s - r), so the tail mass beyond r
    is at most exp(-V(r)) / |V'(r)|.
    """
    r = 0.0
    step = 0.25
    while step < 1e8:
        r = direction * step
        slope = direction * dV(r)
        if slope > 0 and math.exp(-V(r)) / slope < mass:
            return r
        step *= 1.25
    raise IntegrabilityError("could not locate the tail of exp(-V)")


def normalize(raw_V, deriv=None, deriv2=None, name: str = "") -> ConvexPotential:
    """Shift and offset ``raw_V`` so that exp(-V) has unit mass and zero mean.

    ``V(r) = raw_V(r + m) + log Z`` where Z and m are the mass and mean of
    exp(-raw_V).  Derivatives are taken from ``deriv``/``deriv2`` when
    given and by central differences otherwise.
    """
    g = _scalar(raw_V)
    res = optimize.minimize_scalar(g)
    r_min = float(res.x)
    v_min = g(r_min)
    if not math.isfinite(v_min):
        raise IntegrabilityError("raw_V has no finite minimum")

    def shifted(x):
        return g(x) - v_min

    lo = _bracket(shifted, r_min, -1.0, 60.0)
    hi = _bracket(shifted, r_min, +1.0, 60.0)

    def weight(x):
        return math.exp(-shifted(x))

    z = _quad(weight, lo, hi, [r_min])
    mean = r_min + _quad(lambda x: (x - r_min) * weight(x), lo, hi, [r_min]) / z
    log_z = math.log(z) - v_min

    def value(r):
        return np.asarray(raw_V(np.asarray(r, dtype=float) + mean), dtype=float) + log_z

    scale = hi - lo
    if deriv is None:
        d1 = _numeric_deriv(value, 1e-6 * scale)
    else:
        d1 = lambda r: np.asarray(deriv(np.asarray(r, dtype=float) + mean), dtype=float)
    if deriv2 is None:
        d2 = _numeric_deriv2(value, 1e-4 * scale)
    else:
        d2 = lambda r: np.asarray(deriv2(np.asarray(r, dtype=float) + mean), dtype=float)

    Vs, dVs = _scalar(value), _scalar(d1)
    s_lo = _tail_point(Vs, dVs, -1.0, TAIL_MASS)
    s_hi = _tail_point(Vs, dVs, +1.0, TAIL_MASS)

    audit = np.linspace(s_lo, s_hi, N_AUDIT)
    vals = value(audit)
    h = audit[1] - audit[0]
    second = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
    if np.any(second < -1e-9 * max(1.0, float(np.max(np.abs(vals))))) or np.any(d2(audit) < -1e-9):
        raise DomainError("raw_V is not convex on the audit grid")
    if np.any(np.diff(d1(audit)) < -1e-9 * max(1.0, float(np.max(np.abs(d1(audit)))))):
        raise DomainError("V' is not monotone on the audit grid")

    dens = lambda x: math.exp(-Vs(x))
    q = _quad(lambda x: x * x * dens(x), s_lo, s_hi, [0.0])

    r_grid = np.linspace(s_lo, s_hi, _CDF_INTERVALS + 1)
    f_grid = np.exp(-value(r_grid))
    F = integrate.cumulative_simpson(f_grid, x=r_grid, initial=0.0)
    F = F / F[-1]
    F = np.maximum.accumulate(F)
    quantiles = np.interp(np.linspace(0.0, 1.0, N_QUANTILES + 1), F, r_grid)
    quantiles[0], quantiles[-1] = s_lo, s_hi

    width = 2.0 * max(abs(s_lo), abs(s_hi))
    dtab_x = np.linspace(-width, width, _DTAB_POINTS)
    dtab = np.ascontiguousarray(d1(dtab_x), dtype=float)

    return ConvexPotential(
        kind="tabulated",
        value=value,
        deriv=d1,
        deriv2=d2,
        q=float(q),
        support=(float(s_lo), float(s_hi)),
        sup_deriv2=float(np.max(d2(audit))),
        name=name or "tabulated",
        _cdf_r=r_grid,
        _cdf_F=F,
        _quantiles=quantiles,
        _dtab=(float(dtab_x[0]), float(dtab_x[1] - dtab_x[0]), dtab),
    )


def moments(p: ConvexPotential) -> tuple[float, float, float]:
    """(mass, mean, second moment) of exp(-V) by quadrature over a safe range."""
    lo, hi = p.support
    pad = 0.5 * (hi - lo)
    dens = lambda x: float(np.exp(-p.value(x)))
    mass = _quad(dens, lo - pad, hi + pad)
    mean = _quad(lambda x: x * dens(x), lo - pad, hi + pad)
    second = _quad(lambda x: x * x * dens(x), lo - pad, hi + pad)
    return mass, mean, second
