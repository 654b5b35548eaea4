"""Statistics and the declared-tolerance table shared by all suites."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ParameterError

KS_C_1PCT = 1.628  # sqrt(-ln(0.005)/2), asymptotic two-sample 1% level


@dataclass(frozen=True)
class Tolerance:
    """``kind`` is one of

    * ``le``:     pass iff value - se_mult*se <= bound
    * ``ge``:     pass iff value + se_mult*se >= bound
    * ``abs_le``: pass iff |value| - se_mult*se <= bound
    """

    kind: str
    bound: float
    se_mult: float = 0.0

    def check(self, value: float, se: float = 0.0) -> bool:
        slack = self.se_mult * se
        if not math.isfinite(value):
            return False
        if self.kind == "le":
            return value - slack <= self.bound
        if self.kind == "ge":
            return value + slack >= self.bound
        if self.kind == "abs_le":
            return abs(value) - slack <= self.bound
        raise ParameterError(f"unknown tolerance kind {self.kind!r}")


TOLERANCES: dict[str, Tolerance] = {
    # geometry
    "est0_rel_gap": Tolerance("le", 1e-10),
    "min_norm_ratio": Tolerance("ge", (1.0 / 6.0) * (1 - 1e-9)),
    "max_norm_ratio": Tolerance("le", 1.0 + 1e-9),
    "pin_error_decay": Tolerance("le", 0.5),
    # invariant measures
    "measure_ks": Tolerance("le", 0.02),
    "measure_ks_trend": Tolerance("le", 0.0, 2.0),
    # dynamics (stationarity KS bounds are the per-size 1% critical values)
    "reversibility": Tolerance("abs_le", 0.0, 4.0),
    "conservation": Tolerance("le", 1e-9),
    "wall": Tolerance("ge", -1e-12),
    "complementarity": Tolerance("le", 1e-8),
    # convergence
    "variance_rel_dev": Tolerance("abs_le", 0.10, 3.0),
    # a negative multiplier demands a margin: value must exceed 2 SE
    "deviation_trend": Tolerance("ge", 0.0, -2.0),
    "zero_mode_covariance": Tolerance("abs_le", 1e-20),
    # cross-integrator
    "cross_integrator_rel_dev": Tolerance("abs_le", 0.05, 3.0),
}


@dataclass
class SummaryRecord:
    suite: str
    parameters: dict
    statistic: str
    value: float
    se: float
    tolerance: dict = field(default_factory=dict)
    passed: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def record(suite: str, params: dict, statistic: str, value: float, se: float,
           tol: Tolerance) -> SummaryRecord:
    value = float(value)
    se = float(se)
    if se < 0:
        raise ParameterError("standard error must be non-negative")
    return SummaryRecord(suite, dict(params), statistic, value, se,
                         {"kind": tol.kind, "bound": tol.bound, "se_mult": tol.se_mult},
                         bool(tol.check(value, se)))


def recheck(rec: SummaryRecord) -> bool:
    """Recompute a record's verdict from its value, SE and tolerance."""
    t = rec.tolerance
    return Tolerance(t["kind"], t["bound"], t["se_mult"]).check(rec.value, rec.se)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical_1pct: float
    se: float


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic and its asymptotic 1% critical value.

    ``se`` is a plug-in standard error of the statistic: the binomial
    standard deviation of the difference of empirical CDFs at the point
    where the supremum is attained.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ParameterError("ks_two_sample needs two non-empty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / n
    fb = np.searchsorted(b, grid, side="right") / m
    diff = np.abs(fa - fb)
    i = int(np.argmax(diff))
    stat = float(diff[i])
    crit = KS_C_1PCT * math.sqrt((n + m) / (n * m))
    se = math.sqrt(fa[i] * (1 - fa[i]) / n + fb[i] * (1 - fb[i]) / m)
    return KSResult(stat, crit, se)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def variance_se(x) -> tuple[float, float]:
    """Sample variance and its standard error (fourth-moment formula)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    v = float(np.dot(d, d) / (n - 1))
    m4 = float(np.mean(d ** 4))
    se = math.sqrt(max(m4 - v * v * (n - 3) / (n - 1), 0.0) / n)
    return v, se


def pooled_variance_se(x) -> tuple[float, float]:
    """Variance of all entries of ``x`` (trajectories x records).

    The SE treats trajectories as the independent units: per-trajectory
    averages of squared deviations about the pooled mean.
    """
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    per = np.mean(d * d, axis=1)
    return mean_se(per)


def cross_cov_asymmetry(a0, at, b0, bt) -> tuple[float, float]:
    """Cov(a_0, b_t) - Cov(b_0, a_t) and its SE over independent trajectories."""
    a0, at, b0, bt = (np.asarray(v, dtype=float) for v in (a0, at, b0, bt))
    d = (a0 - a0.mean()) * (bt - bt.mean()) - (b0 - b0.mean()) * (at - at.mean())
    return mean_se(d)


def ratio_dev(v, se_v, ref, se_ref) -> tuple[float, float]:
    """v/ref - 1 with a delta-method SE for independent estimates."""
    dev = v / ref - 1.0
    se = math.sqrt((se_v / ref) ** 2 + (v * se_ref / ref ** 2) ** 2)
    return dev, se
