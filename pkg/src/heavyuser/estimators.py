"""Treatment-effect estimators for the scaled single-average metric.

All estimators reduce to :func:`naive_from_weights`: given a vector of
per-day multiplicities (1 for an ordinary day, 0 for an excluded day, ``m``
for a day drawn ``m`` times by the bootstrap), it computes

    sum(treated outcomes) / (|window| * N_t) - sum(control outcomes) / (|window| * N_c)

where ``N_t``/``N_c`` count users active on at least one day of the window.
Recounting the appearing users per window is what makes a leave-one-day-out
estimate behave like a genuine ``k - 1`` day experiment.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import rng as rngmod
from .errors import DegenerateArmError, DurationError, ParameterError
from .panel import PanelDataset

DEFAULT_REPLICATES = 100
DEFAULT_BLOCK_LEN = 1


class Method(str, enum.Enum):
    NAIVE = "naive"
    JACKKNIFE = "jackknife"
    BLOCK_BOOTSTRAP = "block_bootstrap"


@dataclass(frozen=True)
class EstimateResult:
    method: Method
    point: float
    variance: float | None
    k: int
    n_treat_appearing: int
    n_control_appearing: int

    def __post_init__(self):
        if self.variance is not None and self.variance < 0:
            raise ValueError("variance must be nonnegative")

    def to_json(self) -> dict:
        return {
            "method": Method(self.method).value,
            "point": self.point,
            "variance": self.variance,
            "k": self.k,
            "n_treat": self.n_treat_appearing,
            "n_control": self.n_control_appearing,
        }


@dataclass(frozen=True)
class IncrementalityReport:
    mean_active_days_treat: float
    mean_active_days_control: float
    t_statistic: float
    p_value: float
    alpha: float
    passed: bool
    df: float

    def to_json(self) -> dict:
        return {
            "mean_active_days_treat": self.mean_active_days_treat,
            "mean_active_days_control": self.mean_active_days_control,
            "t": self.t_statistic,
            "p": self.p_value,
            "alpha": self.alpha,
            "passed": self.passed,
        }


# -- core kernel ---------------------------------------------------------------


def naive_from_weights(panel: PanelDataset, weights) -> tuple[float, int, int]:
    """Naive estimate for a day-multiplicity vector of length ``k``.

    Returns ``(point, n_treat_appearing, n_control_appearing)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    m = float(w.sum())
    if m <= 0:
        raise ParameterError("analysis window is empty")
    present = w > 0
    parts = []
    counts = []
    for arm, name in zip(panel.arms, ("treatment", "control")):
        n = int(np.count_nonzero(arm.active[:, present].any(axis=1)))
        if n == 0:
            raise DegenerateArmError(f"{name} arm has no users active in the analysis window")
        parts.append(float(arm.outcome.sum(axis=0) @ w) / (m * n))
        counts.append(n)
    return parts[0] - parts[1], counts[0], counts[1]


def _window_weights(k: int, window) -> np.ndarray:
    if window is None:
        return np.ones(k)
    days = list(window)
    if not days:
        raise ParameterError("window must contain at least one day")
    if len(set(days)) != len(days):
        raise ParameterError("window days must be distinct")
    w = np.zeros(k)
    for d in days:
        if not 1 <= d <= k:
            raise ParameterError(f"window day {d} outside 1..{k}")
        w[d - 1] = 1.0
    return w


# -- estimators ----------------------------------------------------------------


def naive_scaled(panel: PanelDataset, window=None) -> EstimateResult:
    """Difference in scaled sample means over ``window`` (default: all days)."""
    point, nt, nc = naive_from_weights(panel, _window_weights(panel.k, window))
    return EstimateResult(Method.NAIVE, point, None, panel.k, nt, nc)


def leave_one_day_out(panel: PanelDataset) -> np.ndarray:
    """Naive estimates with each day ``j = 1..k`` excluded in turn."""
    k = panel.k
    out = np.empty(k)
    for j in range(k):
        w = np.ones(k)
        w[j] = 0.0
        try:
            out[j] = naive_from_weights(panel, w)[0]
        except DegenerateArmError as exc:
            raise DegenerateArmError(f"leaving out day {j + 1}: {exc}") from None
    return out


def jackknife_combine(full: float, leave_out, classical_variance: bool = False):
    """Combine a full-window estimate with its ``k`` leave-one-out estimates.

    Returns ``(point, variance)`` with ``point = k * full - (k - 1) * mean``.
    The variance uses the factor ``k / (k - 1)`` unless ``classical_variance``
    asks for the textbook ``(k - 1) / k``.
    """
    loo = np.asarray(leave_out, dtype=np.float64)
    k = len(loo)
    if k < 2:
        raise DurationError("jackknife needs at least two days")
    mean = loo.mean()
    point = k * full - (k - 1) * mean
    ss = float(np.sum((loo - mean) ** 2))
    factor = (k - 1) / k if classical_variance else k / (k - 1)
    return float(point), factor * ss


def jackknife_adjusted(panel: PanelDataset, classical_variance: bool = False) -> EstimateResult:
    """Leave-one-day-out bias-adjusted estimate.

    Raises :class:`DegenerateArmError` if dropping any single day empties an
    arm; skipping such a day would bias the leave-one-out mean.
    """
    if panel.k < 2:
        raise DurationError(f"jackknife needs k >= 2, got {panel.k}")
    full, nt, nc = naive_from_weights(panel, np.ones(panel.k))
    point, var = jackknife_combine(full, leave_one_day_out(panel), classical_variance)
    return EstimateResult(Method.JACKKNIFE, point, var, panel.k, nt, nc)


def moving_block_weights(k: int, block_len: int, gen: np.random.Generator) -> np.ndarray:
    """Day multiplicities of one moving-block resample of ``k`` days.

    Draws ``ceil(k / block_len)`` block starts uniformly from ``0..k-block_len``,
    concatenates the blocks and truncates to ``k`` pseudo-days.
    """
    n_blocks = -(-k // block_len)
    starts = gen.integers(0, k - block_len + 1, size=n_blocks)
    days = (starts[:, None] + np.arange(block_len)).ravel()[:k]
    return np.bincount(days, minlength=k).astype(np.float64)


def block_bootstrap_adjusted(panel: PanelDataset, replicates: int = DEFAULT_REPLICATES,
                             block_len: int = DEFAULT_BLOCK_LEN, rng_seed: int | None = None,
                             ) -> EstimateResult:
    """Moving-block bootstrap bias correction over days.

    ``point = 2 * naive - mean(bootstrap naive)``; ``variance`` is the sample
    variance of the bootstrap estimates.  Replicate ``b`` draws from a stream
    keyed by ``(rng_seed, b)``.
    """
    if rng_seed is None:
        raise ParameterError("block bootstrap needs an explicit rng_seed")
    if replicates < 2:
        raise ParameterError(f"replicates must be >= 2, got {replicates}")
    if not 1 <= block_len <= panel.k:
        raise ParameterError(f"block_len must be in 1..{panel.k}, got {block_len}")
    full, nt, nc = naive_from_weights(panel, np.ones(panel.k))
    streams = rngmod.KeyedStreams(rng_seed, rngmod.BOOTSTRAP)
    boot = np.empty(replicates)
    for b in range(replicates):
        w = moving_block_weights(panel.k, block_len, streams.stream(b))
        try:
            boot[b] = naive_from_weights(panel, w)[0]
        except DegenerateArmError as exc:
            raise DegenerateArmError(f"bootstrap replicate {b}: {exc}") from None
    point = 2.0 * full - float(boot.mean())
    return EstimateResult(Method.BLOCK_BOOTSTRAP, point, float(boot.var(ddof=1)),
                          panel.k, nt, nc)


# -- incrementality diagnostic -------------------------------------------------


def student_t_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t via the regularized
    incomplete beta function: ``I_{df/(df+t^2)}(df/2, 1/2)``."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def welch_t_test(a, b) -> tuple[float, float, float]:
    """Welch's unequal-variance t-test. Returns ``(t, df, two-sided p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        # both samples constant: the test is exact
        if diff == 0.0:
            return 0.0, float(len(a) + len(b) - 2), 1.0
        return math.copysign(math.inf, diff), float(len(a) + len(b) - 2), 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t, df, student_t_two_sided(t, df)


def check_incrementality(panel: PanelDataset, alpha: float = 0.05) -> IncrementalityReport:
    """Test whether treatment changed how often users are active.

    Compares per-user active-day counts of appearing users across arms;
    ``passed`` means no significant difference at level ``alpha``.
    """
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    days_t, days_c = panel.active_days()
    for name, d in (("treatment", days_t), ("control", days_c)):
        if len(d) < 2:
            raise DegenerateArmError(f"{name} arm needs at least 2 appearing users, has {len(d)}")
    t, df, p = welch_t_test(days_t, days_c)
    return IncrementalityReport(float(days_t.mean()), float(days_c.mean()), float(t),
                                p, alpha, p >= alpha, df)


def estimate(panel: PanelDataset, method, *, replicates=DEFAULT_REPLICATES,
             block_len=DEFAULT_BLOCK_LEN, rng_seed=None, classical_variance=False):
    """Dispatch on ``method`` (a :class:`Method` or its string value)."""
    method = Method(method)
    if method is Method.NAIVE:
        return naive_scaled(panel)
    if method is Method.JACKKNIFE:
        return jackknife_adjusted(panel, classical_variance=classical_variance)
    return block_bootstrap_adjusted(panel, replicates, block_len, rng_seed)


__all__ = [
    "EstimateResult", "IncrementalityReport", "Method",
    "block_bootstrap_adjusted", "check_incrementality", "estimate",
    "jackknife_adjusted", "jackknife_combine", "leave_one_day_out",
    "moving_block_weights", "naive_from_weights", "naive_scaled",
    "student_t_two_sided", "welch_t_test",
]
