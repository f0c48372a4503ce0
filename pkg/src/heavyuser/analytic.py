"""Closed-form heavy-user bias, evaluated by quadrature.

For an activity density ``f`` and effect function ``tau``:

    estimand       = int tau(p) p f(p) dp
    expected_naive = estimand / int f(p) (1 - (1 - p)^k) dp
    first_order    = estimand * f(0) / k

The denominator is the probability that a random user appears at least once
in ``k`` days.  For large ``k`` the integrand ``(1 - p)^k`` lives in a layer of
width ~1/k next to 0, so integration is seeded with breakpoints at ``1/k``,
``10/k`` and ``40/k`` (past which ``(1 - p)^k < e^-40``).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import (ComputationError, DegenerateModelError, ModelError, ParameterError,
                     UnsupportedModelError)
from .model import BehaviorModel, PointMasses

ABS_TOL = 1e-10
MAX_SUBDIVISIONS = 10_000
NORMALIZATION_TOL = 1e-8
MIN_APPEARANCE = 1e-12

CSV_COLUMNS = ("k", "estimand", "expected_naive", "exact_bias", "first_order_bias")


def integrate_unit(fn: Callable[[float], float], breakpoints: Iterable[float] = ()) -> float:
    """Adaptive Gauss-Kronrod integral of ``fn`` over [0, 1].

    ``breakpoints`` are interior points where subdivision starts; points
    outside (0, 1) are ignored.
    """
    pts = sorted({float(b) for b in breakpoints if 0.0 < b < 1.0})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(fn, 0.0, 1.0, points=pts or None, epsabs=ABS_TOL,
                                  epsrel=1e-13, limit=MAX_SUBDIVISIONS)
    # roundoff warnings are benign once the error estimate is within tolerance
    if caught and err > 10 * ABS_TOL:
        raise ComputationError(f"quadrature did not converge (error estimate {err:.3g}): "
                               f"{caught[0].message}")
    return float(val)


def _breakpoints(model: BehaviorModel, k: int | None = None) -> list[float]:
    pts = list(model.activity_dist.breakpoints())
    if k is not None:
        # without 40/k the e^-10 tail beyond 10/k is lost for k ~ 1e5
        pts += [1.0 / k, 10.0 / k, 40.0 / k]
    return pts


def _check_normalized(model: BehaviorModel) -> None:
    dist = model.activity_dist
    mass = integrate_unit(lambda p: float(dist.pdf(p)), _breakpoints(model))
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise ModelError(f"activity density integrates to {mass!r}, not 1")


def _scalar(fn):
    return lambda p: float(np.asarray(fn(p), dtype=float))


def compute_estimand(model: BehaviorModel) -> float:
    """Population average treatment effect ``int tau(p) p f(p) dp``."""
    dist = model.activity_dist
    tau = _scalar(model.effect_fn)
    if isinstance(dist, PointMasses):
        return dist.expect(lambda p: np.asarray(model.effect_fn(p)) * p)
    _check_normalized(model)
    return integrate_unit(lambda p: tau(p) * p * float(dist.pdf(p)), _breakpoints(model))


def appearance_rate(model: BehaviorModel, k: int) -> float:
    """Probability that a random user is active at least once in ``k`` days."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    dist = model.activity_dist

    def shows_up(p):
        p = np.asarray(p, dtype=float)
        # 1 - (1 - p)^k, accurate for small p; p == 1 gives log1p(-1) = -inf -> 1
        with np.errstate(divide="ignore"):
            return -np.expm1(k * np.log1p(-p))

    if isinstance(dist, PointMasses):
        return dist.expect(shows_up)
    return integrate_unit(lambda p: float(shows_up(p)) * float(dist.pdf(p)),
                          _breakpoints(model, k))


def compute_expected_naive(model: BehaviorModel, k: int) -> float:
    """Expectation of the naive estimator in a ``k``-day experiment."""
    denom = appearance_rate(model, k)
    if denom < MIN_APPEARANCE:
        raise DegenerateModelError(f"appearance probability {denom!r} is effectively zero")
    return compute_estimand(model) / denom


def compute_first_order_bias(model: BehaviorModel, k: int) -> float:
    """Leading ``1/k`` term of the naive estimator's bias: ``estimand * f(0) / k``."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    f0 = model.activity_dist.density_at_zero()
    return compute_estimand(model) * f0 / k


@dataclass(frozen=True)
class BiasAnalysis:
    k: int
    estimand: float
    expected_naive: float
    exact_bias: float
    first_order_bias: float | None

    def as_dict(self) -> dict:
        return {"k": self.k, "estimand": self.estimand, "expected_naive": self.expected_naive,
                "exact_bias": self.exact_bias, "first_order_bias": self.first_order_bias}

    def as_row(self) -> tuple:
        return (self.k, self.estimand, self.expected_naive, self.exact_bias,
                self.first_order_bias)


def analyze(model: BehaviorModel, k: int, strict: bool = True) -> BiasAnalysis:
    """All bias quantities at duration ``k``.

    With ``strict=False`` a model without a finite ``f(0)`` (point masses, or
    a density that blows up at 0) gets ``first_order_bias=None`` instead of
    raising.
    """
    estimand = compute_estimand(model)
    expected = compute_expected_naive(model, k)
    try:
        first = compute_first_order_bias(model, k)
    except UnsupportedModelError:
        if strict:
            raise
        first = None
    return BiasAnalysis(k, estimand, expected, expected - estimand, first)


def bias_curve(model: BehaviorModel, k_values: Sequence[int]) -> list[BiasAnalysis]:
    if not k_values:
        raise ParameterError("k_values must be nonempty")
    if any(k < 1 for k in k_values):
        raise ParameterError(f"every k must be >= 1, got {list(k_values)}")
    return [analyze(model, int(k)) for k in k_values]


def write_bias_csv(rows: Sequence[BiasAnalysis], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.k] + ["" if x is None else repr(float(x)) for x in r.as_row()[1:]])
