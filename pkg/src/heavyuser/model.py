"""User-behavior models and synthetic panel generation.

Each user has an activity probability ``p`` drawn from an activity
distribution.  On every day of the experiment the user is active with
probability ``p``, independently across days.  Active days produce an outcome
``c(p) + noise`` in control and ``c(p) + tau(p) * (1 + a / U) + noise`` in
treatment, where ``U`` counts the user's active days so far (inclusive) and
``a`` is the optional novelty amplitude (0 when absent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .errors import DurationError, ModelError, ParameterError, UnsupportedModelError
from .panel import PanelDataset

TREATMENT = "treatment"
CONTROL = "control"

# grid used to invert piecewise densities
INVERSE_CDF_GRID = 4096
NORMALIZATION_TOL = 1e-8


# -- activity distributions ----------------------------------------------------


class ActivityDistribution:
    """Distribution of the activity probability ``p`` on [0, 1]."""

    #: whether the distribution has a Lebesgue density
    has_density = True

    def pdf(self, p):
        raise NotImplementedError

    def sample(self, gen: np.random.Generator) -> float:
        """Draw one ``p`` from ``gen``."""
        raise NotImplementedError

    def density_at_zero(self) -> float:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Interior points where the density is not smooth."""
        return ()

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ActivityDistribution):
    def pdf(self, p):
        p = np.asarray(p, dtype=float)
        return np.where((p >= 0) & (p <= 1), 1.0, 0.0)

    def sample(self, gen):
        return float(gen.random())

    def density_at_zero(self):
        return 1.0

    def describe(self):
        return {"type": "uniform"}


@dataclass(frozen=True)
class Beta(ActivityDistribution):
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"Beta {name} must be positive, got {getattr(self, name)}")

    def pdf(self, p):
        return stats.beta.pdf(p, self.alpha, self.beta)

    def sample(self, gen):
        return float(gen.beta(self.alpha, self.beta))

    def density_at_zero(self):
        if self.alpha > 1:
            return 0.0
        if self.alpha == 1:
            return float(self.beta)
        raise UnsupportedModelError(f"Beta({self.alpha}, {self.beta}) has an infinite density at 0")

    def describe(self):
        return {"type": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class PointMasses(ActivityDistribution):
    """Finitely many activity levels ``points`` with probabilities ``weights``."""

    points: tuple[float, ...]
    weights: tuple[float, ...]

    has_density = False

    def __init__(self, points, weights):
        object.__setattr__(self, "points", tuple(float(p) for p in points))
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))
        if len(self.points) != len(self.weights) or not self.points:
            raise ParameterError("points and weights must be nonempty and of equal length")
        if any(not 0 <= p <= 1 for p in self.points):
            raise ParameterError(f"point masses must lie in [0, 1], got {self.points}")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1) > 1e-12:
            raise ParameterError(f"weights must be nonnegative and sum to 1, got {self.weights}")
        object.__setattr__(self, "_cum", np.cumsum(self.weights))

    @classmethod
    def of(cls, *pairs) -> PointMasses:
        """``PointMasses.of((1.0, 0.5), (0.5, 0.5))``"""
        return cls([p for p, _ in pairs], [w for _, w in pairs])

    def pdf(self, p):
        raise UnsupportedModelError("point-mass distributions have no density")

    def sample(self, gen):
        i = int(np.searchsorted(self._cum, gen.random() * self._cum[-1], side="right"))
        return self.points[min(i, len(self.points) - 1)]

    def density_at_zero(self):
        raise UnsupportedModelError("point-mass distributions have no pointwise density at 0")

    def expect(self, fn) -> float:
        """Finite-sum expectation of ``fn(p)``."""
        vals = np.asarray(fn(np.asarray(self.points)), dtype=float)
        return float(np.dot(self.weights, np.broadcast_to(vals, (len(self.points),))))

    def describe(self):
        return {"type": "point_masses", "points": list(self.points), "weights": list(self.weights)}


@dataclass(frozen=True)
class PiecewiseDensity(ActivityDistribution):
    """Piecewise-constant density: ``values[i]`` on ``[edges[i], edges[i+1])``."""

    edges: tuple[float, ...]
    values: tuple[float, ...]

    def __init__(self, edges, values):
        edges = tuple(float(e) for e in edges)
        values = tuple(float(v) for v in values)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)
        if len(edges) != len(values) + 1 or len(values) < 1:
            raise ParameterError("need len(edges) == len(values) + 1")
        if edges[0] != 0.0 or edges[-1] != 1.0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ParameterError("edges must increase strictly from 0 to 1")
        if any(v < 0 for v in values):
            raise ParameterError("density values must be nonnegative")
        mass = float(np.dot(np.diff(edges), values))
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ModelError(f"density integrates to {mass!r}, not 1")

        grid = np.linspace(0.0, 1.0, INVERSE_CDF_GRID)
        cdf = np.array([self._cdf(x) for x in grid])
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_cdf_grid", cdf)

    def _cdf(self, x):
        e = np.asarray(self.edges)
        widths = np.clip(x - e[:-1], 0.0, np.diff(e))
        return float(np.dot(widths, self.values))

    def pdf(self, p):
        p = np.asarray(p, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, p, side="right") - 1, 0, len(self.values) - 1)
        out = np.asarray(self.values)[idx]
        return np.where((p >= 0) & (p <= 1), out, 0.0)

    def sample(self, gen):
        # invert the piecewise-linear interpolant of the CDF; searchsorted picks
        # the first cell whose CDF reaches u, so flat stretches are never entered
        u = gen.random()
        cdf, grid = self._cdf_grid, self._grid
        i = int(np.clip(np.searchsorted(cdf, u, side="left"), 1, len(grid) - 1))
        lo, hi = cdf[i - 1], cdf[i]
        frac = (u - lo) / (hi - lo) if hi > lo else 0.0
        return float(grid[i - 1] + frac * (grid[i] - grid[i - 1]))

    def density_at_zero(self):
        return self.values[0]

    def breakpoints(self):
        return self.edges[1:-1]

    def describe(self):
        return {"type": "piecewise", "edges": list(self.edges), "values": list(self.values)}


def distribution_from_dict(d: dict) -> ActivityDistribution:
    kind = d.get("type")
    try:
        if kind == "uniform":
            return Uniform()
        if kind == "beta":
            return Beta(float(d["alpha"]), float(d["beta"]))
        if kind == "point_masses":
            return PointMasses(d["points"], d["weights"])
        if kind == "piecewise":
            return PiecewiseDensity(d["edges"], d["values"])
    except KeyError as exc:
        raise ParameterError(f"activity_dist: missing field {exc}") from None
    raise ParameterError(f"activity_dist.type: unknown distribution {kind!r}")


# -- outcome functions ---------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """``sum(coeffs[i] * p**i)``; picklable and JSON-describable."""

    coeffs: tuple[float, ...]

    def __init__(self, *coeffs):
        if len(coeffs) == 1 and isinstance(coeffs[0], (list, tuple)):
            coeffs = coeffs[0]
        object.__setattr__(self, "coeffs", tuple(float(c) for c in coeffs) or (0.0,))

    def __call__(self, p):
        return np.polynomial.polynomial.polyval(p, self.coeffs)

    def describe(self):
        return {"type": "polynomial", "coeffs": list(self.coeffs)}


def _describe_fn(fn):
    if hasattr(fn, "describe"):
        return fn.describe()
    return {"type": "callable", "repr": repr(fn)}


def _fn_from_dict(d, name):
    if isinstance(d, (int, float)):
        return Polynomial(d)
    if isinstance(d, list):
        return Polynomial(d)
    if isinstance(d, dict) and d.get("type") == "polynomial" and "coeffs" in d:
        return Polynomial(d["coeffs"])
    raise ParameterError(f"{name}: expected a polynomial description, got {d!r}")


# -- behavior model ------------------------------------------------------------


@dataclass(frozen=True)
class Novelty:
    amplitude: float


@dataclass(frozen=True)
class BehaviorModel:
    activity_dist: ActivityDistribution
    effect_fn: Callable = field(default_factory=lambda: Polynomial(0.0, 1.0))
    control_fn: Callable = field(default_factory=lambda: Polynomial(1.0))
    noise_sd: float = 0.0
    novelty: Novelty | None = None

    def __post_init__(self):
        if not self.noise_sd >= 0:
            raise ParameterError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.novelty is not None and not math.isfinite(self.novelty.amplitude):
            raise ParameterError("novelty.amplitude must be finite")

    def describe(self) -> dict:
        return {
            "activity_dist": self.activity_dist.describe(),
            "effect_fn": _describe_fn(self.effect_fn),
            "control_fn": _describe_fn(self.control_fn),
            "noise_sd": self.noise_sd,
            "novelty": None if self.novelty is None else {"amplitude": self.novelty.amplitude},
        }

    @classmethod
    def from_dict(cls, d: dict) -> BehaviorModel:
        if "activity_dist" not in d:
            raise ParameterError("activity_dist: field is required")
        novelty = d.get("novelty")
        if novelty is not None:
            if "amplitude" not in novelty:
                raise ParameterError("novelty.amplitude: field is required")
            novelty = Novelty(float(novelty["amplitude"]))
        try:
            noise_sd = float(d.get("noise_sd", 0.0))
        except (TypeError, ValueError):
            raise ParameterError(f"noise_sd: not a number: {d.get('noise_sd')!r}") from None
        return cls(
            activity_dist=distribution_from_dict(d["activity_dist"]),
            effect_fn=_fn_from_dict(d.get("effect_fn", [0.0, 1.0]), "effect_fn"),
            control_fn=_fn_from_dict(d.get("control_fn", [1.0]), "control_fn"),
            noise_sd=noise_sd,
            novelty=novelty,
        )


def example_model(number: int) -> BehaviorModel:
    """The two simulated examples: uniform activity, effect ``p``, baseline 1,
    noise sd 0.01; example 2 adds a novelty boost of ``1 / (10 U)``."""
    if number not in (1, 2):
        raise ParameterError(f"example must be 1 or 2, got {number}")
    return BehaviorModel(
        activity_dist=Uniform(),
        effect_fn=Polynomial(0.0, 1.0),
        control_fn=Polynomial(1.0),
        noise_sd=0.01,
        novelty=Novelty(0.1) if number == 2 else None,
    )


# -- simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class SimUser:
    user_id: int
    p: float
    arm: str
    index: int  # position within the arm; keys the user's random streams


def _arm_key(arm: str, index: int) -> int:
    # separate key spaces so changing one arm's size never moves the other's streams
    return (1 if arm == TREATMENT else 2) << 40 | index


def sample_population(model: BehaviorModel, n_treat: int, n_control: int,
                      rng_seed: int) -> list[SimUser]:
    """Draw activity probabilities for ``n_treat + n_control`` users.

    Treated users get ids ``1..n_treat`` and control users
    ``n_treat+1..n_treat+n_control``.  Each user's ``p`` comes from its own
    stream keyed by (arm, index within arm).
    """
    if n_treat < 1 or n_control < 1:
        raise ParameterError(f"both arms need at least one user, got {n_treat}+{n_control}")
    streams = rngmod.KeyedStreams(rng_seed, rngmod.POPULATION)
    dist = model.activity_dist
    out = []
    for arm, n, offset in ((TREATMENT, n_treat, 0), (CONTROL, n_control, n_treat)):
        for i in range(n):
            p = dist.sample(streams.stream(_arm_key(arm, i)))
            out.append(SimUser(offset + i + 1, p, arm, i))
    return out


def generate_panel(population: Sequence[SimUser], model: BehaviorModel, k: int,
                   rng_seed: int, *, allow_short: bool = False,
                   activity_shift: float = 0.0) -> PanelDataset:
    """Simulate ``k`` days of activity and outcomes for ``population``.

    ``activity_shift`` adds a constant to every treated user's ``p`` (clipped
    to [0, 1]).  It deliberately breaks activity/assignment independence and
    exists only to exercise :func:`heavyuser.estimators.check_incrementality`.
    ``allow_short`` permits ``k == 1``, which the jackknife cannot use.
    """
    if k < 1 or (k < 2 and not allow_short):
        raise DurationError(f"k must be >= 2 (got {k}); the jackknife needs at least two days")

    streams = rngmod.KeyedStreams(rng_seed, rngmod.PANEL)
    amp = model.novelty.amplitude if model.novelty is not None else 0.0
    users = list(population)
    n = len(users)

    treated = np.array([u.arm == TREATMENT for u in users], dtype=bool)
    p = np.array([u.p for u in users], dtype=float)
    if activity_shift:
        p = np.where(treated, np.clip(p + activity_shift, 0.0, 1.0), p)

    uniforms = np.empty((n, k))
    noise = np.empty((n, k))
    for i, u in enumerate(users):
        g = streams.stream(_arm_key(u.arm, u.index))
        uniforms[i] = g.random(k)
        noise[i] = g.standard_normal(k)

    active = uniforms < p[:, None]
    tau = np.broadcast_to(np.asarray(model.effect_fn(p), dtype=float), (n,))
    base = np.broadcast_to(np.asarray(model.control_fn(p), dtype=float), (n,))
    y = base[:, None] + model.noise_sd * noise
    if amp:
        seen = np.maximum(np.cumsum(active, axis=1), 1)
        boost = 1.0 + amp / seen
    else:
        boost = 1.0
    y = y + np.where(treated[:, None], tau[:, None] * boost, 0.0)

    rows_u, rows_d = np.nonzero(active)
    ids = np.array([u.user_id for u in users], dtype=object)
    return PanelDataset(
        k=k,
        user_id=ids[rows_u],
        day=(rows_d + 1).astype(np.int64),
        outcome=y[rows_u, rows_d],
        assignment={u.user_id: u.arm == TREATMENT for u in users},
        truth={u.user_id: u.p for u in users},
    )


def simulate(model: BehaviorModel, k: int, n_treat: int, n_control: int, rng_seed: int,
             **kwargs) -> PanelDataset:
    """Population draw plus panel generation from a single seed."""
    pop = sample_population(model, n_treat, n_control, rngmod.derive_seed(rng_seed, 0))
    return generate_panel(pop, model, k, rngmod.derive_seed(rng_seed, 1), **kwargs)


def appearance_probability(p: float, k: int) -> float:
    """Chance that a user with activity ``p`` is active at least once in ``k`` days."""
    return -math.expm1(k * math.log1p(-p)) if p < 1 else 1.0

