"""Monte Carlo experiment runner.

A replication simulates one panel and applies every requested estimator.
Replication ``r`` derives all of its randomness from ``(master_seed, r)``, and
results are stored by index, so the summary does not depend on how many
workers ran or in what order they finished.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from . import analytic, estimators
from . import rng as rngmod
from .errors import HeavyUserError, ParameterError, ReplicationError
from .estimators import Method
from .model import BehaviorModel, simulate

TABLE1_COLUMNS = ("method", "example", "mean_bias", "std_error")


@dataclass(frozen=True)
class ExperimentConfig:
    model: BehaviorModel
    k: int
    n_treat: int
    n_control: int
    replications: int
    master_seed: int
    methods: tuple[Method, ...] = (Method.NAIVE, Method.JACKKNIFE, Method.BLOCK_BOOTSTRAP)
    bootstrap_replicates: int = estimators.DEFAULT_REPLICATES
    block_len: int = estimators.DEFAULT_BLOCK_LEN

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        if self.replications < 2:
            raise ParameterError(f"replications must be >= 2, got {self.replications}")
        if not self.methods:
            raise ParameterError("methods must be nonempty")
        if self.k < 2:
            raise ParameterError(f"k must be >= 2, got {self.k}")
        if self.n_treat < 1 or self.n_control < 1:
            raise ParameterError("n_treat and n_control must be >= 1")
        if Method.BLOCK_BOOTSTRAP in self.methods:
            if self.bootstrap_replicates < 2:
                raise ParameterError("bootstrap.replicates must be >= 2")
            if not 1 <= self.block_len <= self.k:
                raise ParameterError(f"bootstrap.block_len must be in 1..{self.k}")

    def with_(self, **changes) -> ExperimentConfig:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return {
            "model": self.model.describe(),
            "k": self.k,
            "n_treat": self.n_treat,
            "n_control": self.n_control,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "methods": [m.value for m in self.methods],
            "bootstrap": {"replicates": self.bootstrap_replicates, "block_len": self.block_len},
        }

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> ExperimentConfig:
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        for key in ("model", "k", "n_treat", "n_control", "replications", "master_seed"):
            if key not in d:
                raise ParameterError(f"{key}: field is required")
        boot = d.get("bootstrap", {})
        try:
            methods = tuple(Method(m) for m in d.get("methods", [m.value for m in Method]))
        except ValueError as exc:
            raise ParameterError(f"methods: {exc}") from None
        return cls(
            model=BehaviorModel.from_dict(d["model"]),
            k=int(d["k"]),
            n_treat=int(d["n_treat"]),
            n_control=int(d["n_control"]),
            replications=int(d["replications"]),
            master_seed=int(d["master_seed"]),
            methods=methods,
            bootstrap_replicates=int(boot.get("replicates", estimators.DEFAULT_REPLICATES)),
            block_len=int(boot.get("block_len", estimators.DEFAULT_BLOCK_LEN)),
        )


@dataclass(frozen=True)
class MethodSummary:
    method: Method
    mean_bias: float
    std_error: float
    replications: int
    estimates: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class MonteCarloSummary:
    truth: float
    replications: int
    methods: dict

    def __getitem__(self, method) -> MethodSummary:
        return self.methods[Method(method)]

    def to_dict(self) -> dict:
        return {
            "truth": self.truth,
            "replications": self.replications,
            "methods": {
                m.value: {"mean_bias": s.mean_bias, "std_error": s.std_error,
                          "replications": s.replications}
                for m, s in self.methods.items()
            },
        }


def replication_seed(master_seed: int, index: int) -> int:
    return rngmod.derive_seed(master_seed, rngmod.REPLICATION, index)


def run_replication(config: ExperimentConfig, index: int) -> np.ndarray:
    """Estimates for replication ``index``, in ``config.methods`` order."""
    seed = replication_seed(config.master_seed, index)
    try:
        panel = simulate(config.model, config.k, config.n_treat, config.n_control, seed)
        return np.array([
            estimators.estimate(panel, m, replicates=config.bootstrap_replicates,
                                block_len=config.block_len,
                                rng_seed=rngmod.derive_seed(seed, rngmod.BOOTSTRAP)).point
            for m in config.methods
        ])
    except HeavyUserError as exc:
        raise ReplicationError(index, exc) from exc


def _run_chunk(args):
    config, indices = args
    return [run_replication(config, i) for i in indices]


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_all(config: ExperimentConfig, workers: int) -> np.ndarray:
    n = config.replications
    if workers <= 1 or n < 2:
        rows = [run_replication(config, i) for i in range(n)]
    else:
        # contiguous chunks; results are reassembled by index below
        bounds = np.linspace(0, n, min(workers * 4, n) + 1).astype(int)
        chunks = [(config, range(a, b)) for a, b in zip(bounds, bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    return np.vstack(rows)


def summarize(estimates: np.ndarray, methods: Sequence[Method], truth: float) -> MonteCarloSummary:
    reps = estimates.shape[0]
    out = {}
    for j, m in enumerate(methods):
        col = estimates[:, j]
        out[m] = MethodSummary(m, float(col.mean() - truth),
                               float(col.std(ddof=1) / math.sqrt(reps)), reps, col.copy())
    return MonteCarloSummary(truth, reps, out)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> MonteCarloSummary:
    """Replicate the simulation and report mean bias and its standard error
    for each method.  ``truth`` is the analytic estimand, never an average of
    estimates.
    """
    truth = analytic.compute_estimand(config.model)
    return summarize(_run_all(config, workers), config.methods, truth)


@dataclass(frozen=True)
class DurationRow:
    k: int
    naive_bias: float
    naive_se: float
    jackknife_bias: float
    jackknife_se: float
    exact_bias: float
    first_order_bias: float

    COLUMNS = ("k", "naive_bias", "naive_se", "jackknife_bias", "jackknife_se",
               "exact_bias", "first_order_bias")


def bias_vs_duration(config: ExperimentConfig, k_values: Sequence[int],
                     workers: int = 1) -> list[DurationRow]:
    """Empirical naive/jackknife bias next to the analytic bias for each ``k``."""
    if not k_values:
        raise ParameterError("k_values must be nonempty")
    if any(k < 2 for k in k_values):
        raise ParameterError(f"every k must be >= 2, got {list(k_values)}")
    rows = []
    for k in k_values:
        cfg = config.with_(k=int(k), methods=(Method.NAIVE, Method.JACKKNIFE))
        summary = run_experiment(cfg, workers)
        a = analytic.analyze(config.model, int(k))
        rows.append(DurationRow(int(k), summary[Method.NAIVE].mean_bias,
                                summary[Method.NAIVE].std_error,
                                summary[Method.JACKKNIFE].mean_bias,
                                summary[Method.JACKKNIFE].std_error,
                                a.exact_bias, a.first_order_bias))
    return rows


def write_duration_csv(rows: Sequence[DurationRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DurationRow.COLUMNS)
    for r in rows:
        w.writerow([r.k] + [repr(float(getattr(r, c))) for c in DurationRow.COLUMNS[1:]])


# -- the two simulated examples ------------------------------------------------


def load_table1_config(path=None) -> dict:
    if path is None:
        text = resources.files("heavyuser").joinpath("data/table1.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)


def table1_configs(replications: int, master_seed: int, path=None) -> dict[str, ExperimentConfig]:
    doc = load_table1_config(path)
    out = {}
    for i, (name, d) in enumerate(doc["examples"].items()):
        out[name] = ExperimentConfig.from_dict(
            d, replications=replications,
            master_seed=rngmod.derive_seed(master_seed, i + 1))
    return out


def reproduce_table1(replications: int = 100, master_seed: int = 0, workers: int = 1,
                     config_path=None) -> tuple[list[tuple], dict[str, MonteCarloSummary]]:
    """Run both simulated examples.

    Returns Table-1-shaped rows ``(method, example, mean_bias, std_error)``
    ordered by method then example, and the per-example summaries.
    """
    configs = table1_configs(replications, master_seed, config_path)
    summaries = {name: run_experiment(cfg, workers) for name, cfg in configs.items()}
    methods = next(iter(configs.values())).methods
    rows = [(m.value, name, s[m].mean_bias, s[m].std_error)
            for m in methods for name, s in summaries.items()]
    return rows, summaries


def write_table1_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE1_COLUMNS)
    for method, example, bias, se in rows:
        w.writerow((method, example, repr(float(bias)), repr(float(se))))
