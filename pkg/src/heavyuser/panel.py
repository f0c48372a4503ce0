"""Panel datasets: per-user-per-day activity records with arm assignment.

A panel stores only active user-days.  Estimators work on a dense
``users x days`` view built once per panel (see :class:`ArmView`); users that
are in ``assignment`` but never active are dropped from that view, which is
exactly the "appearing users only" rule.

CSV layout (also the ingestion format for real data)::

    user_id,day,outcome,treated
    1,1,1.71,1
    ...
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParameterError, PanelFormatError

CSV_HEADER = ("user_id", "day", "outcome", "treated")


@dataclass(frozen=True)
class ArmView:
    """Dense view of the appearing users of one arm.

    ``active[i, t]`` is True when user ``i`` was active on day ``t + 1``;
    ``outcome[i, t]`` is the outcome on that day, 0 when inactive.
    """

    users: tuple
    active: np.ndarray
    outcome: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    k: int
    user_id: np.ndarray
    day: np.ndarray
    outcome: np.ndarray
    assignment: Mapping[object, bool]
    truth: Mapping[object, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k}")
        n = len(self.user_id)
        if not (len(self.day) == len(self.outcome) == n):
            raise ParameterError("user_id, day and outcome columns differ in length")
        if n and (self.day.min() < 1 or self.day.max() > self.k):
            raise ParameterError(f"days must lie in 1..{self.k}")
        missing = set(self.user_id.tolist()) - set(self.assignment)
        if missing:
            raise ParameterError(f"users without assignment: {sorted(missing, key=str)[:5]}")

    @classmethod
    def from_rows(cls, k, rows, assignment, truth=None) -> PanelDataset:
        """Build from an iterable of ``(user_id, day, outcome)`` tuples."""
        rows = list(rows)
        users = np.array([r[0] for r in rows], dtype=object) if rows else np.empty(0, dtype=object)
        day = np.array([r[1] for r in rows], dtype=np.int64)
        outcome = np.array([r[2] for r in rows], dtype=np.float64)
        panel = cls(k, users, day, outcome, dict(assignment), truth)
        panel._check_unique()
        return panel

    def _check_unique(self):
        seen = set()
        for u, d in zip(self.user_id.tolist(), self.day.tolist()):
            if (u, d) in seen:
                raise ParameterError(f"duplicate row for user {u!r} on day {d}")
            seen.add((u, d))

    @property
    def n_rows(self) -> int:
        return len(self.user_id)

    def rows(self):
        for u, d, y in zip(self.user_id.tolist(), self.day.tolist(), self.outcome.tolist()):
            yield u, d, y

    def with_outcomes(self, outcome) -> PanelDataset:
        """Same activity pattern, new outcome column."""
        outcome = np.asarray(outcome, dtype=np.float64)
        return PanelDataset(self.k, self.user_id, self.day, outcome, self.assignment, self.truth)

    @cached_property
    def arms(self) -> tuple[ArmView, ArmView]:
        """``(treatment, control)`` dense views over appearing users."""
        # map user ids to dense indices in order of first appearance
        index: dict = {}
        for u in self.user_id.tolist():
            if u not in index:
                index[u] = len(index)
        treated = np.array([bool(self.assignment[u]) for u in index], dtype=bool)
        local = np.empty(len(index), dtype=np.int64)
        local[treated] = np.arange(treated.sum())
        local[~treated] = np.arange((~treated).sum())
        order = list(index)

        rows_idx = np.fromiter((index[u] for u in self.user_id.tolist()), dtype=np.int64,
                               count=self.n_rows)
        cols = self.day.astype(np.int64) - 1
        views = []
        for flag in (True, False):
            mask = treated[rows_idx] == flag
            n = int((treated == flag).sum())
            active = np.zeros((n, self.k), dtype=bool)
            outcome = np.zeros((n, self.k), dtype=np.float64)
            r = local[rows_idx[mask]]
            active[r, cols[mask]] = True
            outcome[r, cols[mask]] = self.outcome[mask]
            users = tuple(u for u, t in zip(order, treated) if t == flag)
            views.append(ArmView(users, active, outcome))
        return views[0], views[1]

    def active_days(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-user active-day counts for appearing users of each arm."""
        t, c = self.arms
        return t.active.sum(axis=1), c.active.sum(axis=1)

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for u, d, y in self.rows():
            w.writerow((u, d, repr(float(y)), int(bool(self.assignment[u]))))
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path, k: int | None = None) -> PanelDataset:
        """Parse a panel CSV.

        ``k`` defaults to the sidecar JSON's ``k`` when present, otherwise to
        the largest day in the file.
        """
        path = Path(path)
        if k is None:
            meta = read_sidecar(path)
            if meta is not None and "k" in meta:
                k = int(meta["k"])
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.parse_csv(fh, k)

    @classmethod
    def parse_csv(cls, fh, k: int | None = None) -> PanelDataset:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError("empty file", line=1) from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise PanelFormatError(f"expected header {','.join(CSV_HEADER)}", line=1)

        rows = []
        assignment: dict = {}
        seen = set()
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise PanelFormatError(f"expected 4 fields, got {len(rec)}", line=line_no)
            uid, day_s, y_s, z_s = (x.strip() for x in rec)
            uid = _parse_user_id(uid)
            try:
                day = int(day_s)
            except ValueError:
                raise PanelFormatError(f"day {day_s!r} is not an integer", line=line_no) from None
            if day < 1 or (k is not None and day > k):
                bound = f"1..{k}" if k is not None else ">= 1"
                raise PanelFormatError(f"day {day} outside {bound}", line=line_no)
            try:
                y = float(y_s)
            except ValueError:
                raise PanelFormatError(f"outcome {y_s!r} is not a number", line=line_no) from None
            if not math.isfinite(y):
                raise PanelFormatError(f"outcome {y_s!r} is not finite", line=line_no)
            if z_s not in ("0", "1"):
                raise PanelFormatError(f"treated must be 0 or 1, got {z_s!r}", line=line_no)
            z = z_s == "1"
            if assignment.setdefault(uid, z) != z:
                raise PanelFormatError(f"user {uid!r} appears in both arms", line=line_no)
            if (uid, day) in seen:
                raise PanelFormatError(f"duplicate row for user {uid!r} day {day}", line=line_no)
            seen.add((uid, day))
            rows.append((uid, day, y))

        if not rows:
            raise PanelFormatError("no data rows")
        if k is None:
            k = max(r[1] for r in rows)
        users = np.array([r[0] for r in rows], dtype=object)
        day = np.array([r[1] for r in rows], dtype=np.int64)
        outcome = np.array([r[2] for r in rows], dtype=np.float64)
        return cls(k, users, day, outcome, assignment)


def _parse_user_id(text: str):
    # integer-looking ids round-trip as ints so simulated panels compare equal
    try:
        return int(text)
    except ValueError:
        return text


def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.name + ".json")


def write_sidecar(csv_path, meta: dict) -> Path:
    out = sidecar_path(csv_path)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_sidecar(csv_path) -> dict | None:
    p = sidecar_path(csv_path)
    if not p.exists():
        return None
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)
