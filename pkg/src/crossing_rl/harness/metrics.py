"""Outcome statistics and their CSV form."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from ..sim import OutcomeKind


@dataclass(frozen=True)
class Metrics:
    episodes: int
    successes: int
    collisions: int
    timeouts: int
    mean_reward: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else math.nan

    @property
    def ctr(self) -> float:
        """collisions / (collisions + timeouts); NaN when neither occurred."""
        bad = self.collisions + self.timeouts
        return self.collisions / bad if bad else math.nan

    @classmethod
    def from_results(cls, results) -> "Metrics":
        kinds = [r.outcome.kind for r in results]
        n = len(kinds)
        mean = sum(r.total_reward for r in results) / n if n else math.nan
        return cls(n, kinds.count(OutcomeKind.SUCCESS), kinds.count(OutcomeKind.FAILURE),
                   kinds.count(OutcomeKind.TIMEOUT), mean)

    def as_row(self) -> dict:
        return {"episodes": self.episodes, "successes": self.successes,
                "collisions": self.collisions, "timeouts": self.timeouts,
                "success_rate": self.success_rate, "ctr": self.ctr, "mean_reward": self.mean_reward}


@dataclass(frozen=True)
class CurvePoint:
    episode: int
    metrics: Metrics

    def as_row(self) -> dict:
        return {"episode": self.episode, **self.metrics.as_row()}


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_rows(path, rows: list[dict]):
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) if v is not None else "" for v in row.values()])


def write_metrics(path, metrics: Metrics, extra: dict | None = None):
    write_rows(path, [{**(extra or {}), **metrics.as_row()}])


def write_curve(path, curve: list[CurvePoint]):
    write_rows(path, [p.as_row() for p in curve])


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
