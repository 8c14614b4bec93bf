"""Residual records, aggregation and report serialization.

JSON layout (stable)::

    {
      "records":     [Record, ...],   # gating checks
      "diagnostics": [Record, ...],   # reported, never gating
      "summary":     {"pass": int, "fail": int, "skipped": int, "line": str},
      "info":        {...},           # classification counts, invariance
      "config":      {...},           # model, seed, tolerances, suites, ...
      "timestamp":   str              # excluded from the determinism guarantee
    }

A Record has the keys ``suite identity max_residual worst_point tolerance
status reason n_evaluated n_skipped``.  ``status`` is ``pass``, ``fail``
or ``skipped``; ``max_residual`` is ``null`` when nothing was evaluated
or the residual is not finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
RECORD_KEYS = ("suite", "identity", "max_residual", "worst_point", "tolerance", "status", "reason",
               "n_evaluated", "n_skipped")


def sig6(x: float) -> float:
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class Record:
    suite: str
    identity: str
    max_residual: float | None
    worst_point: list | None
    tolerance: float
    status: str
    reason: str = ""
    n_evaluated: int = 0
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def make_record(suite: str, identity: str, values, points, tolerance: float,
                evaluated=None, skip_reason: str = "") -> Record:
    """Max-reduce per-point residuals into a record.

    Points outside ``evaluated`` count as skipped (with ``skip_reason``);
    a non-finite residual at an evaluated point is a failure there.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    points = np.asarray(points, dtype=float).reshape(len(values), -1)
    evaluated = np.ones(len(values), bool) if evaluated is None else np.asarray(evaluated, bool).reshape(-1)
    n_eval = int(evaluated.sum())
    n_skip = len(values) - n_eval
    if n_eval == 0:
        return Record(suite, identity, None, None, tolerance, SKIPPED, skip_reason or "skipped: no points",
                      0, n_skip)
    vals = np.where(evaluated, values, -np.inf)
    bad = evaluated & ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return Record(suite, identity, None, [sig6(x) for x in points[i]], tolerance, FAIL,
                      "non-finite residual", n_eval, n_skip)
    i = int(np.argmax(vals))
    worst = float(vals[i])
    status = PASS if worst <= tolerance else FAIL
    reason = f"{n_skip} point(s) {skip_reason.removeprefix('skipped: ')}" if n_skip and skip_reason else ""
    return Record(suite, identity, worst, [sig6(x) for x in points[i]], tolerance, status, reason,
                  n_eval, n_skip)


def error_record(suite: str, identity: str, message: str, point=None, tolerance: float = 0.0,
                 n_points: int = 0) -> Record:
    wp = None if point is None else [sig6(x) for x in np.ravel(point)]
    return Record(suite, identity, None, wp, tolerance, FAIL, message, 0, n_points)


def skipped_record(suite: str, identity: str, reason: str, tolerance: float, n_points: int) -> Record:
    return Record(suite, identity, None, None, tolerance, SKIPPED, reason, 0, n_points)


def merge(a: Record, b: Record) -> Record:
    """Associative max-merge of two partial records for the same check."""
    if (a.suite, a.identity) != (b.suite, b.identity):
        raise ValueError("cannot merge records of different checks")
    n_eval, n_skip = a.n_evaluated + b.n_evaluated, a.n_skipped + b.n_skipped
    if a.status == FAIL and a.max_residual is None:
        return Record(**{**a.to_dict(), "n_evaluated": n_eval, "n_skipped": n_skip})
    if b.status == FAIL and b.max_residual is None:
        return Record(**{**b.to_dict(), "n_evaluated": n_eval, "n_skipped": n_skip})
    if a.max_residual is None:
        best = b
    elif b.max_residual is None:
        best = a
    else:
        best = a if a.max_residual >= b.max_residual else b
    if best.max_residual is None:
        status = SKIPPED
    else:
        status = PASS if best.max_residual <= best.tolerance else FAIL
    return Record(best.suite, best.identity, best.max_residual, best.worst_point, best.tolerance, status,
                  best.reason or a.reason or b.reason, n_eval, n_skip)


@dataclass
class Report:
    records: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    timestamp: str = ""

    def summary(self) -> dict:
        counts = {s: sum(r.status == s for r in self.records) for s in (PASS, FAIL, SKIPPED)}
        counts["line"] = f"{counts[PASS]} pass / {counts[FAIL]} fail / {counts[SKIPPED]} skipped"
        return counts

    @property
    def ok(self) -> bool:
        return all(r.status != FAIL for r in self.records)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "diagnostics": [r.to_dict() for r in self.diagnostics],
            "summary": self.summary(),
            "info": self.info,
            "config": self.config,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls([Record(**r) for r in data["records"]], [Record(**r) for r in data["diagnostics"]],
                   data.get("info", {}), data.get("config", {}), data.get("timestamp", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        rows = [("suite", "identity", "status", "max_residual", "tolerance", "worst_point", "note")]
        for group, recs in (("", self.records), ("diagnostic ", self.diagnostics)):
            for r in recs:
                res = "-" if r.max_residual is None else f"{r.max_residual:.3e}"
                wp = "-" if r.worst_point is None else "(" + ", ".join(f"{x:g}" for x in r.worst_point) + ")"
                status = r.status if not group else "info"
                rows.append((r.suite, group + r.identity, status, res, f"{r.tolerance:.1e}", wp, r.reason))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]) - 1)]
        lines = []
        for row in rows:
            cells = [c.ljust(w) for c, w in zip(row[:-1], widths)]
            lines.append("  ".join(cells + [row[-1]]).rstrip())
        lines.insert(1, "-" * len(lines[0]))
        lines.append("")
        lines.append(self.summary()["line"])
        return "\n".join(lines) + "\n"


def finite_or_none(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None
