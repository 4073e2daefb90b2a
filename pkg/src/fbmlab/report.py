"""
Check verdicts and experiment reports.

Every inequality check is one-sided: it certifies non-violation with
Monte Carlo slack, never tightness. A check passes when

    lhs <= rhs + tolerance * |rhs| + k * sqrt(se_lhs^2 + se_rhs^2)

with ``k = 3`` by default. Reports serialise to UTF-8 JSON with sorted
keys and carry a SHA-256 hash of their non-volatile content, so two runs
of the same configuration can be compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np

from fbmlab import __version__

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_MULTIPLIER = 3.0
VOLATILE_FIELDS = ("timestamp", "wall_clock_seconds", "determinism_hash")
# Slack for sides that agree up to floating-point rounding.
_ROUNDOFF = 1e-12


class Verdict(Enum):
    """Outcome of a check."""

    PASS = "pass"
    FAIL = "fail"


@dataclass
class CheckReport:
    """Both sides of an inequality with their standard errors."""

    name: str
    lhs: float
    rhs: float
    lhs_se: float = 0.0
    rhs_se: float = 0.0
    tolerance: float = 0.0
    sigma_multiplier: float = DEFAULT_SIGMA_MULTIPLIER
    exact: bool = False
    constants: dict[str, Any] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    requirements: dict[str, bool] = field(default_factory=dict)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def bound(self) -> float:
        slack = self.tolerance * abs(self.rhs) + self.sigma_multiplier * self.combined_se
        return self.rhs + slack + _ROUNDOFF * max(1.0, abs(self.rhs))

    @property
    def margin(self) -> float:
        """``bound - lhs``; non-negative exactly when the check passes."""
        return self.bound - self.lhs

    @property
    def margin_se(self) -> float:
        """Distance between the two sides in combined standard errors."""
        gap = self.rhs - self.lhs
        if self.combined_se == 0.0:
            return math.copysign(math.inf, gap) if gap != 0.0 else 0.0
        return gap / self.combined_se

    @property
    def verdict(self) -> Verdict:
        if self.lhs > self.bound or not all(self.requirements.values()):
            return Verdict.FAIL
        return Verdict.PASS

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lhs_se": self.lhs_se,
            "rhs_se": self.rhs_se,
            "combined_se": self.combined_se,
            "tolerance": self.tolerance,
            "sigma_multiplier": self.sigma_multiplier,
            "margin": self.margin,
            "margin_se": self.margin_se,
            "exact": self.exact,
            "verdict": self.verdict.value,
            "constants": self.constants,
            "details": self.details,
            "requirements": self.requirements,
        }


@dataclass
class Table:
    """Plot-ready tabular output."""

    header: list[str]
    rows: list[list[Any]] = field(default_factory=list)

    def add(self, *values: Any) -> None:
        if len(values) != len(self.header):
            raise ValueError(
                f"row has {len(values)} values, table has {len(self.header)} columns"
            )
        self.rows.append(list(values))


@dataclass
class ExperimentReport:
    """Everything needed to reproduce and judge one CLI run."""

    command: str
    config: dict[str, Any]
    results: dict[str, Any] = field(default_factory=dict)
    checks: list[CheckReport] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    version: str = __version__
    timestamp: str = ""
    wall_clock_seconds: float = 0.0

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    @property
    def verdict(self) -> Verdict:
        if any(not check.passed for check in self.checks):
            return Verdict.FAIL
        return Verdict.PASS

    @property
    def exit_code(self) -> int:
        return 0 if self.verdict is Verdict.PASS else 1

    def to_dict(self, include_volatile: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "checks": [check.to_dict() for check in self.checks],
            "tables": {
                name: {"header": table.header, "rows": table.rows}
                for name, table in self.tables.items()
            },
            "notes": self.notes,
            "verdict": self.verdict.value,
            "version": self.version,
        }
        if include_volatile:
            data["timestamp"] = self.timestamp
            data["wall_clock_seconds"] = self.wall_clock_seconds
            data["determinism_hash"] = self.determinism_hash()
        return to_jsonable(data)

    def determinism_hash(self) -> str:
        """SHA-256 of the canonical JSON without volatile fields."""
        canonical = json.dumps(
            self.to_dict(include_volatile=False),
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")
        logger.info("Wrote report %s", path)


def write_csv(path: str | Path, table: Table) -> None:
    """Comma-separated, ``.`` decimal, header row, LF line endings."""
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_csv_cell(value) for value in row])
    logger.info("Wrote table %s (%d rows)", path, len(table.rows))


def to_jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats into JSON-safe objects."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


# ----------------------------------------------------------------------
# Internal helpers
# ----------------------------------------------------------------------


def _csv_cell(value: Optional[Any]) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)
