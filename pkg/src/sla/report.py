"""Structured results of verification and benchmark runs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _jsonable(value):
    # non-finite floats become strings so strict JSON parsers accept the output
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class RunReport:
    """A named list of cases (flat dicts) with an overall verdict.

    A case counts as failed when it carries ``passed=False``.
    """

    name: str
    cases: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    columns: list[str] | None = None

    def add(self, **case) -> dict:
        self.cases.append(case)
        return case

    @property
    def passed(self) -> bool:
        return all(c.get("passed", True) for c in self.cases)

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.cases if not c.get("passed", True)]

    def to_dict(self) -> dict:
        return _jsonable({"name": self.name, "passed": self.passed, "meta": self.meta,
                          "cases": self.cases})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    def to_csv(self) -> str:
        cols = self.columns
        if cols is None:
            cols = []
            for case in self.cases:
                cols.extend(k for k in case if k not in cols)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for case in self.cases:
            writer.writerow({k: _jsonable(case.get(k, "")) for k in cols})
        return buf.getvalue()

    def write(self, path, fmt: str | None = None) -> Path:
        path = Path(path)
        fmt = fmt or ("csv" if path.suffix == ".csv" else "json")
        text = self.to_csv() if fmt == "csv" else self.to_json()
        path.write_text(text)
        return path
