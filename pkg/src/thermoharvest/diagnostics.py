"""Line-delimited diagnostic records emitted by pipeline stages.

Every recoverable oddity (dropped field, unit miss, merge conflict, ...)
is recorded instead of silently discarded, so a run can be audited after
the fact.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field


SEVERITIES = ("info", "warning", "error")


@dataclass(frozen=True)
class Diagnostic:
    doi: str
    stage: str
    severity: str
    message: str

    def to_dict(self) -> dict:
        return {
            "doi": self.doi,
            "stage": self.stage,
            "severity": self.severity,
            "message": self.message,
        }


@dataclass
class DiagnosticLog:
    """Append-only collector, safe to share across worker threads."""

    records: list[Diagnostic] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    def add(self, doi: str, stage: str, severity: str, message: str) -> Diagnostic:
        if severity not in SEVERITIES:
            raise ValueError(f"unknown severity: {severity!r}")
        record = Diagnostic(doi=doi, stage=stage, severity=severity, message=message)
        with self._lock:
            self.records.append(record)
        return record

    def extend(self, other: "DiagnosticLog") -> None:
        with self._lock:
            self.records.extend(other.records)

    def by_stage(self, stage: str) -> list[Diagnostic]:
        return [r for r in self.records if r.stage == stage]

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)
