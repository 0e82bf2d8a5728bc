"""Per-stage call statistics for staged predicates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List


@dataclass
class StageStats:
    """Counters for one predicate's stage cascade.

    Conservation invariants: certifications + failures == calls per stage,
    and stage k receives exactly the failures of stage k-1.
    """

    predicate: str
    stage_names: List[str]
    calls: List[int] = field(default_factory=list)
    certifications: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.calls:
            self.calls = [0] * len(self.stage_names)
        if not self.certifications:
            self.certifications = [0] * len(self.stage_names)

    def failures(self, k: int) -> int:
        return self.calls[k] - self.certifications[k]

    def record(self, stage_index: int) -> None:
        """Record one call decided at ``stage_index`` (0-based)."""
        for k in range(stage_index + 1):
            self.calls[k] += 1
        self.certifications[stage_index] += 1

    def merge(self, other: "StageStats") -> None:
        if other.stage_names != self.stage_names:
            raise ValueError("cannot merge stats with different stage lists")
        for k in range(len(self.calls)):
            self.calls[k] += other.calls[k]
            self.certifications[k] += other.certifications[k]

    def check_conservation(self) -> None:
        for k in range(len(self.calls)):
            if self.certifications[k] > self.calls[k]:
                raise AssertionError(f"stage {k}: more certifications than calls")
            if k + 1 < len(self.calls) and self.calls[k + 1] != self.failures(k):
                raise AssertionError(
                    f"stage {k + 1} calls != stage {k} failures"
                )

    def total_calls(self) -> int:
        return self.calls[0] if self.calls else 0

    def rows(self):
        for k, name in enumerate(self.stage_names):
            yield (
                self.predicate,
                k + 1,
                name,
                self.calls[k],
                self.certifications[k],
                self.failures(k),
            )
