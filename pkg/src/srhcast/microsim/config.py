"""Scenario configuration: migration schedules, TFR schedule, seeds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import UnknownScenario

BASE_YEAR = 2022

# Net international migration anchors (persons per annum); values between
# anchors fall on the equal-annual-step line, constant outside.
MIGRATION_ANCHORS: dict[str, tuple[tuple[int, int], ...]] = {
    "M1": ((2022, 75_000), (2027, 45_000)),
    "M2": ((2022, 75_000), (2032, 30_000)),
    "M3": ((2022, 75_000), (2027, 25_000), (2032, 10_000)),
}


def net_migration_target(scenario: str, year: int, base_year: int = BASE_YEAR) -> int:
    """Net international migration (persons) for the scenario and year.

    `base_year` shifts the anchor years so non-2022 simulations can reuse
    the schedules; the anchor values themselves are fixed.
    """
    try:
        anchors = MIGRATION_ANCHORS[scenario]
    except KeyError:
        raise UnknownScenario(scenario) from None
    offset = base_year - BASE_YEAR
    years = [y + offset for y, _ in anchors]
    values = [v for _, v in anchors]
    if year <= years[0]:
        return values[0]
    if year >= years[-1]:
        return values[-1]
    return int(round(float(np.interp(year, years, values))))


@dataclass(frozen=True)
class TfrSchedule:
    """Total Fertility Rate by year: linear between anchors, flat outside."""

    anchors: tuple[tuple[int, float], ...] = ((2022, 1.55), (2038, 1.3))

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("need at least one TFR anchor")
        years = [y for y, _ in self.anchors]
        if sorted(years) != years or len(set(years)) != len(years):
            raise ValueError("anchor years must be strictly increasing")
        for _, v in self.anchors:
            if not 0.0 < v < 5.0:
                raise ValueError(f"TFR {v} outside (0, 5)")

    def tfr_at(self, year: int) -> float:
        years = [y for y, _ in self.anchors]
        values = [v for _, v in self.anchors]
        if year <= years[0]:
            return values[0]
        if year >= years[-1]:
            return values[-1]
        return float(np.interp(year, years, values))

    def scale_at(self, year: int) -> float:
        """Fertility-profile scaling factor; 1.0 at the first anchor year."""
        return self.tfr_at(year) / self.anchors[0][1]

    @classmethod
    def from_mapping(cls, mapping) -> "TfrSchedule":
        anchors = tuple(sorted((int(y), float(v)) for y, v in dict(mapping).items()))
        return cls(anchors)


# Tables the engine looks up by name in `rate_table_paths`.
TABLE_NAMES = (
    "mortality",
    "internal_flows",
    "internal_profile",
    "emigration_rate",
    "emigrant_profile",
    "immigrant_profile",
    "immigrant_dest_weights",
    "fertility",
    "separation_rate",
    "marriage_rate",
    "dropout",
    "completion_time",
    "parental_transmission",
    "post_exit_status",
    "adult_returner_rate",
    "returner_profile",
    "employment_transitions",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines one microsimulation run."""

    migration_scenario: str
    start_year: int
    end_year: int
    seed: int
    tfr_schedule: TfrSchedule = field(default_factory=TfrSchedule)
    rate_table_paths: dict = field(default_factory=dict)
    runs: int = 1
    # Scales the absolute net-migration anchors for scaled-down synthetic
    # worlds; 1.0 reproduces the published schedules exactly.
    migration_scale: float = 1.0

    def __post_init__(self):
        if self.migration_scenario not in MIGRATION_ANCHORS:
            raise UnknownScenario(self.migration_scenario)
        if not self.start_year <= self.end_year <= self.start_year + 50:
            raise ValueError(
                f"need start_year <= end_year <= start_year+50,"
                f" got {self.start_year}..{self.end_year}"
            )
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.migration_scale <= 0:
            raise ValueError("migration_scale must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "migration_scenario": self.migration_scenario,
                "start_year": self.start_year,
                "end_year": self.end_year,
                "seed": self.seed,
                "tfr_schedule": {str(y): v for y, v in self.tfr_schedule.anchors},
                "rate_table_paths": dict(self.rate_table_paths),
                "runs": self.runs,
                "migration_scale": self.migration_scale,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        doc = json.loads(text)
        return cls(
            migration_scenario=doc["migration_scenario"],
            start_year=int(doc["start_year"]),
            end_year=int(doc["end_year"]),
            seed=int(doc["seed"]),
            tfr_schedule=TfrSchedule.from_mapping(doc.get("tfr_schedule", {2022: 1.55, 2038: 1.3})),
            rate_table_paths=dict(doc.get("rate_table_paths", {})),
            runs=int(doc.get("runs", 1)),
            migration_scale=float(doc.get("migration_scale", 1.0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())
