"""Categorical data model for individuals, SRH distributions and cohorts.

Category codes follow the short source-code values used throughout the
data files (F/M, MAR/SGL/SEP/WID, NF..D, W/S/LAHF/R/UTWSD/OTH/UNE).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    IneligibleIndividual,
    InvalidDistribution,
    UnderageIndividual,
    UnknownStatusLabel,
)

SEXES = ("F", "M")
MARITAL_STATUSES = ("MAR", "SGL", "SEP", "WID")
CITIZENSHIPS = ("IE", "UK", "EU", "RW")

# Attainment order; NA is reserved for children with no schooling yet.
EDUCATION_LEVELS = ("NA", "NF", "P", "LS", "US", "PLC", "HC", "DEG", "PD", "D")
# Numeric education scale over the nine attainable levels, NF=0 .. D=8.
EDUCATION_SCALE = {lvl: i for i, lvl in enumerate(EDUCATION_LEVELS[1:])}

ECONOMIC_STATUSES = ("NA", "W", "S", "LAHF", "R", "UTWSD", "OTH", "UNE")
# The seven statuses an adult can hold (children's NA excluded).
ADULT_STATUSES = ("W", "S", "LAHF", "R", "UTWSD", "OTH", "UNE")

SRH_LABELS = ("Very Good", "Good", "Fair", "Bad", "Very Bad")
N_SRH = 5
SRH_CODES = np.arange(N_SRH)

MAX_AGE = 105
ADULT_AGE = 15  # SRH eligibility / adulthood threshold

# Long historical labels -> short economic status codes.
HISTORICAL_STATUS_MAP = {
    "unemployed looking for first regular job": "UNE",
    "unemployed having lost or given up previous job": "UNE",
    "student or pupil": "S",
    "looking after home/family": "LAHF",
    "retired": "R",
    "unable to work due to permanent sickness or disability": "UTWSD",
    "employer or own account worker": "W",
    "employee": "W",
    "assisting relative": "W",
    "other": "OTH",
}

POPULATION_COLUMNS = (
    "id",
    "age",
    "sex",
    "marital_status",
    "citizenship",
    "moved_last_year",
    "education",
    "economic_status",
    "area_id",
    "spouse_id",
    "graduation_year",
)


@dataclass(frozen=True)
class Individual:
    """One simulated person; immutable value object."""

    id: int
    age: int
    sex: str
    marital_status: str
    citizenship: str
    moved_last_year: bool
    education: str
    economic_status: str
    area_id: str
    spouse_id: int | None = None
    graduation_year: int | None = None

    def __post_init__(self):
        if not 0 <= self.age <= MAX_AGE:
            raise ValueError(f"age {self.age} outside [0, {MAX_AGE}]")
        _check_category("sex", self.sex, SEXES)
        _check_category("marital_status", self.marital_status, MARITAL_STATUSES)
        _check_category("citizenship", self.citizenship, CITIZENSHIPS)
        _check_category("education", self.education, EDUCATION_LEVELS)
        _check_category("economic_status", self.economic_status, ECONOMIC_STATUSES)
        if self.age < ADULT_AGE and self.economic_status not in ("NA", "S"):
            raise ValueError(
                f"child aged {self.age} has economic status {self.economic_status};"
                " only NA or S (school enrolment) allowed"
            )
        if self.graduation_year is not None and self.economic_status != "S":
            raise ValueError("graduation_year set for a non-student")


def _check_category(name: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ValueError(f"{name} {value!r} not one of {allowed}")


@dataclass(frozen=True)
class SrhDistribution:
    """Five non-negative proportions over Very Good..Very Bad, summing to 1."""

    proportions: tuple[float, float, float, float, float]

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (N_SRH,):
            raise InvalidDistribution(f"expected {N_SRH} proportions, got {p.shape}")
        if np.any(p < 0):
            raise InvalidDistribution(f"negative proportion in {p}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidDistribution(f"proportions sum to {p.sum()!r}, not 1")

    @classmethod
    def from_array(cls, values) -> "SrhDistribution":
        return cls(tuple(float(v) for v in values))

    @classmethod
    def from_counts(cls, counts) -> "SrhDistribution":
        c = np.asarray(counts, dtype=float)
        total = c.sum()
        if total <= 0:
            raise InvalidDistribution("counts sum to zero")
        return cls.from_array(c / total)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.proportions, dtype=float)


def mean_srh(dist) -> float:
    """Expected ordinal SRH code (0 = Very Good .. 4 = Very Bad)."""
    if isinstance(dist, SrhDistribution):
        p = dist.as_array()
    else:
        p = SrhDistribution.from_array(dist).as_array()
    return float(p @ SRH_CODES)


@dataclass(frozen=True)
class CohortBanding:
    """Age banding for cohorts: fixed-width bands from `start`, open top band."""

    start: int = 15
    width: int = 5
    top: int = 85  # lower bound of the open-ended band

    def __post_init__(self):
        if self.start < ADULT_AGE:
            raise ValueError(f"banding starts below eligibility age {ADULT_AGE}")
        if self.width < 1 or self.top <= self.start:
            raise ValueError("invalid banding")
        if (self.top - self.start) % self.width != 0:
            raise ValueError("top band must align with the band width")

    def label(self, age: int) -> str:
        if age < self.start:
            raise UnderageIndividual(f"age {age} below banding start {self.start}")
        if age >= self.top:
            return f"{self.top}+"
        low = self.start + ((age - self.start) // self.width) * self.width
        return f"{low}-{low + self.width - 1}"

    def labels(self) -> tuple[str, ...]:
        lows = range(self.start, self.top, self.width)
        return tuple(f"{lo}-{lo + self.width - 1}" for lo in lows) + (f"{self.top}+",)


DEFAULT_BANDING = CohortBanding()


@dataclass(frozen=True)
class CohortKey:
    """(5-year age group, sex, economic status) cell of the 15+ population."""

    age_group: str
    sex: str
    economic_status: str


def cohort_of(individual: Individual, banding: CohortBanding = DEFAULT_BANDING) -> CohortKey:
    """Cohort cell of an eligible individual (15+, non-NA status)."""
    if individual.age < banding.start:
        raise UnderageIndividual(f"age {individual.age} below {banding.start}")
    if individual.economic_status == "NA":
        raise IneligibleIndividual("economic status NA has no cohort")
    return CohortKey(banding.label(individual.age), individual.sex, individual.economic_status)


def map_economic_status(historical_label: str) -> str:
    """Map a long historical economic-status label to its short code."""
    key = " ".join(historical_label.split()).lower()
    try:
        return HISTORICAL_STATUS_MAP[key]
    except KeyError:
        raise UnknownStatusLabel(historical_label) from None


def srh_code(value) -> int:
    """Normalize an SRH label or code to the 0..4 ordinal code."""
    if isinstance(value, str):
        label = " ".join(value.split()).title()
        if label in SRH_LABELS:
            return SRH_LABELS.index(label)
        value = value.strip()
    code = int(value)
    if not 0 <= code < N_SRH:
        raise ValueError(f"SRH code {value!r} outside 0..4")
    return code


# -- population CSV ----------------------------------------------------------

def individuals_to_frame(individuals) -> pd.DataFrame:
    rows = [[getattr(ind, f.name) for f in fields(Individual)] for ind in individuals]
    df = pd.DataFrame(rows, columns=list(POPULATION_COLUMNS))
    df["spouse_id"] = df["spouse_id"].astype("Int64")
    df["graduation_year"] = df["graduation_year"].astype("Int64")
    return df


def frame_to_individuals(df: pd.DataFrame) -> list[Individual]:
    missing = set(POPULATION_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"population frame missing columns {sorted(missing)}")
    out = []
    for row in df.itertuples(index=False):
        out.append(
            Individual(
                id=int(row.id),
                age=int(row.age),
                sex=str(row.sex),
                marital_status=str(row.marital_status),
                citizenship=str(row.citizenship),
                moved_last_year=_as_bool(row.moved_last_year),
                education=str(row.education),
                economic_status=str(row.economic_status),
                area_id=str(row.area_id),
                spouse_id=None if pd.isna(row.spouse_id) else int(row.spouse_id),
                graduation_year=None if pd.isna(row.graduation_year) else int(row.graduation_year),
            )
        )
    return out


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("true", "1", "t", "yes")
    return bool(value)


def write_population_csv(individuals, path) -> None:
    individuals_to_frame(individuals).to_csv(path, index=False)


def read_population_csv(path) -> list[Individual]:
    # keep_default_na: the literal "NA" is a real category, not a missing value
    df = pd.read_csv(
        Path(path), dtype={"area_id": str}, keep_default_na=False, na_values=[""]
    )
    return frame_to_individuals(df)
