"""Column-first population store for the simulation engine.

Fields live in parallel numpy arrays (one per characteristic), kept in
ascending-id order so stochastic draws are reproducible regardless of how
the state was built. `Individual` remains the row-level value object at
the interfaces; conversion happens only at CSV/test boundaries.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from ..geography import Geography
from ..population import (
    ADULT_AGE,
    CITIZENSHIPS,
    ECONOMIC_STATUSES,
    EDUCATION_LEVELS,
    Individual,
    MARITAL_STATUSES,
    MAX_AGE,
    POPULATION_COLUMNS,
    SEXES,
)

SEX_INDEX = {v: i for i, v in enumerate(SEXES)}
MARITAL_INDEX = {v: i for i, v in enumerate(MARITAL_STATUSES)}
CITIZENSHIP_INDEX = {v: i for i, v in enumerate(CITIZENSHIPS)}
EDUCATION_INDEX = {v: i for i, v in enumerate(EDUCATION_LEVELS)}
STATUS_INDEX = {v: i for i, v in enumerate(ECONOMIC_STATUSES)}

SEX_F = SEX_INDEX["F"]
SEX_M = SEX_INDEX["M"]
MAR = MARITAL_INDEX["MAR"]
SGL = MARITAL_INDEX["SGL"]
SEP = MARITAL_INDEX["SEP"]
WID = MARITAL_INDEX["WID"]
EDU_NA = EDUCATION_INDEX["NA"]
EDU_NF = EDUCATION_INDEX["NF"]
EDU_P = EDUCATION_INDEX["P"]
EDU_D = EDUCATION_INDEX["D"]
STATUS_NA = STATUS_INDEX["NA"]
STATUS_W = STATUS_INDEX["W"]
STATUS_S = STATUS_INDEX["S"]
CITIZEN_IE = CITIZENSHIP_INDEX["IE"]

# 5-year age bands from birth, open-ended at 85+; rate-table convention.
AGE_BANDS_ALL = tuple(f"{lo}-{lo + 4}" for lo in range(0, 85, 5)) + ("85+",)


def age_band_positions(ages: np.ndarray) -> np.ndarray:
    """Index into AGE_BANDS_ALL for each age."""
    return np.minimum(np.asarray(ages, dtype=np.int64) // 5, len(AGE_BANDS_ALL) - 1)


def study_level(education: np.ndarray) -> np.ndarray:
    """Level a student with this attainment is studying for.

    NA and NF attainments study Primary; otherwise the next level up.
    Returns -1 where there is no next level (doctorate holders).
    """
    edu = np.asarray(education, dtype=np.int64)
    nxt = np.where(edu <= EDU_NF, EDU_P, edu + 1)
    return np.where(edu >= EDU_D, -1, nxt)


_COLUMN_SPECS = (
    ("id", np.int64),
    ("age", np.int16),
    ("sex", np.int8),
    ("marital", np.int8),
    ("citizenship", np.int8),
    ("moved", np.bool_),
    ("education", np.int8),
    ("status", np.int8),
    ("area", np.int32),
    ("spouse", np.int64),
    ("grad_year", np.int16),
    ("lifetime_edu", np.int8),
)


class PopulationState:
    """Mutable columnar population plus the year, geography and RNG key."""

    def __init__(self, year: int, geography: Geography, seed: int = 0, run_index: int = 0, **arrays):
        self.year = int(year)
        self.geography = geography
        self.seed = int(seed)
        self.run_index = int(run_index)
        n = len(arrays.get("id", ()))
        for name, dtype in _COLUMN_SPECS:
            arr = np.asarray(arrays.get(name, np.zeros(n)), dtype=dtype)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        if n and not np.all(np.diff(self.id) > 0):
            order = np.argsort(self.id, kind="stable")
            for name, _ in _COLUMN_SPECS:
                setattr(self, name, getattr(self, name)[order])
        self.next_id = int(self.id.max()) + 1 if n else 0
        # newborn id -> mother's education code; fertility writes, education reads
        self.newborn_mother_edu: dict[int, int] = {}

    # -- basics -----------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.id)

    def __len__(self) -> int:
        return len(self.id)

    def copy(self) -> "PopulationState":
        clone = PopulationState(
            self.year,
            self.geography,
            seed=self.seed,
            run_index=self.run_index,
            **{name: getattr(self, name).copy() for name, _ in _COLUMN_SPECS},
        )
        clone.next_id = self.next_id
        clone.newborn_mother_edu = dict(self.newborn_mother_edu)
        return clone

    def id_index(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.id)}

    def rows_of_ids(self, ids: np.ndarray) -> np.ndarray:
        """Row positions of the given ids (which must all exist)."""
        pos = np.searchsorted(self.id, ids)
        pos = np.minimum(pos, max(self.size - 1, 0))
        if self.size == 0 or np.any(self.id[pos] != ids):
            raise KeyError("unknown individual id")
        return pos

    def keep(self, mask: np.ndarray) -> None:
        for name, _ in _COLUMN_SPECS:
            setattr(self, name, getattr(self, name)[mask])

    def append(self, **arrays) -> np.ndarray:
        """Add individuals with fresh ids; returns the new ids."""
        n_new = len(arrays["age"])
        new_ids = np.arange(self.next_id, self.next_id + n_new, dtype=np.int64)
        self.next_id += n_new
        defaults = {
            "id": new_ids,
            "spouse": np.full(n_new, -1, dtype=np.int64),
            "grad_year": np.full(n_new, -1, dtype=np.int16),
            "lifetime_edu": np.full(n_new, -1, dtype=np.int8),
            "moved": np.zeros(n_new, dtype=bool),
        }
        for name, dtype in _COLUMN_SPECS:
            source = arrays.get(name, defaults.get(name))
            if source is None:
                raise ValueError(f"append missing column {name}")
            arr = np.asarray(source, dtype=dtype)
            setattr(self, name, np.concatenate([getattr(self, name), arr]))
        return new_ids

    # -- derived ------------------------------------------------------------

    def county_codes(self) -> np.ndarray:
        return self.geography.county_codes_by_area[self.area]

    def nuts3_codes(self) -> np.ndarray:
        return self.geography.nuts3_codes_by_area[self.area]

    def adults(self) -> np.ndarray:
        return self.age >= ADULT_AGE

    # -- invariants -----------------------------------------------------------

    def validate(self) -> None:
        """Raise on any violated state invariant (tests and debugging)."""
        if len(np.unique(self.id)) != self.size:
            raise AssertionError("duplicate ids")
        if self.size and (self.age.min() < 0 or self.age.max() > MAX_AGE):
            raise AssertionError("age outside [0, 105]")
        child = self.age < ADULT_AGE
        bad_child = child & ~np.isin(self.status, [STATUS_NA, STATUS_S])
        if bad_child.any():
            raise AssertionError("child with a non-NA, non-student status")
        if self.size and (self.area.min() < 0 or self.area.max() >= self.geography.n_areas):
            raise AssertionError("area code outside geography")
        linked = self.spouse >= 0
        if linked.any():
            rows = self.rows_of_ids(self.spouse[linked])
            if np.any(self.spouse[rows] != self.id[linked]):
                raise AssertionError("asymmetric spouse link")
            if np.any(self.marital[linked] != MAR) or np.any(self.marital[rows] != MAR):
                raise AssertionError("spouse link on a non-married individual")
        students = self.status == STATUS_S
        if np.any(self.grad_year[~students] >= 0):
            raise AssertionError("graduation year on a non-student")

    # -- conversions -----------------------------------------------------------

    @classmethod
    def from_frame(
        cls,
        df: pd.DataFrame,
        year: int,
        geography: Geography,
        seed: int = 0,
        run_index: int = 0,
    ) -> "PopulationState":
        missing = set(POPULATION_COLUMNS) - set(df.columns)
        if missing:
            raise ValueError(f"population frame missing columns {sorted(missing)}")
        spouse = df["spouse_id"].fillna(-1).to_numpy(np.int64)
        grad = df["graduation_year"].fillna(-1).to_numpy(np.int64)
        moved = df["moved_last_year"]
        if moved.dtype == object:
            moved = moved.astype(str).str.strip().str.lower().isin(["true", "1", "t", "yes"])
        lifetime = (
            df["lifetime_education"].map(EDUCATION_INDEX).fillna(-1).to_numpy(np.int8)
            if "lifetime_education" in df.columns
            else np.full(len(df), -1, dtype=np.int8)
        )
        return cls(
            year,
            geography,
            seed=seed,
            run_index=run_index,
            id=df["id"].to_numpy(np.int64),
            age=df["age"].to_numpy(np.int64),
            sex=df["sex"].map(SEX_INDEX).to_numpy(np.int8),
            marital=df["marital_status"].map(MARITAL_INDEX).to_numpy(np.int8),
            citizenship=df["citizenship"].map(CITIZENSHIP_INDEX).to_numpy(np.int8),
            moved=moved.to_numpy(bool),
            education=df["education"].map(EDUCATION_INDEX).to_numpy(np.int8),
            status=df["economic_status"].map(STATUS_INDEX).to_numpy(np.int8),
            area=geography.area_codes(df["area_id"].astype(str)),
            spouse=spouse,
            grad_year=grad,
            lifetime_edu=lifetime,
        )

    def to_frame(self) -> pd.DataFrame:
        areas = np.array(self.geography.areas, dtype=object)
        df = pd.DataFrame(
            {
                "id": self.id,
                "age": self.age.astype(int),
                "sex": np.array(SEXES, dtype=object)[self.sex],
                "marital_status": np.array(MARITAL_STATUSES, dtype=object)[self.marital],
                "citizenship": np.array(CITIZENSHIPS, dtype=object)[self.citizenship],
                "moved_last_year": self.moved,
                "education": np.array(EDUCATION_LEVELS, dtype=object)[self.education],
                "economic_status": np.array(ECONOMIC_STATUSES, dtype=object)[self.status],
                "area_id": areas[self.area],
                "spouse_id": pd.array(
                    np.where(self.spouse < 0, pd.NA, self.spouse), dtype="Int64"
                ),
                "graduation_year": pd.array(
                    np.where(self.grad_year < 0, pd.NA, self.grad_year), dtype="Int64"
                ),
            }
        )
        return df

    @classmethod
    def from_individuals(
        cls, individuals, year: int, geography: Geography, seed: int = 0, run_index: int = 0
    ) -> "PopulationState":
        from ..population import individuals_to_frame

        return cls.from_frame(
            individuals_to_frame(individuals), year, geography, seed=seed, run_index=run_index
        )

    def to_individuals(self) -> list[Individual]:
        from ..population import frame_to_individuals

        return frame_to_individuals(self.to_frame())

    @classmethod
    def from_csv(
        cls, path, year: int, geography: Geography, seed: int = 0, run_index: int = 0
    ) -> "PopulationState":
        df = pd.read_csv(
            path, dtype={"area_id": str}, keep_default_na=False, na_values=[""]
        )
        return cls.from_frame(df, year, geography, seed=seed, run_index=run_index)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)
