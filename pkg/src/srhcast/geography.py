"""Area -> county -> NUTS3 region -> survey region lookups.

The geography is supplied as a CSV (area_id, county, nuts3, region); the
four survey regions and eight NUTS3 regions are fixed name sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import UnmappedArea

REGIONS = ("Connacht/Ulster", "Munster", "Dublin", "Leinster Rest")
NUTS3_REGIONS = (
    "Border",
    "West",
    "Mid-West",
    "Mid-East",
    "South-East",
    "South-West",
    "Dublin",
    "Midlands",
)
# Default survey region for each NUTS3 region, used by the synthetic generator.
NUTS3_TO_REGION = {
    "Border": "Connacht/Ulster",
    "West": "Connacht/Ulster",
    "Mid-West": "Munster",
    "South-West": "Munster",
    "Dublin": "Dublin",
    "Mid-East": "Leinster Rest",
    "South-East": "Leinster Rest",
    "Midlands": "Leinster Rest",
}

GEOGRAPHY_COLUMNS = ("area_id", "county", "nuts3", "region")


@dataclass
class Geography:
    """Immutable lookup tables keyed by small-area id."""

    frame: pd.DataFrame

    def __post_init__(self):
        missing = set(GEOGRAPHY_COLUMNS) - set(self.frame.columns)
        if missing:
            raise ValueError(f"geography missing columns {sorted(missing)}")
        df = self.frame.loc[:, list(GEOGRAPHY_COLUMNS)].astype(str)
        if df["area_id"].duplicated().any():
            dupes = df.loc[df["area_id"].duplicated(), "area_id"].tolist()
            raise ValueError(f"duplicate area ids {dupes[:5]}")
        bad = sorted(set(df["region"]) - set(REGIONS))
        if bad:
            raise ValueError(f"unknown survey regions {bad}")
        bad = sorted(set(df["nuts3"]) - set(NUTS3_REGIONS))
        if bad:
            raise ValueError(f"unknown NUTS3 regions {bad}")
        df = df.sort_values("area_id", kind="stable").reset_index(drop=True)
        self.frame = df
        self._areas = tuple(df["area_id"])
        self._area_index = {a: i for i, a in enumerate(self._areas)}
        self._counties = tuple(sorted(df["county"].unique()))
        county_index = {c: i for i, c in enumerate(self._counties)}
        self._county_codes = df["county"].map(county_index).to_numpy(np.int32)
        nuts3_index = {r: i for i, r in enumerate(NUTS3_REGIONS)}
        self._nuts3_codes = df["nuts3"].map(nuts3_index).to_numpy(np.int32)
        self._regions_by_area = dict(zip(df["area_id"], df["region"]))
        self._areas_in_county = {
            c: tuple(sub["area_id"]) for c, sub in df.groupby("county", sort=True)
        }

    @classmethod
    def from_csv(cls, path) -> "Geography":
        return cls(pd.read_csv(Path(path), dtype=str))

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)

    @property
    def areas(self) -> tuple[str, ...]:
        return self._areas

    @property
    def counties(self) -> tuple[str, ...]:
        return self._counties

    @property
    def n_areas(self) -> int:
        return len(self._areas)

    def area_index(self, area_id: str) -> int:
        try:
            return self._area_index[area_id]
        except KeyError:
            raise UnmappedArea(area_id) from None

    def area_codes(self, area_ids) -> np.ndarray:
        """Vectorized area_id -> dense index; raises UnmappedArea on any miss."""
        codes = pd.Series(area_ids).map(self._area_index)
        if codes.isna().any():
            missing = pd.Series(area_ids)[codes.isna()].unique()
            raise UnmappedArea(f"unknown areas {list(missing[:5])}")
        return codes.to_numpy(np.int32)

    def region_of(self, area_id: str) -> str:
        try:
            return self._regions_by_area[area_id]
        except KeyError:
            raise UnmappedArea(area_id) from None

    def county_of(self, area_id: str) -> str:
        return self._counties[self._county_codes[self.area_index(area_id)]]

    def nuts3_of(self, area_id: str) -> str:
        return NUTS3_REGIONS[self._nuts3_codes[self.area_index(area_id)]]

    def areas_in_county(self, county: str) -> tuple[str, ...]:
        return self._areas_in_county[county]

    # Dense per-area code vectors, indexed by area code (engine hot paths).
    @property
    def county_codes_by_area(self) -> np.ndarray:
        return self._county_codes

    @property
    def nuts3_codes_by_area(self) -> np.ndarray:
        return self._nuts3_codes

    def region_codes_by_area(self) -> np.ndarray:
        region_index = {r: i for i, r in enumerate(REGIONS)}
        return self.frame["region"].map(region_index).to_numpy(np.int32)
