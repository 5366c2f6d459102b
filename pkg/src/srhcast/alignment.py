"""Per-cohort ratio adjustment of predicted SRH distributions.

Each prediction is multiplied element-wise by census/microdata proportion
ratios for its cohort and re-normalised to sum to 1. Cohorts absent from
the table fall back to the same age-group+sex average, then to the
national average.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidDistribution, NoFallback, ZeroMicroProportion
from .population import CohortKey, N_SRH, SrhDistribution

logger = logging.getLogger(__name__)

MICRO_FLOOR = 1e-6

COHORT_COLUMNS = ("age_group", "sex", "economic_status")
CENSUS_COLUMNS = tuple(f"census_{k}" for k in range(N_SRH))
MICRO_COLUMNS = tuple(f"micro_{k}" for k in range(N_SRH))


def _as_dist_array(value, name: str) -> np.ndarray:
    arr = value.as_array() if isinstance(value, SrhDistribution) else np.asarray(value, float)
    # route all validation through SrhDistribution
    SrhDistribution.from_array(arr)
    if arr.shape != (N_SRH,):
        raise InvalidDistribution(f"{name} must have {N_SRH} components")
    return arr


def align(prediction, census, micro) -> SrhDistribution:
    """Adjust one prediction by element-wise census/micro ratios, re-closed."""
    pred = _as_dist_array(prediction, "prediction")
    cen = _as_dist_array(census, "census")
    mic = _as_dist_array(micro, "micro").copy()

    zero = mic == 0
    if zero.any():
        if (pred[zero] > 0).any():
            warnings.warn(
                f"micro proportion is zero in categories {np.nonzero(zero)[0].tolist()}"
                f" where the prediction is positive; flooring at {MICRO_FLOOR}",
                ZeroMicroProportion,
                stacklevel=2,
            )
        mic[zero] = MICRO_FLOOR

    adjusted = pred * cen / mic
    total = adjusted.sum()
    if total <= 0:
        raise InvalidDistribution("aligned proportions sum to zero")
    return SrhDistribution.from_array(adjusted / total)


def align_array(predictions: np.ndarray, census: np.ndarray, micro: np.ndarray) -> np.ndarray:
    """Vectorized `align` for an (n, 5) block sharing one census/micro pair."""
    mic = np.where(micro == 0, MICRO_FLOOR, micro)
    adjusted = predictions * (census / mic)[None, :]
    return adjusted / adjusted.sum(axis=1, keepdims=True)


@dataclass
class AlignmentTable:
    """CohortKey -> (census distribution, micro distribution)."""

    entries: dict[CohortKey, tuple[np.ndarray, np.ndarray]]
    _agesex_cache: dict = field(default_factory=dict, repr=False)
    _national_cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        for key, (cen, mic) in self.entries.items():
            self.entries[key] = (
                _as_dist_array(cen, f"census[{key}]"),
                _as_dist_array(mic, f"micro[{key}]"),
            )

    @classmethod
    def from_csv(cls, path) -> "AlignmentTable":
        df = pd.read_csv(Path(path))
        needed = set(COHORT_COLUMNS) | set(CENSUS_COLUMNS) | set(MICRO_COLUMNS)
        missing = needed - set(df.columns)
        if missing:
            raise ValueError(f"alignment CSV missing columns {sorted(missing)}")
        entries = {}
        for row in df.itertuples(index=False):
            key = CohortKey(str(row.age_group), str(row.sex), str(row.economic_status))
            cen = np.array([getattr(row, c) for c in CENSUS_COLUMNS], dtype=float)
            mic = np.array([getattr(row, c) for c in MICRO_COLUMNS], dtype=float)
            entries[key] = (cen, mic)
        return cls(entries)

    def to_csv(self, path) -> None:
        rows = []
        for key in sorted(self.entries, key=lambda k: (k.age_group, k.sex, k.economic_status)):
            cen, mic = self.entries[key]
            rows.append([key.age_group, key.sex, key.economic_status, *cen, *mic])
        pd.DataFrame(
            rows, columns=[*COHORT_COLUMNS, *CENSUS_COLUMNS, *MICRO_COLUMNS]
        ).to_csv(path, index=False, float_format="%.12g")

    def lookup(self, cohort: CohortKey) -> tuple[np.ndarray, np.ndarray, str]:
        """Entry for the cohort, falling back to age-group+sex then national.

        Returns (census, micro, level) where level names the fallback used.
        """
        hit = self.entries.get(cohort)
        if hit is not None:
            return hit[0], hit[1], "cohort"
        agesex = (cohort.age_group, cohort.sex)
        if agesex not in self._agesex_cache:
            matches = [
                v
                for k, v in self.entries.items()
                if (k.age_group, k.sex) == agesex
            ]
            self._agesex_cache[agesex] = (
                (
                    np.mean([m[0] for m in matches], axis=0),
                    np.mean([m[1] for m in matches], axis=0),
                )
                if matches
                else None
            )
        hit = self._agesex_cache[agesex]
        if hit is not None:
            return hit[0], hit[1], "age_sex"
        if self._national_cache is None:
            if not self.entries:
                raise NoFallback("alignment table is empty")
            values = list(self.entries.values())
            self._national_cache = (
                np.mean([v[0] for v in values], axis=0),
                np.mean([v[1] for v in values], axis=0),
            )
        return self._national_cache[0], self._national_cache[1], "national"


def align_population(
    predictions: np.ndarray,
    cohorts,
    table: AlignmentTable,
) -> np.ndarray:
    """Align each row of `predictions` using its cohort's table entry."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    cohorts = list(cohorts)
    if len(cohorts) != len(predictions):
        raise ValueError("one cohort key per prediction row required")
    if not len(cohorts):
        return predictions.copy()

    out = np.empty_like(predictions)
    fallback_counts: dict[str, int] = {}
    order: dict[CohortKey, list[int]] = {}
    for i, c in enumerate(cohorts):
        order.setdefault(c, []).append(i)
    for cohort, idx in order.items():
        cen, mic, level = table.lookup(cohort)
        if level != "cohort":
            fallback_counts[level] = fallback_counts.get(level, 0) + len(idx)
        if (mic == 0).any():
            logger.warning("zero micro proportions floored for cohort %s", cohort)
        out[idx] = align_array(predictions[idx], cen, mic)
    for level, n in sorted(fallback_counts.items()):
        logger.info("alignment used %s fallback for %d individuals", level, n)
    return out
