"""Per-area validation (R^2/MSE), summary statistics, and the
facility-distance case study.

R^2 is computed against the reference distribution's own mean, which for a
valid 5-category distribution is exactly 0.2; identical distributions then
score exactly (1.0, 0.0). Distances are great-circle ("as the crow flies")
kilometres on a 6371.0088 km Earth radius.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import EmptyArea, InvalidDistribution, NoFacilities
from .population import (
    ADULT_AGE,
    EDUCATION_SCALE,
    N_SRH,
    SrhDistribution,
    mean_srh,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088


# -- aggregation ------------------------------------------------------------

def area_distribution(categories=None, probabilities=None) -> np.ndarray:
    """SRH distribution of one area's eligible individuals.

    Pass either sampled `categories` (codes 0..4; normalized frequencies)
    or per-individual `probabilities` ((n, 5); re-closed mean).
    """
    if (categories is None) == (probabilities is None):
        raise ValueError("pass exactly one of categories / probabilities")
    if categories is not None:
        cats = np.asarray(categories, dtype=int)
        if cats.size == 0:
            raise EmptyArea("no eligible individuals")
        counts = np.bincount(cats, minlength=N_SRH).astype(float)
        return counts / counts.sum()
    probs = np.atleast_2d(np.asarray(probabilities, dtype=float))
    if probs.shape[0] == 0:
        raise EmptyArea("no eligible individuals")
    mean = probs.mean(axis=0)
    return mean / mean.sum()


def r2_and_mse(predicted, reference) -> tuple[float | None, float]:
    """R^2 (about the reference mean, 0.2) and MSE over the 5 proportions.

    An exactly-uniform reference has zero total variance; R^2 is undefined
    and returned as None.
    """
    pred = _dist_array(predicted)
    ref = _dist_array(reference)
    mse = float(np.mean(np.square(pred - ref)))
    ss_tot = float(np.sum(np.square(ref - ref.mean())))
    if ss_tot == 0.0:
        return None, mse
    ss_res = float(np.sum(np.square(pred - ref)))
    return 1.0 - ss_res / ss_tot, mse


def _dist_array(value) -> np.ndarray:
    if isinstance(value, SrhDistribution):
        return value.as_array()
    arr = np.asarray(value, dtype=float)
    SrhDistribution.from_array(arr)
    return arr


# -- distance ----------------------------------------------------------------

@dataclass(frozen=True)
class FacilitySite:
    name: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


def haversine_km(a, b) -> float:
    """Great-circle distance in km between (lat, lon) points in degrees."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _haversine_vec(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    lat1, lon1 = math.radians(lat), math.radians(lon)
    lat2 = np.radians(lats)
    dlat = lat2 - lat1
    dlon = np.radians(lons) - lon1
    h = np.sin(dlat / 2.0) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def nearest_facility(centroid, facilities) -> tuple[FacilitySite, float]:
    """Closest facility by great-circle distance; ties break by input order."""
    sites = list(facilities)
    if not sites:
        raise NoFacilities("empty facility list")
    lats = np.array([s.latitude for s in sites])
    lons = np.array([s.longitude for s in sites])
    dists = _haversine_vec(centroid[0], centroid[1], lats, lons)
    i = int(np.argmin(dists))
    return sites[i], float(dists[i])


def quadrant_classify(points) -> list[str]:
    """Quadrant of each (mean_srh, distance_km) pair about the two means.

    Q1 = lower-left (better-than-average SRH, nearer), Q2 = lower-right,
    Q3 = upper-left, Q4 = upper-right (worse SRH and farther: the quadrant
    of planning interest). Points exactly on a mean line go to the
    lower/left side.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise ValueError("need at least 2 areas to form quadrants")
    srh_mean = pts[:, 0].mean()
    dist_mean = pts[:, 1].mean()
    out = []
    for srh, dist in pts:
        worse = srh > srh_mean
        farther = dist > dist_mean
        out.append("Q" + str(1 + int(farther) + 2 * int(worse)))
    return out


# -- per-area result assembly ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class AreaResult:
    area_id: str
    predicted: np.ndarray
    mean_srh: float
    mean_age: float
    mean_education: float
    reference: np.ndarray | None = None
    r2: float | None = None
    mse: float | None = None


def area_results(
    population: pd.DataFrame,
    predicted_by_area: dict[str, np.ndarray],
    reference_by_area: dict[str, np.ndarray] | None = None,
) -> list[AreaResult]:
    """Join per-area predictions with population summaries (and references).

    `population` needs columns area_id, age, education. Mean age is over
    all residents; mean education (NF=0..D=8) over those aged 15+.
    """
    results = []
    edu_scale = population["education"].map(EDUCATION_SCALE)
    adults = population["age"] >= ADULT_AGE
    for area_id in sorted(predicted_by_area):
        pred = np.asarray(predicted_by_area[area_id], dtype=float)
        rows = population["area_id"] == area_id
        if not rows.any():
            logger.info("area %s has no residents; skipped", area_id)
            continue
        mean_age = float(population.loc[rows, "age"].mean())
        edu = edu_scale[rows & adults]
        mean_education = float(edu.mean()) if len(edu.dropna()) else float("nan")
        ref = r2 = mse = None
        if reference_by_area and area_id in reference_by_area:
            ref = np.asarray(reference_by_area[area_id], dtype=float)
            r2, mse = r2_and_mse(pred, ref)
        results.append(
            AreaResult(
                area_id=area_id,
                predicted=pred,
                mean_srh=mean_srh(pred),
                mean_age=mean_age,
                mean_education=mean_education,
                reference=ref,
                r2=r2,
                mse=mse,
            )
        )
    return results


# -- file formats -------------------------------------------------------------------

def read_centroids_csv(path) -> dict[str, tuple[float, float]]:
    df = pd.read_csv(Path(path), dtype={"area_id": str})
    missing = {"area_id", "lat", "lon"} - set(df.columns)
    if missing:
        raise ValueError(f"centroids CSV missing columns {sorted(missing)}")
    return {r.area_id: (float(r.lat), float(r.lon)) for r in df.itertuples(index=False)}


def read_facilities_csv(path) -> list[FacilitySite]:
    df = pd.read_csv(Path(path))
    missing = {"name", "lat", "lon"} - set(df.columns)
    if missing:
        raise ValueError(f"facilities CSV missing columns {sorted(missing)}")
    return [FacilitySite(str(r.name), float(r.lat), float(r.lon)) for r in df.itertuples(index=False)]


def facility_distance_frame(
    centroids: dict[str, tuple[float, float]],
    facilities,
    mean_srh_by_area: dict[str, float],
) -> pd.DataFrame:
    """Scatter-ready case-study table: distance, mean SRH and quadrant."""
    areas = sorted(set(centroids) & set(mean_srh_by_area))
    if not areas:
        raise ValueError("no areas shared between centroids and results")
    rows = []
    for area_id in areas:
        site, dist = nearest_facility(centroids[area_id], facilities)
        rows.append([area_id, dist, mean_srh_by_area[area_id], site.name])
    df = pd.DataFrame(rows, columns=["area_id", "distance_km", "mean_srh", "nearest_facility"])
    if len(df) >= 2:
        df["quadrant"] = quadrant_classify(df[["mean_srh", "distance_km"]].to_numpy())
    else:
        df["quadrant"] = "Q1"
    return df


def join_geojson_properties(geojson: dict, results: pd.DataFrame, key: str = "area_id") -> dict:
    """Attach per-area result columns to GeoJSON feature properties."""
    by_area = results.set_index(key).to_dict("index")
    for feature in geojson.get("features", []):
        props = feature.setdefault("properties", {})
        area = props.get(key)
        if area in by_area:
            for col, value in by_area[area].items():
                props[col] = value
    return geojson
