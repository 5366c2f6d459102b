"""Self-consistent synthetic stand-ins for every restricted input.

Generates a base population, geography, all rate tables, a survey labelled
by a known ground-truth SRH model, a three-census SRH history, per-area
reference distributions, centroids and facility sites, so the whole
pipeline runs end-to-end without licensed data and recovery tests have a
known answer to chase.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .encoding import EncodingSchema, default_schema, encode_frame
from .errors import InfeasibleSpec
from .forecast import alr, alr_inv
from .geography import Geography, NUTS3_REGIONS, NUTS3_TO_REGION, REGIONS
from .microsim.config import ScenarioConfig, TABLE_NAMES
from .microsim.rates import RateTable
from .microsim.rng import substream
from .microsim.state import (
    AGE_BANDS_ALL,
    EDUCATION_INDEX,
    MARITAL_INDEX,
    PopulationState,
    SEX_INDEX,
    STATUS_INDEX,
    study_level,
)
from .ordinal import OrdinalModel, TrainingSet, predict_proba_batch, sample_categories
from .population import (
    ADULT_AGE,
    ADULT_STATUSES,
    CITIZENSHIPS,
    CohortBanding,
    DEFAULT_BANDING,
    EDUCATION_LEVELS,
    MARITAL_STATUSES,
    MAX_AGE,
    N_SRH,
    SEXES,
    SRH_LABELS,
)

# Population pyramid weights over AGE_BANDS_ALL (0-4 .. 85+), normalized on use.
AGE_BAND_WEIGHTS = (
    6.2, 6.8, 7.0, 6.6, 6.0, 6.4, 7.0, 7.6, 7.4, 7.0,
    6.6, 6.2, 5.6, 4.6, 3.6, 2.6, 1.6, 1.2,
)

DEFAULT_MARGINALS = {
    "citizenship": {"IE": 0.84, "UK": 0.04, "EU": 0.07, "RW": 0.05},
    "education": {
        "NF": 0.02, "P": 0.08, "LS": 0.14, "US": 0.24, "PLC": 0.12,
        "HC": 0.08, "DEG": 0.20, "PD": 0.10, "D": 0.02,
    },
    "marital_status": {"MAR": 0.45, "SGL": 0.40, "SEP": 0.05, "WID": 0.10},
    "economic_status": {
        "15-24": {"W": 0.30, "S": 0.60, "LAHF": 0.01, "R": 0.0, "UTWSD": 0.01, "OTH": 0.03, "UNE": 0.05},
        "25-64": {"W": 0.62, "S": 0.04, "LAHF": 0.12, "R": 0.05, "UTWSD": 0.06, "OTH": 0.04, "UNE": 0.07},
        "65+": {"W": 0.08, "S": 0.0, "LAHF": 0.10, "R": 0.75, "UTWSD": 0.04, "OTH": 0.02, "UNE": 0.01},
    },
}

# Ground-truth effects on the latent worse-health scale (positive = worse),
# chosen to qualitatively mirror the expected feature ranking: inability to
# work dominates, student/home-maker statuses protect, age degrades.
DEFAULT_LATENT_EFFECTS = {
    "sex=M": 0.05,
    "marital_status=SGL": 0.30,
    "marital_status=SEP": 0.50,
    "marital_status=WID": 0.35,
    "economic_status=S": -0.45,
    "economic_status=LAHF": -0.30,
    "economic_status=R": 0.15,
    "economic_status=UTWSD": 2.10,
    "economic_status=OTH": 0.50,
    "economic_status=UNE": 0.65,
    "region=Munster": 0.05,
    "region=Dublin": -0.10,
    "region=Leinster Rest": 0.25,
}
AGE_EFFECT_PER_BAND = 0.09
EDUCATION_EFFECT_PER_LEVEL = -0.08
DEFAULT_THRESHOLDS = (-0.20, 1.59, 2.94, 4.18)


@dataclass
class GeneratorSpec:
    """Everything the generators need; one seed makes all artifacts."""

    seed: int = 0
    n_areas: int = 40
    mean_area_size: int = 120
    min_area_size: int = 10
    base_year: int = 2022
    survey_n: int = 7500
    survey_nonresponse: float = 0.005
    census_years: tuple[int, ...] = (2011, 2016, 2022)
    census_drift: float = 0.02  # ALR units per year, per-cohort direction seeded
    moved_share: float = 0.04
    male_share: float = 0.5
    banding: CohortBanding = field(default_factory=CohortBanding)
    marginals: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_MARGINALS)))
    age_band_weights: tuple[float, ...] = AGE_BAND_WEIGHTS
    latent_effects: dict = field(default_factory=lambda: dict(DEFAULT_LATENT_EFFECTS))
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS

    def schema(self) -> EncodingSchema:
        return default_schema(self.banding)

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "n_areas": self.n_areas,
            "mean_area_size": self.mean_area_size,
            "min_area_size": self.min_area_size,
            "base_year": self.base_year,
            "survey_n": self.survey_n,
            "survey_nonresponse": self.survey_nonresponse,
            "census_years": list(self.census_years),
            "census_drift": self.census_drift,
            "moved_share": self.moved_share,
            "male_share": self.male_share,
            "banding": {
                "start": self.banding.start,
                "width": self.banding.width,
                "top": self.banding.top,
            },
            "marginals": self.marginals,
            "age_band_weights": list(self.age_band_weights),
            "latent_effects": self.latent_effects,
            "thresholds": list(self.thresholds),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        doc = json.loads(text)
        kwargs = dict(doc)
        if "banding" in kwargs:
            kwargs["banding"] = CohortBanding(**kwargs["banding"])
        if "census_years" in kwargs:
            kwargs["census_years"] = tuple(kwargs["census_years"])
        if "thresholds" in kwargs:
            kwargs["thresholds"] = tuple(kwargs["thresholds"])
        if "age_band_weights" in kwargs:
            kwargs["age_band_weights"] = tuple(kwargs["age_band_weights"])
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        return cls.from_json(Path(path).read_text())


# -- ground truth ------------------------------------------------------------------

def ground_truth_model(spec: GeneratorSpec, schema: EncodingSchema | None = None) -> OrdinalModel:
    """Known-coefficient model used to label synthetic survey rows."""
    schema = schema or spec.schema()
    names = schema.feature_names()
    latent = np.zeros(len(names))
    age_labels = schema.block("age_group").categories
    edu_block = schema.block("education")
    for i, name in enumerate(names):
        if name in spec.latent_effects:
            latent[i] = spec.latent_effects[name]
        elif name.startswith("age_group="):
            band = name.split("=", 1)[1]
            latent[i] = AGE_EFFECT_PER_BAND * age_labels.index(band)
        elif name.startswith("education="):
            level = name.split("=", 1)[1]
            nonref = [c for c in edu_block.categories if c != edu_block.reference]
            latent[i] = EDUCATION_EFFECT_PER_LEVEL * (nonref.index(level) + 1)
    return OrdinalModel(
        beta=-latent,  # P(Y<=k|x)=F(tau_k + x.beta); worse-health effect is -beta
        thresholds=np.asarray(spec.thresholds, dtype=float),
        link="logit",
        schema_fingerprint=schema.fingerprint(),
        feature_names=names,
    )


# -- geography ------------------------------------------------------------------------

# County assignment order covers all four survey regions within the first
# four counties, so even tiny geographies exercise every region block.
_NUTS3_ASSIGN_ORDER = (
    "Border", "Mid-West", "Dublin", "Mid-East",
    "West", "South-West", "South-East", "Midlands",
)


def generate_geography(spec: GeneratorSpec) -> Geography:
    n_counties = min(26, max(4, math.ceil(spec.n_areas / 5)))
    n_counties = min(n_counties, spec.n_areas) if spec.n_areas else n_counties
    rows = []
    for i in range(spec.n_areas):
        county_i = i % n_counties
        county = f"C{county_i + 1:02d}"
        nuts3 = _NUTS3_ASSIGN_ORDER[county_i % len(_NUTS3_ASSIGN_ORDER)]
        rows.append([f"A{i + 1:04d}", county, nuts3, NUTS3_TO_REGION[nuts3]])
    return Geography(pd.DataFrame(rows, columns=["area_id", "county", "nuts3", "region"]))


# -- population ------------------------------------------------------------------------

def _sample_categorical(rng, categories, probs, size):
    p = np.asarray(probs, dtype=float)
    return rng.choice(len(categories), size=size, p=p / p.sum())


def _education_cap(ages: np.ndarray) -> np.ndarray:
    cap = np.full(len(ages), EDUCATION_INDEX["D"], dtype=np.int64)
    cap[ages < 23] = EDUCATION_INDEX["PD"]
    cap[ages < 21] = EDUCATION_INDEX["DEG"]
    cap[ages < 20] = EDUCATION_INDEX["PLC"]
    cap[ages < 18] = EDUCATION_INDEX["US"]
    cap[ages < 17] = EDUCATION_INDEX["LS"]
    cap[ages < 15] = EDUCATION_INDEX["P"]
    cap[ages < 12] = EDUCATION_INDEX["NA"]
    return cap


def generate_population(spec: GeneratorSpec, geography: Geography | None = None) -> PopulationState:
    """Base-year population with coherent joint constraints.

    Children are NA (under 4) or enrolled students; married individuals are
    paired within their area with symmetric links; students carry one-below
    attainment and a graduation year.
    """
    rng = substream(spec.seed, "population")
    geography = geography or generate_geography(spec)
    sizes = np.maximum(
        spec.min_area_size,
        np.rint(spec.mean_area_size * rng.lognormal(0.0, 0.45, size=geography.n_areas)),
    ).astype(np.int64)
    if spec.mean_area_size == 0:
        sizes[:] = 0
    n = int(sizes.sum())
    area = np.repeat(np.arange(geography.n_areas, dtype=np.int32), sizes)

    band_w = np.asarray(spec.age_band_weights, dtype=float)
    bands = _sample_categorical(rng, AGE_BANDS_ALL, band_w, n)
    lo = np.minimum(bands * 5, 85)
    width = np.where(bands == len(AGE_BANDS_ALL) - 1, 13, 5)  # 85+ spread to 97
    ages = (lo + rng.random(n) * width).astype(np.int64)

    sexes = np.where(rng.random(n) < spec.male_share, SEX_INDEX["M"], SEX_INDEX["F"]).astype(np.int8)
    cit_m = spec.marginals["citizenship"]
    citizenship = _sample_categorical(
        rng, CITIZENSHIPS, [cit_m.get(c, 0.0) for c in CITIZENSHIPS], n
    ).astype(np.int8)
    moved = (rng.random(n) < spec.moved_share) & (ages >= 1)

    education = np.zeros(n, dtype=np.int64)
    status = np.full(n, STATUS_INDEX["NA"], dtype=np.int64)
    marital = np.full(n, MARITAL_INDEX["SGL"], dtype=np.int64)

    adults = ages >= ADULT_AGE
    n_adult = int(adults.sum())
    edu_m = spec.marginals["education"]
    edu_levels = [lvl for lvl in EDUCATION_LEVELS if lvl in edu_m]
    edu_idx = np.array([EDUCATION_INDEX[lvl] for lvl in edu_levels])
    sampled_edu = edu_idx[_sample_categorical(rng, edu_levels, [edu_m[lvl] for lvl in edu_levels], n_adult)]
    education[adults] = np.minimum(sampled_edu, _education_cap(ages[adults]))
    education[adults] = np.maximum(education[adults], EDUCATION_INDEX["NF"])
    # children attain primary by 12
    children = ~adults
    education[children] = np.where(ages[children] >= 12, EDUCATION_INDEX["P"], EDUCATION_INDEX["NA"])

    status_m = spec.marginals["economic_status"]
    for band, cond in (
        ("15-24", adults & (ages <= 24)),
        ("25-64", adults & (ages >= 25) & (ages <= 64)),
        ("65+", adults & (ages >= 65)),
    ):
        dist = status_m[band]
        rows = np.nonzero(cond)[0]
        codes = _sample_categorical(
            rng, ADULT_STATUSES, [dist.get(s, 0.0) for s in ADULT_STATUSES], len(rows)
        )
        status[rows] = np.array([STATUS_INDEX[s] for s in ADULT_STATUSES])[codes]
    status[children & (ages >= 4)] = STATUS_INDEX["S"]

    # adult students cannot already hold the top qualification
    s_rows = adults & (status == STATUS_INDEX["S"])
    education[s_rows] = np.minimum(education[s_rows], EDUCATION_INDEX["PD"])

    mar_m = spec.marginals["marital_status"]
    eligible_mar = adults & (ages >= 18)
    rows = np.nonzero(eligible_mar)[0]
    codes = _sample_categorical(
        rng, MARITAL_STATUSES, [mar_m.get(m, 0.0) for m in MARITAL_STATUSES], len(rows)
    )
    marital[rows] = np.array([MARITAL_INDEX[m] for m in MARITAL_STATUSES])[codes]

    spouse = np.full(n, -1, dtype=np.int64)
    ids = np.arange(n, dtype=np.int64)
    _pair_married(spec, rng, area, sexes, ages, marital, spouse, ids)

    grad_year = np.full(n, -1, dtype=np.int64)
    students = np.nonzero(status == STATUS_INDEX["S"])[0]
    levels = study_level(education[students])
    durations = np.array([_COMPLETION_YEARS.get(EDUCATION_LEVELS[l], 3) for l in levels])
    grad_year[students] = spec.base_year + (rng.random(len(students)) * durations).astype(np.int64) + 1

    state = PopulationState(
        spec.base_year,
        geography,
        seed=spec.seed,
        id=ids,
        age=ages,
        sex=sexes,
        marital=marital,
        citizenship=citizenship,
        moved=moved,
        education=education,
        status=status,
        area=area,
        spouse=spouse,
        grad_year=grad_year,
        lifetime_edu=np.full(n, -1, dtype=np.int8),
    )
    state.validate()
    return state


def _pair_married(spec, rng, area, sexes, ages, marital, spouse, ids) -> None:
    mar_code = MARITAL_INDEX["MAR"]
    forced = spec.marginals["marital_status"].get("MAR", 0.0) >= 1.0
    for a in np.unique(area):
        in_area = area == a
        males = np.nonzero(in_area & (marital == mar_code) & (sexes == SEX_INDEX["M"]))[0]
        females = np.nonzero(in_area & (marital == mar_code) & (sexes == SEX_INDEX["F"]))[0]
        k = min(len(males), len(females))
        excess = np.concatenate([males[k:], females[k:]])
        if len(excess):
            if forced:
                raise InfeasibleSpec(
                    f"area index {a}: {len(excess)} married individuals cannot be"
                    " paired but the marital marginal forces MAR"
                )
            marital[excess] = MARITAL_INDEX["SGL"]
        males, females = males[:k], females[:k]
        males = males[np.argsort(ages[males], kind="stable")]
        females = females[np.argsort(ages[females], kind="stable")]
        spouse[males] = ids[females]
        spouse[females] = ids[males]


# -- rate tables -------------------------------------------------------------------------

_COMPLETION_YEARS = {"P": 8, "LS": 3, "US": 3, "PLC": 2, "HC": 2, "DEG": 4, "PD": 2, "D": 4}
BASE_TFR = 1.55


def generate_rate_tables(spec: GeneratorSpec, geography: Geography) -> dict[str, RateTable]:
    """Plausible, documented synthetic defaults for every engine table."""
    rng = substream(spec.seed, "rates")
    tables: dict[str, RateTable] = {}
    years = list(range(spec.base_year, spec.base_year + 51))

    rows = []
    for year in years:
        improvement = 0.997 ** (year - spec.base_year)
        for age in range(MAX_AGE + 1):
            base = 0.00005 + 0.000035 * math.exp(0.085 * age)
            if age == 0:
                base += 0.002
            for sex in SEXES:
                q = min(0.6, base * (1.25 if sex == "M" else 1.0) * improvement)
                rows.append([age, sex, year, q])
    tables["mortality"] = RateTable(
        pd.DataFrame(rows, columns=["age", "sex", "year", "probability"]), "mortality"
    )

    counties = geography.counties
    approx_pop = {c: spec.mean_area_size * len(geography.areas_in_county(c)) for c in counties}
    rows = []
    for o in counties:
        for d in counties:
            if o == d:
                count = int(round(0.008 * approx_pop[o]))
            else:
                count = int(rng.poisson(0.0015 * min(approx_pop[o], approx_pop[d]) + 0.3))
            if count > 0:
                rows.append([o, d, count])
    tables["internal_flows"] = RateTable(
        pd.DataFrame(rows, columns=["origin_county", "dest_county", "count"]), "internal_flows"
    )

    def band_profile(peak_band: int, spread: float) -> list[float]:
        return [math.exp(-((i - peak_band) / spread) ** 2) for i in range(len(AGE_BANDS_ALL))]

    mover_w = band_profile(5, 3.0)  # strongest in the mid-20s/30s
    rows = [
        [band, sex, w * (1.0 if sex == "F" else 1.05)]
        for band, w in zip(AGE_BANDS_ALL, mover_w)
        for sex in SEXES
    ]
    tables["internal_profile"] = RateTable(
        pd.DataFrame(rows, columns=["age_band", "sex", "weight"]), "internal_profile"
    )
    tables["emigrant_profile"] = RateTable(
        pd.DataFrame(rows, columns=["age_band", "sex", "weight"]), "emigrant_profile"
    )

    rows = [[r, round(0.010 + 0.004 * rng.random(), 6)] for r in NUTS3_REGIONS]
    tables["emigration_rate"] = RateTable(
        pd.DataFrame(rows, columns=["nuts3", "probability"]), "emigration_rate"
    )

    cit_mix = {"IE": 0.20, "UK": 0.10, "EU": 0.35, "RW": 0.35}
    rows = [
        [band, sex, cit, w * cit_mix[cit]]
        for band, w in zip(AGE_BANDS_ALL, band_profile(5, 2.6))
        for sex in SEXES
        for cit in CITIZENSHIPS
    ]
    tables["immigrant_profile"] = RateTable(
        pd.DataFrame(rows, columns=["age_band", "sex", "citizenship", "weight"]),
        "immigrant_profile",
    )

    rows = [
        [a, len(geography.areas_in_county(geography.county_of(a))) * (0.5 + rng.random())]
        for a in geography.areas
    ]
    tables["immigrant_dest_weights"] = RateTable(
        pd.DataFrame(rows, columns=["area_id", "weight"]), "immigrant_dest_weights"
    )

    marital_factor = {"MAR": 1.4, "SGL": 0.7, "SEP": 0.8, "WID": 0.5}
    region_factor = {r: 0.9 + 0.2 * (i / (len(NUTS3_REGIONS) - 1)) for i, r in enumerate(NUTS3_REGIONS)}
    shape = {age: math.exp(-(((age - 31) / 7.5) ** 2)) for age in range(15, 50)}
    mean_factor = np.mean(list(marital_factor.values())) * np.mean(list(region_factor.values()))
    scale = BASE_TFR / (sum(shape.values()) * mean_factor)
    rows = [
        [age, r, m, min(1.0, scale * s * marital_factor[m] * region_factor[r])]
        for age, s in shape.items()
        for r in NUTS3_REGIONS
        for m in MARITAL_STATUSES
    ]
    tables["fertility"] = RateTable(
        pd.DataFrame(rows, columns=["age", "nuts3", "marital_status", "probability"]), "fertility"
    )

    tables["separation_rate"] = RateTable(
        pd.DataFrame([["national", 0.006]], columns=["basis", "probability"]), "separation_rate"
    )
    tables["marriage_rate"] = RateTable(
        pd.DataFrame([["national", 0.012]], columns=["basis", "probability"]), "marriage_rate"
    )

    dropout = {"P": 0.002, "LS": 0.01, "US": 0.03, "PLC": 0.06, "HC": 0.06, "DEG": 0.05, "PD": 0.04, "D": 0.08}
    tables["dropout"] = RateTable(
        pd.DataFrame(sorted(dropout.items()), columns=["education", "probability"]), "dropout"
    )
    tables["completion_time"] = RateTable(
        pd.DataFrame(sorted(_COMPLETION_YEARS.items()), columns=["education", "years"]),
        "completion_time",
    )

    attainable = [lvl for lvl in EDUCATION_LEVELS if lvl != "NA"]
    base_marginal = np.array([spec.marginals["education"].get(lvl, 0.02) for lvl in attainable])
    scale_of = {lvl: i for i, lvl in enumerate(attainable)}
    rows = []
    for parent in EDUCATION_LEVELS:
        anchor = scale_of.get(parent, 3)
        w = base_marginal * np.exp(-0.3 * np.abs(np.arange(len(attainable)) - anchor))
        w = w / w.sum()
        w = np.round(w, 9)
        w[-1] = 1.0 - w[:-1].sum()
        rows.extend([[parent, lvl, p] for lvl, p in zip(attainable, w)])
    tables["parental_transmission"] = RateTable(
        pd.DataFrame(rows, columns=["education", "target", "probability"]), "parental_transmission"
    )

    continue_grad = {"P": 1.0, "LS": 0.92, "US": 0.62, "PLC": 0.25, "HC": 0.30, "DEG": 0.25, "PD": 0.15, "D": 0.0}
    rows = []
    for lvl, cont in continue_grad.items():
        rest = 1.0 - cont
        split = {"W": 0.72, "UNE": 0.14, "LAHF": 0.06, "OTH": 0.08}
        row = {"S": cont}
        row.update({s: rest * p for s, p in split.items()})
        rows.extend([[lvl, "grad", s, p] for s, p in row.items() if p > 0])
        drop_split = {"W": 0.45, "UNE": 0.40, "LAHF": 0.08, "OTH": 0.07}
        rows.extend([[lvl, "drop", s, p] for s, p in drop_split.items()])
    tables["post_exit_status"] = RateTable(
        pd.DataFrame(rows, columns=["education", "outcome", "economic_status", "probability"]),
        "post_exit_status",
    )

    rows = [[r, 0.004] for r in NUTS3_REGIONS]
    tables["adult_returner_rate"] = RateTable(
        pd.DataFrame(rows, columns=["nuts3", "probability"]), "adult_returner_rate"
    )
    returner_w = band_profile(6, 2.0)
    rows = [
        [band, sex, w]
        for band, w in zip(AGE_BANDS_ALL, returner_w)
        for sex in SEXES
        if band not in ("0-4", "5-9", "10-14", "15-19", "20-24")
    ]
    tables["returner_profile"] = RateTable(
        pd.DataFrame(rows, columns=["age_band", "sex", "weight"]), "returner_profile"
    )

    tables["employment_transitions"] = _employment_table(spec)
    return tables


def _employment_table(spec: GeneratorSpec) -> RateTable:
    """Sticky status transitions by (age band, sex, education, status)."""
    adult_bands = [b for i, b in enumerate(AGE_BANDS_ALL) if i >= 3]  # 15-19 upward
    non_student = [s for s in ADULT_STATUSES if s != "S"]
    attainable = [lvl for lvl in EDUCATION_LEVELS if lvl != "NA"]
    rows = []
    for band_i, band in enumerate(adult_bands):
        old = band_i >= 10  # 65+
        for sex in SEXES:
            for edu_i, edu in enumerate(attainable):
                for status in non_student:
                    move = {}
                    if old:
                        move = {"R": 0.15, "W": 0.005, "UTWSD": 0.01, "OTH": 0.005}
                    else:
                        work_pull = 0.05 + 0.01 * edu_i
                        move = {
                            "W": work_pull,
                            "UNE": max(0.01, 0.05 - 0.004 * edu_i),
                            "LAHF": 0.02,
                            "UTWSD": 0.012,
                            "OTH": 0.01,
                            "R": 0.002 if band_i < 9 else 0.05,
                        }
                    move.pop(status, None)
                    stay = 1.0 - sum(move.values())
                    dist = {status: stay, **move}
                    total = sum(dist.values())
                    items = sorted(dist.items())
                    acc = 0.0
                    for k, (to, p) in enumerate(items):
                        p = p / total
                        if k == len(items) - 1:
                            p = 1.0 - acc
                        else:
                            p = round(p, 9)
                            acc += p
                        rows.append([band, sex, edu, status, to, p])
    return RateTable(
        pd.DataFrame(
            rows,
            columns=["age_band", "sex", "education", "economic_status", "to_status", "probability"],
        ),
        "employment_transitions",
    )


# -- survey ---------------------------------------------------------------------------------

def _sample_adult_frame(spec: GeneratorSpec, rng, n: int, geography: Geography) -> pd.DataFrame:
    """Adults with the population marginals, for survey respondents."""
    band_w = np.asarray(spec.age_band_weights[3:], dtype=float)  # 15+ bands
    bands = _sample_categorical(rng, AGE_BANDS_ALL[3:], band_w, n) + 3
    lo = np.minimum(bands * 5, 85)
    width = np.where(bands == len(AGE_BANDS_ALL) - 1, 13, 5)
    ages = (lo + rng.random(n) * width).astype(np.int64)

    sexes = np.where(rng.random(n) < spec.male_share, "M", "F")
    status_m = spec.marginals["economic_status"]
    statuses = np.empty(n, dtype=object)
    for band, cond in (
        ("15-24", ages <= 24),
        ("25-64", (ages >= 25) & (ages <= 64)),
        ("65+", ages >= 65),
    ):
        rows = np.nonzero(cond)[0]
        dist = status_m[band]
        codes = _sample_categorical(
            rng, ADULT_STATUSES, [dist.get(s, 0.0) for s in ADULT_STATUSES], len(rows)
        )
        statuses[rows] = np.array(ADULT_STATUSES, dtype=object)[codes]

    edu_m = spec.marginals["education"]
    attainable = [lvl for lvl in EDUCATION_LEVELS if lvl in edu_m]
    edu = np.array(attainable, dtype=object)[
        _sample_categorical(rng, attainable, [edu_m[lvl] for lvl in attainable], n)
    ]
    caps = _education_cap(ages)
    edu_codes = np.array([EDUCATION_INDEX[e] for e in edu])
    edu_codes = np.maximum(np.minimum(edu_codes, caps), EDUCATION_INDEX["NF"])
    edu = np.array(EDUCATION_LEVELS, dtype=object)[edu_codes]

    mar_m = spec.marginals["marital_status"]
    marital = np.array(MARITAL_STATUSES, dtype=object)[
        _sample_categorical(
            rng, MARITAL_STATUSES, [mar_m.get(m, 0.0) for m in MARITAL_STATUSES], n
        )
    ]
    marital[ages < 18] = "SGL"

    region_by_area = geography.frame["region"].to_numpy()
    regions = region_by_area[rng.integers(0, geography.n_areas, size=n)]
    return pd.DataFrame(
        {
            "age": ages,
            "sex": sexes,
            "marital_status": marital,
            "economic_status": statuses,
            "education": edu,
            "region": regions,
        }
    )


def generate_survey(
    spec: GeneratorSpec,
    n: int | None = None,
    geography: Geography | None = None,
) -> tuple[TrainingSet, pd.DataFrame]:
    """Survey rows labelled by the ground-truth model.

    Returns the encoded TrainingSet (non-responses excluded) and the raw
    CSV-shaped frame (which includes the non-response rows).
    """
    rng = substream(spec.seed, "survey")
    n = spec.survey_n if n is None else int(n)
    geography = geography or generate_geography(spec)
    schema = spec.schema()
    model = ground_truth_model(spec, schema)

    if n == 0:
        frame = pd.DataFrame(
            columns=["age", "sex", "marital_status", "economic_status", "education", "region", "srh"]
        )
        return TrainingSet(X=np.zeros((0, schema.length)), y=np.zeros(0, dtype=int)), frame

    df = _sample_adult_frame(spec, rng, n, geography)
    X = encode_frame(df, df["region"], schema)
    y = sample_categories(model, X, rng)
    labels = np.array(SRH_LABELS, dtype=object)[y]
    nonresp = rng.random(n) < spec.survey_nonresponse
    labels[nonresp] = "Don't know"
    out = df.copy()
    out["srh"] = labels
    keep = ~nonresp
    return TrainingSet(X=X[keep], y=y[keep]), out


# -- census history -----------------------------------------------------------------------

def cohort_keys(banding: CohortBanding) -> list[tuple[str, str, str]]:
    return [
        (band, sex, status)
        for band in banding.labels()
        for sex in SEXES
        for status in ADULT_STATUSES
    ]


def _cohort_base_distribution(spec, model, schema, band, sex, status) -> np.ndarray:
    """Ground-truth prediction for a representative cohort member."""
    df = pd.DataFrame(
        {
            "age": [_band_mid(band, spec.banding)],
            "sex": [sex],
            "marital_status": ["MAR"],
            "economic_status": [status],
            "education": ["US"],
            "region": ["Connacht/Ulster"],
        }
    )
    X = encode_frame(df, df["region"], schema)
    return predict_proba_batch(model, X)[0]


def _band_mid(band: str, banding: CohortBanding) -> int:
    if band.endswith("+"):
        return int(band[:-1]) + 5
    lo, hi = band.split("-")
    return (int(lo) + int(hi)) // 2


def generate_census_history(
    spec: GeneratorSpec, years: tuple[int, ...] | None = None
) -> pd.DataFrame:
    """Per-cohort SRH distributions drifting smoothly across census years.

    The newest census matches the ground-truth model's cohort predictions;
    earlier years are displaced along a seeded per-cohort ALR direction.
    A national series is included under the key (ALL, ALL, ALL).
    """
    rng = substream(spec.seed, "census_history")
    years = tuple(years) if years is not None else spec.census_years
    if not years:
        raise ValueError("need at least one census year")
    schema = spec.schema()
    model = ground_truth_model(spec, schema)
    anchor = max(years)

    rows = []
    national = {y: np.zeros(N_SRH) for y in years}
    national_weight = 0.0
    for band, sex, status in cohort_keys(spec.banding):
        base = _cohort_base_distribution(spec, model, schema, band, sex, status)
        direction = rng.normal(0.0, 1.0, size=N_SRH - 1)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else direction
        base_alr = alr(base)
        weight = _cohort_weight(spec, band, status)
        for y in years:
            dist = alr_inv(base_alr + spec.census_drift * (y - anchor) * direction)
            rows.append([y, band, sex, status, *np.round(dist, 12)])
            national[y] += weight * dist
        national_weight += weight
    for y in years:
        dist = national[y] / national_weight
        dist = dist / dist.sum()
        rows.append([y, "ALL", "ALL", "ALL", *np.round(dist, 12)])
    df = pd.DataFrame(
        rows, columns=["year", "age_group", "sex", "economic_status", "p0", "p1", "p2", "p3", "p4"]
    )
    return df.sort_values(["age_group", "sex", "economic_status", "year"], kind="stable").reset_index(
        drop=True
    )


def _cohort_weight(spec: GeneratorSpec, band: str, status: str) -> float:
    mid = _band_mid(band, spec.banding)
    band_pos = min(mid // 5, len(spec.age_band_weights) - 1)
    broad = "15-24" if mid <= 24 else ("25-64" if mid <= 64 else "65+")
    share = spec.marginals["economic_status"][broad].get(status, 0.0)
    return spec.age_band_weights[band_pos] * max(share, 1e-6)


# -- reference areas, centroids, facilities ---------------------------------------------------

def generate_reference_areas(
    spec: GeneratorSpec,
    state: PopulationState,
    model: OrdinalModel | None = None,
) -> pd.DataFrame:
    """Per-area 'actual' SRH distributions sampled from the ground truth."""
    rng = substream(spec.seed, "reference")
    schema = spec.schema()
    model = model or ground_truth_model(spec, schema)
    df = state.to_frame()
    eligible = (df["age"] >= ADULT_AGE) & (df["economic_status"] != "NA")
    sub = df.loc[eligible].reset_index(drop=True)
    regions = [state.geography.region_of(a) for a in sub["area_id"]]
    X = encode_frame(sub, regions, schema)
    cats = sample_categories(model, X, rng)
    sub = sub.assign(srh=cats)
    rows = []
    for area_id, grp in sub.groupby("area_id", sort=True):
        counts = np.bincount(grp["srh"].to_numpy(), minlength=N_SRH).astype(float)
        dist = counts / counts.sum()
        rows.append([area_id, len(grp), *np.round(dist, 12)])
    return pd.DataFrame(rows, columns=["area_id", "n", "p0", "p1", "p2", "p3", "p4"])


IRELAND_BOX = (51.5, 55.3, -10.5, -6.0)  # lat/lon bounding box


def generate_centroids(spec: GeneratorSpec, geography: Geography) -> pd.DataFrame:
    rng = substream(spec.seed, "centroids")
    lat0, lat1, lon0, lon1 = IRELAND_BOX
    lats = lat0 + rng.random(geography.n_areas) * (lat1 - lat0)
    lons = lon0 + rng.random(geography.n_areas) * (lon1 - lon0)
    return pd.DataFrame(
        {"area_id": list(geography.areas), "lat": np.round(lats, 6), "lon": np.round(lons, 6)}
    )


def generate_facilities(spec: GeneratorSpec, n: int = 8) -> pd.DataFrame:
    rng = substream(spec.seed, "facilities")
    lat0, lat1, lon0, lon1 = IRELAND_BOX
    lats = lat0 + rng.random(n) * (lat1 - lat0)
    lons = lon0 + rng.random(n) * (lon1 - lon0)
    return pd.DataFrame(
        {
            "name": [f"ED{i + 1:02d}" for i in range(n)],
            "lat": np.round(lats, 6),
            "lon": np.round(lons, 6),
        }
    )


# -- bundle -------------------------------------------------------------------------------

def synth_all(spec: GeneratorSpec, out_dir) -> dict[str, str]:
    """Write every synthetic artifact; returns name -> relative path."""
    out = Path(out_dir)
    (out / "rates").mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}

    geography = generate_geography(spec)
    geography.to_csv(out / "geography.csv")
    paths["geography"] = "geography.csv"

    state = generate_population(spec, geography)
    state.to_csv(out / "population.csv")
    paths["population"] = "population.csv"

    schema = spec.schema()
    schema.save(out / "schema.json")
    paths["schema"] = "schema.json"

    model = ground_truth_model(spec, schema)
    model.save(out / "ground_truth_model.json")
    paths["ground_truth_model"] = "ground_truth_model.json"

    tables = generate_rate_tables(spec, geography)
    rate_paths = {}
    for name, table in tables.items():
        rel = f"rates/{name}.csv"
        table.to_csv(out / rel)
        rate_paths[name] = rel
    paths.update({f"rates/{k}": v for k, v in rate_paths.items()})

    _, survey = generate_survey(spec, geography=geography)
    survey.to_csv(out / "survey.csv", index=False)
    paths["survey"] = "survey.csv"

    census = generate_census_history(spec)
    census.to_csv(out / "census_history.csv", index=False, float_format="%.12g")
    paths["census_history"] = "census_history.csv"

    reference = generate_reference_areas(spec, state, model)
    reference.to_csv(out / "reference_areas.csv", index=False, float_format="%.12g")
    paths["reference_areas"] = "reference_areas.csv"

    generate_centroids(spec, geography).to_csv(out / "centroids.csv", index=False)
    paths["centroids"] = "centroids.csv"
    generate_facilities(spec).to_csv(out / "facilities.csv", index=False)
    paths["facilities"] = "facilities.csv"

    spec.save(out / "generator_spec.json")
    paths["generator_spec"] = "generator_spec.json"

    scenario = ScenarioConfig(
        migration_scenario="M1",
        start_year=spec.base_year,
        end_year=spec.base_year + 10,
        seed=spec.seed,
        rate_table_paths=rate_paths,
        runs=1,
        migration_scale=max(len(state), 1) / 5_100_000,
    )
    scenario.save(out / "scenario.json")
    paths["scenario"] = "scenario.json"
    return paths
