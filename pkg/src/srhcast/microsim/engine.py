"""Year-by-year population dynamics.

Module order within each simulated year is fixed: mortality -> internal
migration -> international migration -> fertility -> marriage -> education
-> employment, so later modules see the year's updated ages and education.
All stochastic draws come from named substreams of (seed, run, module,
year), making runs reproducible and order-independent.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import EmptyDonorPool, MissingRate, OddMarriedCount
from ..geography import NUTS3_REGIONS
from ..population import (
    ADULT_AGE,
    CITIZENSHIPS,
    ECONOMIC_STATUSES,
    EDUCATION_LEVELS,
    MARITAL_STATUSES,
    MAX_AGE,
    SEXES,
)
from .config import ScenarioConfig, TfrSchedule, net_migration_target
from .match import greedy_match
from .rates import RateTable, TransitionTable, require
from .rng import substream
from .state import (
    AGE_BANDS_ALL,
    CITIZEN_IE,
    EDU_NA,
    EDU_NF,
    EDU_P,
    MAR,
    PopulationState,
    SEP,
    SEX_F,
    SEX_M,
    SGL,
    STATUS_INDEX,
    STATUS_NA,
    STATUS_S,
    STATUS_W,
    WID,
    age_band_positions,
    study_level,
)

logger = logging.getLogger(__name__)

MARRIAGE_AGE = 18
RETURNER_AGE_LO, RETURNER_AGE_HI = 25, 69
ENROLMENT_AGE = 4


# -- generic fast table lookup over state rows ---------------------------------

def _field_indices(table: RateTable, field: str, state: PopulationState, rows, year):
    """Domain indices of a key field for the given state rows."""
    if field == "year":
        dom = table.domain("year")
        y = int(np.clip(year, int(dom.min()), int(dom.max())))
        tr = table.int_code_map("year", y, y)
        return np.full(_rows_len(state, rows), tr[0], dtype=np.int64)
    if field == "age":
        tr = table.int_code_map("age", 0, MAX_AGE)
        vals = state.age[rows].astype(np.int64)
    elif field == "age_band":
        tr = table.category_code_map("age_band", AGE_BANDS_ALL)
        vals = age_band_positions(state.age[rows])
    elif field == "sex":
        tr = table.category_code_map("sex", SEXES)
        vals = state.sex[rows].astype(np.int64)
    elif field == "marital_status":
        tr = table.category_code_map("marital_status", MARITAL_STATUSES)
        vals = state.marital[rows].astype(np.int64)
    elif field == "citizenship":
        tr = table.category_code_map("citizenship", CITIZENSHIPS)
        vals = state.citizenship[rows].astype(np.int64)
    elif field == "education":
        tr = table.category_code_map("education", EDUCATION_LEVELS)
        vals = state.education[rows].astype(np.int64)
    elif field == "economic_status":
        tr = table.category_code_map("economic_status", ECONOMIC_STATUSES)
        vals = state.status[rows].astype(np.int64)
    elif field == "nuts3":
        tr = table.category_code_map("nuts3", NUTS3_REGIONS)
        vals = state.nuts3_codes()[rows].astype(np.int64)
    elif field == "county":
        tr = table.category_code_map("county", state.geography.counties)
        vals = state.county_codes()[rows].astype(np.int64)
    elif field == "area_id":
        tr = table.category_code_map("area_id", state.geography.areas)
        vals = state.area[rows].astype(np.int64)
    else:
        raise MissingRate(f"table {table.name!r} keys on unknown field {field!r}")
    out = tr[vals]
    if (out < 0).any():
        raise MissingRate(f"table {table.name!r}: {field} has uncovered values")
    return out


def _rows_len(state: PopulationState, rows) -> int:
    if isinstance(rows, slice):
        return state.size
    arr = np.asarray(rows)
    return int(arr.sum()) if arr.dtype == bool else len(arr)


def table_values(table: RateTable, state: PopulationState, rows, year=None) -> np.ndarray:
    """Vectorized table values for state rows, over the table's key fields."""
    codes = np.zeros(_rows_len(state, rows), dtype=np.int64)
    for f in table.key_fields:
        codes += _field_indices(table, f, state, rows, year) * table.stride(f)
    return table.lookup_codes(codes)


def transition_rows(tt: TransitionTable, state: PopulationState, rows, year=None) -> np.ndarray:
    """Row indices into a transition table's matrix for state rows."""
    table = tt.rows_table
    codes = np.zeros(_rows_len(state, rows), dtype=np.int64)
    for f in table.key_fields:
        codes += _field_indices(table, f, state, rows, year) * table.stride(f)
    return table.lookup_codes(codes).astype(np.int64)


# -- sampling helpers ------------------------------------------------------------

def weighted_take(rows: np.ndarray, weights: np.ndarray, k: int, rng) -> np.ndarray:
    """k distinct rows, probability proportional to weight (Gumbel top-k)."""
    w = np.asarray(weights, dtype=float)
    positive = w > 0
    avail = int(positive.sum())
    if k > avail:
        k = avail
    if k <= 0:
        return rows[:0]
    gumbel = -np.log(-np.log(rng.random(len(w))))
    keys = np.where(positive, np.log(np.where(positive, w, 1.0)) + gumbel, -np.inf)
    idx = np.argpartition(-keys, k - 1)[:k]
    return rows[np.sort(idx)]


def apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer split of `total` proportional to weights (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    out = np.zeros(len(w), dtype=np.int64)
    if total <= 0 or w.sum() <= 0:
        return out
    quota = total * w / w.sum()
    out = np.floor(quota).astype(np.int64)
    short = int(total - out.sum())
    if short > 0:
        order = np.argsort(-(quota - out), kind="stable")
        out[order[:short]] += 1
    return out


# -- initialization ------------------------------------------------------------

def initialize(state: PopulationState, tables: dict) -> PopulationState:
    """Link married individuals and give students graduation dates.

    Idempotent: already-linked spouses and dated students are untouched.
    """
    rng = substream(state.seed, state.run_index, "initialize", state.year)
    _repair_spouse_links(state)
    _match_spouses(state)
    _assign_graduations(state, require(tables, "completion_time"), rng)
    _floor_adult_education(state)
    return state


def _floor_adult_education(state: PopulationState) -> None:
    """Adults who attained nothing hold NF, never the child NA marker."""
    grown = (state.age >= ADULT_AGE) & (state.education == EDU_NA)
    if grown.any():
        state.education[grown] = EDU_NF


def _repair_spouse_links(state: PopulationState) -> None:
    linked = np.nonzero(state.spouse >= 0)[0]
    if not len(linked):
        return
    pos = np.searchsorted(state.id, state.spouse[linked])
    pos_c = np.minimum(pos, max(state.size - 1, 0))
    ok = (state.id[pos_c] == state.spouse[linked]) & (state.spouse[pos_c] == state.id[linked])
    ok &= state.marital[linked] == MAR
    bad = linked[~ok]
    if len(bad):
        logger.warning("cleared %d dangling or asymmetric spouse links", len(bad))
        state.spouse[bad] = -1


def _match_spouses(state: PopulationState) -> None:
    unlinked = (state.marital == MAR) & (state.spouse < 0)
    if not unlinked.any():
        return
    nuts3 = state.nuts3_codes()
    leftover_m: list[np.ndarray] = []
    leftover_f: list[np.ndarray] = []
    for r in range(len(NUTS3_REGIONS)):
        males = np.nonzero(unlinked & (state.sex == SEX_M) & (nuts3 == r))[0]
        females = np.nonzero(unlinked & (state.sex == SEX_F) & (nuts3 == r))[0]
        m_left, f_left = _link_pairs(state, males, females)
        leftover_m.append(m_left)
        leftover_f.append(f_left)
    males = np.concatenate(leftover_m)
    females = np.concatenate(leftover_f)
    if len(males) or len(females):
        warnings.warn(
            f"{len(males) + len(females)} married individuals unmatched within"
            " their region; matching cross-region",
            OddMarriedCount,
            stacklevel=2,
        )
    males, females = _link_pairs(state, males, females)
    # same-sex remainder, then a final unmatched individual reverts to single
    for residue in (males, females):
        if len(residue) >= 2:
            half = len(residue) // 2
            a, b = residue[:half], residue[half : 2 * half]
            _link_pairs(state, a, b)
            residue = residue[2 * half :]
        else:
            residue = residue
    still = np.nonzero((state.marital == MAR) & (state.spouse < 0))[0]
    if len(still):
        warnings.warn(
            f"demoting {len(still)} unmatchable married individuals to single",
            OddMarriedCount,
            stacklevel=2,
        )
        state.marital[still] = SGL


def _link_pairs(state: PopulationState, rows_a: np.ndarray, rows_b: np.ndarray):
    """Greedy-match two row sets and write symmetric links; returns leftovers."""
    pairs = greedy_match(
        state.age[rows_a], state.education[rows_a], state.age[rows_b], state.education[rows_b]
    )
    taken_a = np.zeros(len(rows_a), dtype=bool)
    taken_b = np.zeros(len(rows_b), dtype=bool)
    for i, j in pairs:
        a, b = rows_a[i], rows_b[j]
        state.spouse[a] = state.id[b]
        state.spouse[b] = state.id[a]
        taken_a[i] = True
        taken_b[j] = True
    return rows_a[~taken_a], rows_b[~taken_b]


def _assign_graduations(state: PopulationState, completion: RateTable, rng) -> None:
    rows = np.nonzero((state.status == STATUS_S) & (state.grad_year < 0))[0]
    if not len(rows):
        return
    levels = study_level(state.education[rows])
    finished = levels < 0  # doctorate holders cannot study further
    if finished.any():
        logger.warning("%d students already at top education; set to working", finished.sum())
        state.status[rows[finished]] = STATUS_W
        rows, levels = rows[~finished], levels[~finished]
    durations = _completion_years(completion, levels)
    remaining = (rng.random(len(rows)) * durations).astype(np.int64) + 1
    state.grad_year[rows] = state.year + remaining


def _completion_years(completion: RateTable, level_codes: np.ndarray) -> np.ndarray:
    tr = completion.category_code_map("education", EDUCATION_LEVELS)
    if (tr[level_codes] < 0).any():
        raise MissingRate("completion_time table does not cover all levels")
    years = completion.lookup_codes(tr[level_codes] * completion.stride("education"))
    return np.maximum(years.astype(np.int64), 1)


# -- yearly steps ------------------------------------------------------------------

def step_mortality(state: PopulationState, mortality: RateTable, rng=None) -> int:
    """Bernoulli deaths by (age, sex, year); widow spouses; age survivors."""
    rng = rng or substream(state.seed, state.run_index, "mortality", state.year)
    if state.size == 0:
        return 0
    p = table_values(mortality, state, slice(None), year=state.year)
    dead = rng.random(state.size) < p
    deaths = int(dead.sum())
    linked_dead = np.nonzero(dead & (state.spouse >= 0))[0]
    if len(linked_dead):
        partner_rows = state.rows_of_ids(state.spouse[linked_dead])
        widowed = partner_rows[~dead[partner_rows]]
        state.marital[widowed] = WID
        state.spouse[widowed] = -1
    state.keep(~dead)
    state.age = np.minimum(state.age + 1, MAX_AGE).astype(np.int16)
    return deaths


def step_internal_migration(
    state: PopulationState,
    flows: RateTable,
    profile: RateTable,
    rng=None,
    dest_area_weights: RateTable | None = None,
) -> dict[str, int]:
    """Move county-to-county migrants per observed flow counts.

    Migrants are drawn by age/sex profile weight; destination areas are
    uniform within the destination county unless per-area weights are given.
    Returns net change per county name.
    """
    rng = rng or substream(state.seed, state.run_index, "internal_migration", state.year)
    counties = state.geography.counties
    county_index = {c: i for i, c in enumerate(counties)}
    flow_df = flows.frame
    if not {"origin_county", "dest_county"} <= set(flow_df.columns):
        raise MissingRate("internal_flows must key on origin_county, dest_county")

    county_codes = state.county_codes()
    weights_all = table_values(profile, state, slice(None))
    net = np.zeros(len(counties), dtype=np.int64)
    new_area = state.area.copy()
    area_codes_of = {
        c: np.nonzero(state.geography.county_codes_by_area == i)[0].astype(np.int64)
        for c, i in county_index.items()
    }

    for origin, sub in flow_df.groupby("origin_county", sort=True):
        if origin not in county_index:
            raise MissingRate(f"flow origin {origin!r} not in geography")
        sub = sub.sort_values("dest_county", kind="stable")
        dests = [str(d) for d in sub["dest_county"]]
        counts = sub[flows.value_field].to_numpy()
        counts = np.asarray(np.rint(counts), dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            continue
        rows = np.nonzero(county_codes == county_index[origin])[0]
        take = min(total, len(rows))
        if take < total:
            logger.warning(
                "county %s has %d residents for %d outflows; truncating",
                origin, len(rows), total,
            )
            counts = apportion(take, counts)
        movers = weighted_take(rows, weights_all[rows], take, rng)
        if len(movers) < take:  # zero-weight shortfall: top up uniformly
            rest = np.setdiff1d(rows, movers, assume_unique=False)
            extra = rng.permutation(rest)[: take - len(movers)]
            movers = np.concatenate([movers, extra])
        movers = rng.permutation(movers)
        start = 0
        for dest, count in zip(dests, counts.tolist()):
            if count == 0:
                continue
            if dest not in county_index:
                raise MissingRate(f"flow destination {dest!r} not in geography")
            block = movers[start : start + count]
            start += count
            dest_areas = area_codes_of[dest]
            if dest_area_weights is not None:
                w = dest_area_weights.lookup(
                    area_id=np.array(state.geography.areas_in_county(dest), dtype=object)
                )
                p = w / w.sum()
                chosen = dest_areas[rng.choice(len(dest_areas), size=len(block), p=p)]
            else:
                chosen = dest_areas[rng.integers(0, len(dest_areas), size=len(block))]
            new_area[block] = chosen.astype(np.int32)
            net[county_index[dest]] += count
            net[county_index[origin]] -= count
    state.area = new_area
    return {c: int(net[i]) for c, i in county_index.items() if net[i] != 0}


def step_international_migration(
    state: PopulationState,
    scenario: str,
    year: int,
    emigration_rate: RateTable,
    emigrant_profile: RateTable,
    immigrant_profile: RateTable,
    dest_weights: RateTable,
    completion: RateTable,
    rng=None,
    base_year: int = 2022,
    net_scale: float = 1.0,
) -> tuple[int, int, int]:
    """Remove emigrants, create donor-based immigrants; exact net change.

    Returns (emigrants, immigrants, net). Immigrants = emigrants + net by
    construction, so the yearly net equals the scenario schedule exactly.
    """
    rng = rng or substream(state.seed, state.run_index, "international_migration", state.year)
    net = int(round(net_scale * net_migration_target(scenario, year, base_year=base_year)))

    donor = {
        "age": state.age[state.moved].copy(),
        "sex": state.sex[state.moved].copy(),
        "citizenship": state.citizenship[state.moved].copy(),
        "marital": state.marital[state.moved].copy(),
        "education": state.education[state.moved].copy(),
        "status": state.status[state.moved].copy(),
    }
    state.moved[:] = False

    # emigration: region share of population times region rate, then age/sex weights
    nuts3 = state.nuts3_codes()
    emig_rows = []
    for r, name in enumerate(NUTS3_REGIONS):
        rows = np.nonzero(nuts3 == r)[0]
        if not len(rows):
            continue
        rate = emigrant_rate_for(emigration_rate, name)
        count = int(round(len(rows) * rate))
        if count <= 0:
            continue
        w = table_values(emigrant_profile, state, rows)
        chosen = weighted_take(rows, w, count, rng)
        emig_rows.append(chosen)
    emig = np.sort(np.concatenate(emig_rows)) if emig_rows else np.empty(0, dtype=np.int64)
    if len(emig) + net < 0:
        logger.warning("negative net %d exceeds gross emigration; truncating", net)
        emig = emig[: max(0, len(emig) + net) or 0]
    emigrants = len(emig)

    # widow/unlink partners of emigrants who stay behind
    linked = np.nonzero((state.spouse >= 0))[0]
    emig_mask = np.zeros(state.size, dtype=bool)
    emig_mask[emig] = True
    linked_emig = linked[emig_mask[linked]]
    if len(linked_emig):
        partner = state.rows_of_ids(state.spouse[linked_emig])
        stays = partner[~emig_mask[partner]]
        state.spouse[stays] = -1  # partner left the country; remains married
    state.keep(~emig_mask)

    immigrants = emigrants + net
    if immigrants > 0:
        _create_immigrants(
            state, immigrants, donor, immigrant_profile, dest_weights, completion, rng
        )
    return emigrants, immigrants, net


def emigrant_rate_for(emigration_rate: RateTable, nuts3_name: str) -> float:
    try:
        return emigration_rate.get(nuts3_name)
    except (MissingRate, ValueError):
        raise MissingRate(f"emigration_rate has no entry for region {nuts3_name!r}") from None


def _create_immigrants(
    state: PopulationState,
    n: int,
    donor: dict[str, np.ndarray],
    immigrant_profile: RateTable,
    dest_weights: RateTable,
    completion: RateTable,
    rng,
) -> None:
    prof = immigrant_profile.frame
    needed = {"age_band", "sex", "citizenship"}
    if not needed <= set(prof.columns):
        raise MissingRate("immigrant_profile must key on age_band, sex, citizenship")
    weights = prof[immigrant_profile.value_field].to_numpy(float)
    cells = rng.choice(len(prof), size=n, p=weights / weights.sum())

    band_lo = prof["age_band"].str.split("-").str[0].str.replace("+", "", regex=False)
    lo = band_lo.to_numpy(int)[cells]
    open_band = prof["age_band"].str.endswith("+").to_numpy()[cells]
    width = np.where(open_band, MAX_AGE - lo + 1, 5)
    ages = lo + (rng.random(n) * width).astype(np.int64)

    sex_map = {s: i for i, s in enumerate(SEXES)}
    cit_map = {c: i for i, c in enumerate(CITIZENSHIPS)}
    sexes = prof["sex"].map(sex_map).to_numpy(np.int8)[cells]
    cits = prof["citizenship"].map(cit_map).to_numpy(np.int8)[cells]

    marital, education, status = _copy_from_donors(donor, ages, sexes, cits, rng)

    # coherence for arriving children
    child = ages < ADULT_AGE
    status[child] = np.where(ages[child] >= ENROLMENT_AGE, STATUS_S, STATUS_NA)
    education[child] = np.minimum(education[child], np.where(ages[child] >= 12, EDU_P, EDU_NA))
    marital[child] = SGL

    area_domain = dest_weights.frame["area_id"].astype(str).to_numpy()
    area_w = dest_weights.frame[dest_weights.value_field].to_numpy(float)
    area_codes = np.array([state.geography.area_index(a) for a in area_domain], dtype=np.int64)
    areas = area_codes[rng.choice(len(area_codes), size=n, p=area_w / area_w.sum())]

    new_ids = state.append(
        age=ages.astype(np.int16),
        sex=sexes,
        marital=marital,
        citizenship=cits,
        moved=np.ones(n, dtype=bool),
        education=education,
        status=status,
        area=areas.astype(np.int32),
    )
    students = np.nonzero(state.status[state.rows_of_ids(new_ids)] == STATUS_S)[0]
    rows = state.rows_of_ids(new_ids)[students]
    levels = study_level(state.education[rows])
    ok = levels >= 0
    state.status[rows[~ok]] = STATUS_W
    rows, levels = rows[ok], levels[ok]
    durations = _completion_years(completion, levels)
    state.grad_year[rows] = state.year + 1 + (rng.random(len(rows)) * durations).astype(np.int64)


def _copy_from_donors(donor, ages, sexes, cits, rng):
    """Socio-economic characteristics from (age, sex, citizenship) donors."""
    n = len(ages)
    marital = np.full(n, SGL, dtype=np.int8)
    education = np.full(n, EDU_NA, dtype=np.int8)
    status = np.full(n, STATUS_W, dtype=np.int8)
    n_donors = len(donor["age"])
    if n_donors == 0:
        logger.warning("donor pool empty; immigrants get default characteristics")
        adult = ages >= ADULT_AGE
        education[adult] = EDUCATION_LEVELS.index("US")
        return marital, education, status

    pool: dict[tuple[int, int, int], np.ndarray] = {}
    keys = np.stack([donor["age"], donor["sex"], donor["citizenship"]], axis=1).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
    groups = np.split(order, boundaries)
    for g in groups:
        k = tuple(int(v) for v in keys[g[0]])
        pool[k] = g

    by_sex_cit: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    by_sex: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for s in np.unique(donor["sex"]):
        mask = donor["sex"] == s
        idx = np.nonzero(mask)[0]
        a = donor["age"][idx]
        o = np.argsort(a, kind="stable")
        by_sex[int(s)] = (a[o], idx[o])
        for c in np.unique(donor["citizenship"][idx]):
            m2 = idx[donor["citizenship"][idx] == c]
            a2 = donor["age"][m2]
            o2 = np.argsort(a2, kind="stable")
            by_sex_cit[(int(s), int(c))] = (a2[o2], m2[o2])

    misses = 0
    chosen = np.empty(n, dtype=np.int64)
    want = np.stack([ages, sexes, cits], axis=1).astype(np.int64)
    uniq, inverse = np.unique(want, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for g in range(len(uniq)):
        members = np.nonzero(inverse == g)[0]
        key = (int(uniq[g, 0]), int(uniq[g, 1]), int(uniq[g, 2]))
        grp = pool.get(key)
        if grp is not None:
            chosen[members] = grp[rng.integers(0, len(grp), size=len(members))]
            continue
        misses += len(members)
        near = by_sex_cit.get((key[1], key[2])) or by_sex.get(key[1])
        if near is None:
            chosen[members] = rng.integers(0, n_donors, size=len(members))
            continue
        a_sorted, idx_sorted = near
        j = int(np.searchsorted(a_sorted, key[0]))
        j = min(max(j, 0), len(a_sorted) - 1)
        if j > 0 and abs(int(a_sorted[j - 1]) - key[0]) <= abs(int(a_sorted[j]) - key[0]):
            j -= 1
        chosen[members] = idx_sorted[j]
    if misses:
        warnings.warn(
            f"no exact (age, sex, citizenship) donor for {misses} immigrants;"
            " nearest-age donors used",
            EmptyDonorPool,
            stacklevel=2,
        )
    return (
        donor["marital"][chosen].astype(np.int8),
        donor["education"][chosen].astype(np.int8),
        donor["status"][chosen].astype(np.int8),
    )


def step_fertility(
    state: PopulationState,
    year: int,
    tfr_schedule: TfrSchedule,
    fertility: RateTable,
    rng=None,
    male_share: float = 0.5,
) -> int:
    """TFR-scaled births to eligible women; newborns join the mother's area."""
    rng = rng or substream(state.seed, state.run_index, "fertility", state.year)
    ages = fertility.domain("age")
    lo, hi = int(ages.min()), int(ages.max())
    women = np.nonzero((state.sex == SEX_F) & (state.age >= lo) & (state.age <= hi))[0]
    if not len(women):
        return 0
    p = table_values(fertility, state, women, year=year) * tfr_schedule.scale_at(year)
    mothers = women[rng.random(len(women)) < np.minimum(p, 1.0)]
    births = len(mothers)
    if births == 0:
        return 0
    sexes = np.where(rng.random(births) < male_share, SEX_M, SEX_F).astype(np.int8)
    new_ids = state.append(
        age=np.zeros(births, dtype=np.int16),
        sex=sexes,
        marital=np.full(births, SGL, dtype=np.int8),
        citizenship=np.full(births, CITIZEN_IE, dtype=np.int8),
        moved=np.zeros(births, dtype=bool),
        education=np.full(births, EDU_NA, dtype=np.int8),
        status=np.full(births, STATUS_NA, dtype=np.int8),
        area=state.area[mothers].astype(np.int32),
    )
    mother_edu = state.education[mothers]
    state.newborn_mother_edu = {int(i): int(e) for i, e in zip(new_ids, mother_edu)}
    return births


def step_marriage(
    state: PopulationState,
    year: int,
    separation_rate: RateTable,
    marriage_rate: RateTable,
    rng=None,
) -> tuple[int, int]:
    """Separate existing couples, then match new ones within regions."""
    rng = rng or substream(state.seed, state.run_index, "marriage", state.year)
    # separations: couples = round(married persons x configured 2022 ratio)
    married = np.nonzero(state.marital == MAR)[0]
    couple_rows = married[
        (state.spouse[married] >= 0) & (state.spouse[married] > state.id[married])
    ]
    ratio = separation_rate.scalar
    target = int(round(len(married) * ratio))
    target = min(target, len(couple_rows))
    separations = 0
    if target > 0:
        chosen = rng.permutation(couple_rows)[:target]
        partners = state.rows_of_ids(state.spouse[chosen])
        both = np.concatenate([chosen, partners])
        state.marital[both] = SEP
        state.spouse[both] = -1
        separations = target

    # marriages
    eligible = (state.age >= MARRIAGE_AGE) & (state.marital != MAR)
    rate = marriage_rate.scalar
    total_target = int(round(int(eligible.sum()) * rate))
    marriages = 0
    if total_target > 0:
        nuts3 = state.nuts3_codes()
        region_counts = np.array(
            [int((eligible & (nuts3 == r)).sum()) for r in range(len(NUTS3_REGIONS))]
        )
        targets = apportion(total_target, region_counts)
        for r in range(len(NUTS3_REGIONS)):
            t = int(targets[r])
            if t == 0:
                continue
            males = np.nonzero(eligible & (nuts3 == r) & (state.sex == SEX_M))[0]
            females = np.nonzero(eligible & (nuts3 == r) & (state.sex == SEX_F))[0]
            k = min(t, len(males), len(females))
            if k == 0:
                continue
            m_rows = np.sort(rng.permutation(males)[:k])
            f_rows = np.sort(rng.permutation(females)[:k])
            pairs = greedy_match(
                state.age[m_rows],
                state.education[m_rows],
                state.age[f_rows],
                state.education[f_rows],
            )
            for i, j in pairs:
                a, b = m_rows[i], f_rows[j]
                state.marital[a] = MAR
                state.marital[b] = MAR
                state.spouse[a] = state.id[b]
                state.spouse[b] = state.id[a]
            marriages += len(pairs)
        if marriages < total_target:
            logger.info(
                "marriage target %d truncated to %d matchable pairs", total_target, marriages
            )
    return separations, marriages


def step_education(state: PopulationState, year: int, tables: dict, rng=None) -> dict[str, int]:
    """Newborn targets, dropouts, graduations, enrolment and returners."""
    rng = rng or substream(state.seed, state.run_index, "education", state.year)
    completion = require(tables, "completion_time")
    dropout = require(tables, "dropout")
    parental = require(tables, "parental_transmission").as_transition()
    post_exit = require(tables, "post_exit_status").as_transition()
    report = {"dropouts": 0, "graduates": 0, "enrolled": 0, "returners": 0}

    # (a) lifetime education targets for this year's newborns
    if state.newborn_mother_edu:
        ids = np.array(sorted(state.newborn_mother_edu), dtype=np.int64)
        med = np.array([state.newborn_mother_edu[int(i)] for i in ids], dtype=np.int64)
        ctx = parental.rows_table
        tr = ctx.category_code_map("education", EDUCATION_LEVELS)
        if (tr[med] < 0).any():
            raise MissingRate("parental_transmission does not cover a parent education")
        rows_idx = ctx.lookup_codes(tr[med] * ctx.stride("education")).astype(np.int64)
        outcome_codes = np.array(
            [EDUCATION_LEVELS.index(t) for t in parental.outcomes], dtype=np.int8
        )
        target_codes = outcome_codes[parental.sample_indices_from_rows(rows_idx, rng)]
        state.lifetime_edu[state.rows_of_ids(ids)] = target_codes
        state.newborn_mother_edu = {}

    # (b) dropouts, prioritizing students whose lifetime target <= current level
    students = np.nonzero(state.status == STATUS_S)[0]
    levels = study_level(state.education[students])
    dropped: list[np.ndarray] = []
    for lvl in np.unique(levels[levels >= 0]):
        rows_l = students[levels == lvl]
        rate = dropout.get(EDUCATION_LEVELS[lvl])
        count = int(round(len(rows_l) * rate))
        if count <= 0:
            continue
        target_known = state.lifetime_edu[rows_l]
        prio = rows_l[(target_known >= 0) & (target_known <= lvl)]
        rest = rows_l[~((target_known >= 0) & (target_known <= lvl))]
        take = rng.permutation(prio)[:count]
        if len(take) < count:
            take = np.concatenate([take, rng.permutation(rest)[: count - len(take)]])
        dropped.append(take)
    dropped_rows = np.sort(np.concatenate(dropped)) if dropped else np.empty(0, np.int64)
    dropped_mask = np.zeros(state.size, dtype=bool)
    dropped_mask[dropped_rows] = True
    report["dropouts"] = len(dropped_rows)

    # (c) graduations for students not dropping out this year
    grads = np.nonzero(
        (state.status == STATUS_S) & ~dropped_mask & (state.grad_year == year)
    )[0]
    new_edu = study_level(state.education[grads])
    ok = new_edu >= 0
    state.education[grads[ok]] = new_edu[ok].astype(np.int8)
    state.grad_year[grads] = -1
    report["graduates"] = len(grads)

    # (d) post-exit economic status for dropouts and graduates
    _apply_post_exit(state, dropped_rows, "drop", post_exit, completion, rng)
    _apply_post_exit(state, grads, "grad", post_exit, completion, rng)

    # (e) school enrolment at age 4
    enrol = np.nonzero((state.age == ENROLMENT_AGE) & (state.status == STATUS_NA))[0]
    if len(enrol):
        state.status[enrol] = STATUS_S
        durations = _completion_years(completion, np.full(len(enrol), EDU_P, dtype=np.int64))
        state.grad_year[enrol] = year + durations
        report["enrolled"] = len(enrol)

    # (f) adult returners per region, stratified by age and sex
    returner_rate = require(tables, "adult_returner_rate")
    returner_profile = require(tables, "returner_profile")
    nuts3 = state.nuts3_codes()
    adults_band = (state.age >= RETURNER_AGE_LO) & (state.age <= RETURNER_AGE_HI)
    for r, name in enumerate(NUTS3_REGIONS):
        in_region = adults_band & (nuts3 == r)
        n_adults = int(in_region.sum())
        if n_adults == 0:
            continue
        try:
            prop = returner_rate.get(name)
        except MissingRate:
            raise
        target = int(round(n_adults * prop))
        current = int((in_region & (state.status == STATUS_S)).sum())
        add = target - current
        if add <= 0:
            continue
        candidates = np.nonzero(
            in_region & (state.status != STATUS_S) & (state.status != STATUS_NA)
            & (study_level(state.education) >= 0)
        )[0]
        if not len(candidates):
            continue
        w = table_values(returner_profile, state, candidates)
        chosen = weighted_take(candidates, w, add, rng)
        state.status[chosen] = STATUS_S
        levels = study_level(state.education[chosen])
        durations = _completion_years(completion, levels)
        state.grad_year[chosen] = year + durations
        report["returners"] += len(chosen)
    _floor_adult_education(state)
    return report


def _apply_post_exit(state, rows, outcome, post_exit, completion, rng) -> None:
    """Sample the next economic status for students leaving a course."""
    if not len(rows):
        return
    ctx = post_exit.rows_table
    fields = set(ctx.key_fields)
    if not {"education", "outcome"} <= fields:
        raise MissingRate("post_exit_status must key on education, outcome")
    # dropouts: the level they were studying; graduates: the level just attained
    levels = study_level(state.education[rows]) if outcome == "drop" else state.education[rows].astype(np.int64)
    tr_edu = ctx.category_code_map("education", EDUCATION_LEVELS)
    tr_out = ctx.category_code_map("outcome", ("drop", "grad"))
    out_idx = tr_out[0 if outcome == "drop" else 1]
    if out_idx < 0 or (tr_edu[levels] < 0).any():
        raise MissingRate(f"post_exit_status missing rows for outcome {outcome!r}")
    codes = tr_edu[levels] * ctx.stride("education") + out_idx * ctx.stride("outcome")
    rows_idx = ctx.lookup_codes(codes).astype(np.int64)
    status_codes = np.array([STATUS_INDEX[s] for s in post_exit.outcomes], dtype=np.int8)
    new_status = status_codes[post_exit.sample_indices_from_rows(rows_idx, rng)]
    # children must stay in education until eligibility age
    new_status[state.age[rows] < ADULT_AGE] = STATUS_S

    state.status[rows] = new_status
    leaving = rows[new_status != STATUS_S]
    state.grad_year[leaving] = -1
    staying = rows[new_status == STATUS_S]
    if len(staying):
        nxt = study_level(state.education[staying])
        done = nxt < 0
        if done.any():
            state.status[staying[done]] = STATUS_W
            state.grad_year[staying[done]] = -1
        keep_on = staying[~done]
        if len(keep_on):
            durations = _completion_years(completion, nxt[~done])
            state.grad_year[keep_on] = state.year + durations


def step_employment(state: PopulationState, transitions: TransitionTable, rng=None) -> int:
    """Resample each non-student adult's status from its transition row."""
    rng = rng or substream(state.seed, state.run_index, "employment", state.year)
    if "S" in set(transitions.outcomes.tolist()):
        raise ValueError(
            "employment transitions may not emit student status;"
            " education handles re-entry"
        )
    rows = np.nonzero(
        (state.age >= ADULT_AGE) & (state.status != STATUS_S) & (state.status != STATUS_NA)
    )[0]
    if not len(rows):
        return 0
    row_idx = transition_rows(transitions, state, rows, year=state.year)
    sampled_pos = transitions.sample_indices_from_rows(row_idx, rng)
    tr = np.array([STATUS_INDEX[s] for s in transitions.outcomes], dtype=np.int8)
    new_codes = tr[sampled_pos]
    changed = new_codes != state.status[rows]
    state.status[rows] = new_codes
    return int(changed.sum())


# -- run loop ----------------------------------------------------------------------

@dataclass
class RunResult:
    accounting: pd.DataFrame
    final_state: PopulationState
    states: list[PopulationState] | None = None


def run(
    config: ScenarioConfig,
    base: PopulationState,
    tables: dict,
    run_index: int = 0,
    keep_states: bool = True,
    snapshot_years: set[int] | None = None,
) -> RunResult:
    """Simulate from start_year to end_year in the fixed module order.

    Deterministic for fixed (config, inputs, run_index). `snapshot_years`
    limits retained copies when `keep_states` would be too heavy.
    """
    state = base.copy()
    state.seed = config.seed
    state.run_index = run_index
    state.year = config.start_year
    initialize(state, tables)

    def want(year: int) -> bool:
        if keep_states:
            return True
        return snapshot_years is not None and year in snapshot_years

    states: list[PopulationState] = []
    if want(state.year):
        states.append(state.copy())

    mortality = require(tables, "mortality")
    flows = require(tables, "internal_flows")
    internal_profile = require(tables, "internal_profile")
    emigration_rate = require(tables, "emigration_rate")
    emigrant_profile = require(tables, "emigrant_profile")
    immigrant_profile = require(tables, "immigrant_profile")
    dest_weights = require(tables, "immigrant_dest_weights")
    completion = require(tables, "completion_time")
    separation = require(tables, "separation_rate")
    marriage = require(tables, "marriage_rate")
    employment = require(tables, "employment_transitions").as_transition()

    rows = []
    for year in range(config.start_year, config.end_year):
        pop_start = state.size
        deaths = step_mortality(state, mortality)
        net_internal = step_internal_migration(state, flows, internal_profile)
        emigrants, immigrants, net_int = step_international_migration(
            state,
            config.migration_scenario,
            year,
            emigration_rate,
            emigrant_profile,
            immigrant_profile,
            dest_weights,
            completion,
            base_year=config.start_year,
            net_scale=config.migration_scale,
        )
        births = step_fertility(state, year, config.tfr_schedule, fertility=require(tables, "fertility"))
        separations, marriages = step_marriage(state, year, separation, marriage)
        edu_report = step_education(state, year, tables)
        step_employment(state, employment)

        state.year = year + 1
        pop_end = state.size
        if pop_end != pop_start - deaths + births + (immigrants - emigrants):
            raise AssertionError(
                f"accounting identity violated in {year}:"
                f" {pop_end} != {pop_start} - {deaths} + {births} + {immigrants - emigrants}"
            )
        rows.append(
            {
                "year": year,
                "pop_start": pop_start,
                "pop_end": pop_end,
                "births": births,
                "deaths": deaths,
                "net_internal_by_county": ";".join(
                    f"{c}:{v:+d}" for c, v in sorted(net_internal.items())
                ),
                "net_internal": sum(net_internal.values()),
                "net_international": net_int,
                "emigrants": emigrants,
                "immigrants": immigrants,
                "separations": separations,
                "marriages": marriages,
                "graduates": edu_report["graduates"],
                "dropouts": edu_report["dropouts"],
            }
        )
        if want(state.year):
            states.append(state.copy())

    accounting = pd.DataFrame(
        rows,
        columns=[
            "year",
            "pop_start",
            "pop_end",
            "births",
            "deaths",
            "net_internal_by_county",
            "net_internal",
            "net_international",
            "emigrants",
            "immigrants",
            "separations",
            "marriages",
            "graduates",
            "dropouts",
        ],
    )
    return RunResult(accounting=accounting, final_state=state, states=states or None)


def run_many(
    config: ScenarioConfig,
    base: PopulationState,
    tables: dict,
    keep_states: bool = False,
    snapshot_years: set[int] | None = None,
) -> list[RunResult]:
    """config.runs independent runs; run index feeds the substreams."""
    return [
        run(
            config,
            base,
            tables,
            run_index=i,
            keep_states=keep_states,
            snapshot_years=snapshot_years,
        )
        for i in range(config.runs)
    ]
