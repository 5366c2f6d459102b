"""End-to-end orchestration: simulate -> fit -> predict -> align ->
forecast alignment targets -> aggregate -> validate / case-study -> report.

Stages communicate only via CSV/JSON files in the output directory, and a
manifest of the config plus input hashes fully determines every output
byte (no timestamps, fixed float formatting, sorted rows).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import alignment as align_mod
from . import forecast as fc
from . import spatial
from .encoding import EncodingSchema, encode_frame
from .errors import MissingOutputs
from .geography import Geography
from .microsim.config import ScenarioConfig
from .microsim.engine import run as engine_run
from .microsim.rates import load_tables
from .ordinal import OrdinalModel, fit, load_training_csv
from .population import (
    ADULT_AGE,
    CohortKey,
    N_SRH,
    SRH_CODES,
    mean_srh,
)
from .synthetic import GeneratorSpec, synth_all

logger = logging.getLogger(__name__)

PROP_COLS = [f"p{k}" for k in range(N_SRH)]
FLOAT_FMT = "%.12g"
SCENARIOS = ("mean", "best", "worst")


@dataclass
class PipelineConfig:
    out: Path
    scenario: ScenarioConfig
    inputs: dict = field(default_factory=dict)
    synth: GeneratorSpec | None = None
    predict_years: tuple[int, ...] = ()
    forecast_samples: int = 1000
    workers: int = 1
    base_dir: Path = Path(".")

    @classmethod
    def from_json_file(cls, path, out=None, seed=None, runs=None, workers=None) -> "PipelineConfig":
        path = Path(path)
        doc = json.loads(path.read_text())
        scen = ScenarioConfig.from_json(json.dumps(doc["scenario"]))
        if seed is not None or runs is not None:
            scen = ScenarioConfig(
                migration_scenario=scen.migration_scenario,
                start_year=scen.start_year,
                end_year=scen.end_year,
                seed=scen.seed if seed is None else int(seed),
                tfr_schedule=scen.tfr_schedule,
                rate_table_paths=scen.rate_table_paths,
                runs=scen.runs if runs is None else int(runs),
                migration_scale=scen.migration_scale,
            )
        synth = GeneratorSpec.from_json(json.dumps(doc["synth"])) if "synth" in doc else None
        return cls(
            out=Path(out) if out else Path(doc.get("out", "out")),
            scenario=scen,
            inputs=dict(doc.get("inputs", {})),
            synth=synth,
            predict_years=tuple(doc.get("predict_years", ())),
            forecast_samples=int(doc.get("forecast_samples", 1000)),
            workers=int(workers if workers is not None else doc.get("workers", 1)),
            base_dir=path.parent,
        )

    def resolved_input(self, name: str) -> Path:
        p = Path(self.inputs[name])
        return p if p.is_absolute() else self.base_dir / p

    def years(self) -> tuple[int, ...]:
        if self.predict_years:
            return tuple(sorted(set(int(y) for y in self.predict_years)))
        return (self.scenario.end_year,)


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FMT)


def _hash_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- stage: fit (model + survey-side cohort distributions) ---------------------------

def stage_fit(survey_path, schema: EncodingSchema, out_dir: Path, link: str = "logit") -> OrdinalModel:
    data = load_training_csv(survey_path, schema)
    model = fit(data, link=link, schema=schema)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save(out_dir / "model.json")
    micro = survey_cohort_distributions(survey_path, schema)
    _write_csv(micro, out_dir / "micro_distributions.csv")
    return model


def survey_cohort_distributions(
    survey_path, schema: EncodingSchema, smoothing: float = 5.0
) -> pd.DataFrame:
    """Per-cohort SRH distributions of the survey microdata.

    Cohort cells in a 7,500-row survey are small, so raw frequencies carry
    structural zeros that would explode the alignment ratios; counts are
    shrunk toward the national survey distribution with `smoothing`
    pseudo-observations.
    """
    from .ordinal import NON_RESPONSE_TOKENS
    from .population import srh_code

    df = pd.read_csv(survey_path)
    keep = ~df["srh"].astype(str).str.strip().str.lower().isin(NON_RESPONSE_TOKENS)
    df = df.loc[keep].reset_index(drop=True)
    codes = np.array([srh_code(v) for v in df["srh"]])
    banding = schema.banding
    bands = np.array(banding.labels())
    idx = np.minimum((df["age"].to_numpy(int) - banding.start) // banding.width, len(bands) - 1)
    df = df.assign(age_group=bands[idx], srh_code=codes)
    national = np.bincount(codes, minlength=N_SRH).astype(float)
    national = np.maximum(national, 1.0)
    national /= national.sum()
    rows = []
    for (band, sex, status), grp in df.groupby(
        ["age_group", "sex", "economic_status"], sort=True
    ):
        counts = np.bincount(grp["srh_code"].to_numpy(), minlength=N_SRH).astype(float)
        counts += smoothing * national
        rows.append([band, sex, status, int(len(grp)), *(counts / counts.sum())])
    return pd.DataFrame(rows, columns=["age_group", "sex", "economic_status", "n", *PROP_COLS])


# -- stage: predict -------------------------------------------------------------------

def predict_population(
    population: pd.DataFrame, geography: Geography, schema: EncodingSchema, model: OrdinalModel
) -> pd.DataFrame:
    """Per-eligible-individual SRH probabilities with cohort keys."""
    from .ordinal import predict_proba_batch

    eligible = (population["age"] >= ADULT_AGE) & (population["economic_status"] != "NA")
    sub = population.loc[eligible].reset_index(drop=True)
    regions = sub["area_id"].map(dict(zip(geography.frame["area_id"], geography.frame["region"])))
    X = encode_frame(sub, regions, schema)
    probs = predict_proba_batch(model, X)
    banding = schema.banding
    bands = np.array(banding.labels())
    idx = np.minimum((sub["age"].to_numpy(int) - banding.start) // banding.width, len(bands) - 1)
    out = pd.DataFrame(
        {
            "id": sub["id"],
            "area_id": sub["area_id"],
            "age_group": bands[idx],
            "sex": sub["sex"],
            "economic_status": sub["economic_status"],
        }
    )
    for k, col in enumerate(PROP_COLS):
        out[col] = probs[:, k]
    return out


# -- stage: align -----------------------------------------------------------------------

def build_alignment_table(census_df: pd.DataFrame, micro_df: pd.DataFrame) -> align_mod.AlignmentTable:
    """Join per-cohort census and microdata distributions."""
    entries = {}
    micro_by_key = {
        (r.age_group, r.sex, r.economic_status): np.array([getattr(r, c) for c in PROP_COLS])
        for r in micro_df.itertuples(index=False)
    }
    for r in census_df.itertuples(index=False):
        key = (r.age_group, r.sex, r.economic_status)
        if key not in micro_by_key:
            continue
        census = np.array([getattr(r, c) for c in PROP_COLS])
        entries[CohortKey(*key)] = (census, micro_by_key[key])
    return align_mod.AlignmentTable(entries)


def align_predictions(pred_df: pd.DataFrame, table: align_mod.AlignmentTable) -> pd.DataFrame:
    probs = pred_df[PROP_COLS].to_numpy(float)
    cohorts = [
        CohortKey(r.age_group, r.sex, r.economic_status)
        for r in pred_df[["age_group", "sex", "economic_status"]].itertuples(index=False)
    ]
    aligned = align_mod.align_population(probs, cohorts, table)
    out = pred_df.copy()
    for k, col in enumerate(PROP_COLS):
        out[col] = aligned[:, k]
    return out


# -- stage: aggregate ----------------------------------------------------------------------

def aggregate_areas(pred_df: pd.DataFrame) -> pd.DataFrame:
    """Mean probability vector per area, re-closed, with eligible counts."""
    rows = []
    for area_id, grp in pred_df.groupby("area_id", sort=True):
        dist = grp[PROP_COLS].to_numpy(float).mean(axis=0)
        dist = dist / dist.sum()
        rows.append([area_id, len(grp), *dist, float(dist @ SRH_CODES)])
    return pd.DataFrame(rows, columns=["area_id", "n", *PROP_COLS, "mean_srh"])


def average_over_runs(frames: list[pd.DataFrame]) -> pd.DataFrame:
    """Unweighted mean of per-area distributions across runs."""
    merged = pd.concat(frames, ignore_index=True)
    rows = []
    for area_id, grp in merged.groupby("area_id", sort=True):
        dist = grp[PROP_COLS].to_numpy(float).mean(axis=0)
        dist = dist / dist.sum()
        rows.append([area_id, float(grp["n"].mean()), *dist, float(dist @ SRH_CODES)])
    return pd.DataFrame(rows, columns=["area_id", "n", *PROP_COLS, "mean_srh"])


# -- stage: validate --------------------------------------------------------------------------

def validate_against_reference(pred_areas: pd.DataFrame, ref_areas: pd.DataFrame) -> pd.DataFrame:
    ref = ref_areas.set_index("area_id")
    rows = []
    for r in pred_areas.itertuples(index=False):
        if r.area_id not in ref.index:
            continue
        pred = np.array([getattr(r, c) for c in PROP_COLS])
        actual = ref.loc[r.area_id, PROP_COLS].to_numpy(float)
        r2, mse = spatial.r2_and_mse(pred, actual)
        rows.append([r.area_id, r2 if r2 is not None else np.nan, mse])
    return pd.DataFrame(rows, columns=["area_id", "r2", "mse"])


# -- the full pipeline --------------------------------------------------------------------------

def run_pipeline(config: PipelineConfig) -> Path:
    """Execute every stage; returns the output directory."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    stage = "synth"
    try:
        if config.synth is not None:
            inputs_dir = out / "inputs"
            paths = synth_all(config.synth, inputs_dir)
            config.inputs = {
                name: str(inputs_dir / rel)
                for name, rel in paths.items()
                if name
                in (
                    "population",
                    "geography",
                    "schema",
                    "survey",
                    "census_history",
                    "centroids",
                    "facilities",
                    "reference_areas",
                )
            }
            config.scenario = ScenarioConfig(
                migration_scenario=config.scenario.migration_scenario,
                start_year=config.scenario.start_year,
                end_year=config.scenario.end_year,
                seed=config.scenario.seed,
                tfr_schedule=config.scenario.tfr_schedule,
                rate_table_paths={
                    name.split("/", 1)[1]: str(inputs_dir / rel)
                    for name, rel in paths.items()
                    if name.startswith("rates/")
                },
                runs=config.scenario.runs,
                migration_scale=config.scenario.migration_scale,
            )

        stage = "load"
        geography = Geography.from_csv(config.resolved_input("geography"))
        schema = EncodingSchema.load(config.resolved_input("schema"))
        tables = load_tables(config.scenario.rate_table_paths, base_dir=config.base_dir)

        stage = "simulate"
        from .microsim.state import PopulationState

        base = PopulationState.from_csv(
            config.resolved_input("population"), config.scenario.start_year, geography
        )
        years = config.years()
        snapshots = set(years) | {config.scenario.start_year}
        results = []
        pops_dir = out / "populations"
        pops_dir.mkdir(parents=True, exist_ok=True)
        for i in range(config.scenario.runs):
            result = engine_run(
                config.scenario, base, tables, run_index=i, keep_states=False, snapshot_years=snapshots
            )
            _write_csv(result.accounting, out / f"accounting_run{i}.csv")
            for st in result.states or []:
                st.to_csv(pops_dir / f"run{i}_year{st.year}.csv")
            results.append(result)

        stage = "fit"
        model = stage_fit(config.resolved_input("survey"), schema, out)
        micro_df = pd.read_csv(out / "micro_distributions.csv")

        stage = "forecast"
        history = fc.read_history_csv(config.resolved_input("census_history"))
        history_years = sorted({int(y) for ys, _ in history.values() for y in ys})
        future_years = [y for y in years if y > max(history_years)]
        forecast_df = None
        if future_years:
            forecast_df = fc.forecast_history(
                history,
                future_years,
                n_samples=config.forecast_samples,
                seed=config.scenario.seed,
                workers=config.workers,
            )
            _write_csv(forecast_df, out / "forecast.csv")

        stage = "predict/align/aggregate"
        census_raw = pd.read_csv(config.resolved_input("census_history"))
        base_census = census_raw[census_raw["year"] <= config.scenario.start_year]
        if len(base_census):
            latest = base_census["year"].max()
            base_census = base_census[base_census["year"] == latest]
        areas_dir = out / "areas"
        per_year_scenario: dict[tuple[int, str], list[pd.DataFrame]] = {}
        for i in range(config.scenario.runs):
            for st in results[i].states or []:
                pop = st.to_frame()
                pred = predict_population(pop, geography, schema, model)
                if st.year <= max(history_years):
                    scenario_rows = {"mean": base_census}
                else:
                    scenario_rows = {
                        s: forecast_df[
                            (forecast_df["year"] == st.year) & (forecast_df["scenario"] == s)
                        ]
                        for s in SCENARIOS
                    }
                for scen, census_df in scenario_rows.items():
                    table = build_alignment_table(census_df, micro_df)
                    aligned = align_predictions(pred, table)
                    _write_csv(
                        aligned, out / "aligned" / f"run{i}_year{st.year}_{scen}.csv"
                    )
                    areas = aggregate_areas(aligned)
                    _write_csv(areas, areas_dir / f"run{i}_year{st.year}_{scen}.csv")
                    per_year_scenario.setdefault((st.year, scen), []).append(areas)

        for (year, scen), frames in sorted(per_year_scenario.items()):
            _write_csv(average_over_runs(frames), areas_dir / f"year{year}_{scen}.csv")

        stage = "validate"
        if "reference_areas" in config.inputs:
            ref = pd.read_csv(config.resolved_input("reference_areas"), dtype={"area_id": str})
            base_areas = pd.read_csv(
                areas_dir / f"year{config.scenario.start_year}_mean.csv", dtype={"area_id": str}
            )
            validation = validate_against_reference(base_areas, ref)
            _write_csv(validation, out / "validation.csv")

        stage = "casestudy"
        if "centroids" in config.inputs and "facilities" in config.inputs:
            final_year = max(years)
            scen = "mean" if (final_year, "mean") in per_year_scenario else "mean"
            area_file = areas_dir / f"year{final_year}_{scen}.csv"
            if area_file.exists():
                areas = pd.read_csv(area_file, dtype={"area_id": str})
                centroids = spatial.read_centroids_csv(config.resolved_input("centroids"))
                facilities = spatial.read_facilities_csv(config.resolved_input("facilities"))
                srh_by_area = dict(zip(areas["area_id"], areas["mean_srh"]))
                case = spatial.facility_distance_frame(centroids, facilities, srh_by_area)
                _write_csv(case, out / "casestudy.csv")

        stage = "report"
        report(out)

        stage = "manifest"
        scenario_doc = json.loads(config.scenario.to_json())
        # keep the manifest location-independent: file names + content hashes
        scenario_doc["rate_table_paths"] = {
            name: Path(p).name for name, p in sorted(scenario_doc["rate_table_paths"].items())
        }
        input_hashes = {
            name: {
                "file": config.resolved_input(name).name,
                "sha256": _hash_file(config.resolved_input(name)),
            }
            for name in sorted(config.inputs)
        }
        for name, p in sorted(config.scenario.rate_table_paths.items()):
            path = Path(p)
            if not path.is_absolute():
                path = config.base_dir / path
            input_hashes[f"rates/{name}"] = {"file": path.name, "sha256": _hash_file(path)}
        manifest = {
            "scenario": scenario_doc,
            "predict_years": list(years),
            "forecast_samples": config.forecast_samples,
            "inputs": input_hashes,
            "synth": json.loads(config.synth.to_json()) if config.synth else None,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except Exception as err:
        raise type(err)(f"[stage {stage}] {err}").with_traceback(err.__traceback__) from None
    return out


# -- report -----------------------------------------------------------------------------------

def report(out_dir) -> dict[str, pd.DataFrame]:
    """National proportions per scenario-year and per-area SRH-change rankings."""
    out = Path(out_dir)
    areas_dir = out / "areas"
    files = sorted(areas_dir.glob("year*_*.csv")) if areas_dir.exists() else []
    if not files:
        raise MissingOutputs(f"no aggregated area files under {areas_dir}")

    national_rows = []
    by_year_scen = {}
    for f in files:
        stem = f.stem  # year{Y}_{scenario}
        year_part, scen = stem.split("_", 1)
        year = int(year_part.replace("year", ""))
        df = pd.read_csv(f, dtype={"area_id": str})
        by_year_scen[(year, scen)] = df
        weights = df["n"].to_numpy(float)
        dists = df[PROP_COLS].to_numpy(float)
        national = (dists * weights[:, None]).sum(axis=0) / weights.sum()
        national = national / national.sum()
        national_rows.append([year, scen, *national, float(national @ SRH_CODES)])
    national_df = pd.DataFrame(
        national_rows, columns=["year", "scenario", *PROP_COLS, "mean_srh"]
    ).sort_values(["year", "scenario"], kind="stable")
    _write_csv(national_df, out / "report_national.csv")

    base_year = min(y for y, _ in by_year_scen)
    final_year = max(y for y, _ in by_year_scen)
    ranking_rows = []
    if final_year > base_year and (base_year, "mean") in by_year_scen:
        base = by_year_scen[(base_year, "mean")].set_index("area_id")["mean_srh"]
        for scen in sorted({s for y, s in by_year_scen if y == final_year}):
            final = by_year_scen[(final_year, scen)].set_index("area_id")["mean_srh"]
            common = base.index.intersection(final.index)
            for area in common:
                ranking_rows.append(
                    [area, scen, float(base[area]), float(final[area]), float(final[area] - base[area])]
                )
    ranking_df = pd.DataFrame(
        ranking_rows, columns=["area_id", "scenario", "base_mean_srh", "final_mean_srh", "change"]
    ).sort_values(["scenario", "change", "area_id"], kind="stable")
    _write_csv(ranking_df, out / "report_rankings.csv")

    summary = {"years": sorted({y for y, _ in by_year_scen})}
    accounting_files = sorted(out.glob("accounting_run*.csv"))
    if accounting_files:
        finals = []
        for f in accounting_files:
            acc = pd.read_csv(f)
            finals.append(int(acc["pop_end"].iloc[-1]) if len(acc) else 0)
        order = np.argsort(finals, kind="stable")
        summary["median_run"] = int(order[len(order) // 2])
        summary["final_populations"] = finals
    validation_file = out / "validation.csv"
    if validation_file.exists():
        val = pd.read_csv(validation_file)
        summary["mean_r2"] = float(val["r2"].mean())
        summary["mean_mse"] = float(val["mse"].mean())
    (out / "report_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"national": national_df, "rankings": ranking_df}
