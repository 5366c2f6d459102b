"""Command-line interface; every pipeline stage is a subcommand."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd


def _years_arg(text: str) -> list[int]:
    """`2023:2057` (inclusive range) or `2030,2040,2057`."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--runs", type=int, default=None, help="override the configured run count")
    common.add_argument("--out", type=str, default=None, help="output file or directory")
    common.add_argument("--config", type=str, default=None, help="scenario or pipeline config JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="srhcast",
        description="Small-area SRH projection: microsimulation, ordinal regression, forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate all synthetic inputs")
    p.add_argument("--spec", type=str, default=None, help="generator spec JSON (defaults used otherwise)")

    p = sub.add_parser("simulate", parents=[common], help="run the microsimulation")
    p.add_argument("--population", required=True)
    p.add_argument("--geography", required=True)
    p.add_argument("--snapshot-years", type=_years_arg, default=None)
    p.add_argument("--keep-states", action="store_true", help="write every yearly population")

    p = sub.add_parser("fit", parents=[common], help="fit the ordinal SRH model")
    p.add_argument("--train", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--link", choices=("logit", "probit"), default="logit")

    p = sub.add_parser("predict", parents=[common], help="per-individual SRH probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--geography", required=True)
    p.add_argument("--schema", required=True)

    p = sub.add_parser("align", parents=[common], help="per-cohort ratio alignment of predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--table", default=None, help="alignment table CSV (cohort key + census/micro columns)")
    p.add_argument("--census", default=None, help="cohort census distributions CSV")
    p.add_argument("--micro", default=None, help="cohort microdata distributions CSV")

    p = sub.add_parser("forecast", parents=[common], help="GP/Monte-Carlo cohort forecasts")
    p.add_argument("--history", required=True)
    p.add_argument("--years", type=_years_arg, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("aggregate", parents=[common], help="aggregate aligned predictions per area")
    p.add_argument("--pred", required=True)

    p = sub.add_parser("validate", parents=[common], help="R^2/MSE of per-area predictions vs reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("casestudy", parents=[common], help="facility-distance vs SRH quadrants")
    p.add_argument("--centroids", required=True)
    p.add_argument("--facilities", required=True)
    p.add_argument("--results", required=True, help="aggregated areas CSV")
    p.add_argument("--geojson", default=None, help="optional GeoJSON to join properties into")

    sub.add_parser("report", parents=[common], help="summaries from a pipeline output directory")

    p = sub.add_parser("run", parents=[common], help="full pipeline from a config JSON")
    p.add_argument("--workers", type=int, default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except Exception as err:  # stage-tagged diagnostics, nonzero exit
        print(f"srhcast {args.command}: error: {err}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    command = args.command

    if command == "synth":
        from .synthetic import GeneratorSpec, synth_all

        spec = GeneratorSpec.load(args.spec) if args.spec else GeneratorSpec()
        if args.seed is not None:
            spec.seed = args.seed
        out = Path(args.out or "synth_out")
        paths = synth_all(spec, out)
        print(json.dumps({k: str(out / v) for k, v in paths.items()}, indent=2, sort_keys=True))
        return 0

    if command == "simulate":
        from .geography import Geography
        from .microsim.config import ScenarioConfig
        from .microsim.engine import run as engine_run
        from .microsim.rates import load_tables
        from .microsim.state import PopulationState

        if not args.config:
            raise ValueError("simulate requires --config <scenario.json>")
        config_path = Path(args.config)
        scen = ScenarioConfig.load(config_path)
        if args.seed is not None or args.runs is not None:
            doc = json.loads(scen.to_json())
            if args.seed is not None:
                doc["seed"] = args.seed
            if args.runs is not None:
                doc["runs"] = args.runs
            scen = ScenarioConfig.from_json(json.dumps(doc))
        geography = Geography.from_csv(args.geography)
        tables = load_tables(scen.rate_table_paths, base_dir=config_path.parent)
        base = PopulationState.from_csv(args.population, scen.start_year, geography)
        out = Path(args.out or "simulate_out")
        out.mkdir(parents=True, exist_ok=True)
        snapshots = set(args.snapshot_years or []) | {scen.end_year}
        for i in range(scen.runs):
            result = engine_run(
                scen,
                base,
                tables,
                run_index=i,
                keep_states=args.keep_states,
                snapshot_years=snapshots,
            )
            result.accounting.to_csv(out / f"accounting_run{i}.csv", index=False)
            for st in result.states or [result.final_state]:
                st.to_csv(out / f"population_run{i}_year{st.year}.csv")
        print(f"wrote {scen.runs} run(s) to {out}")
        return 0

    if command == "fit":
        from .encoding import EncodingSchema
        from .ordinal import fit, load_training_csv

        schema = EncodingSchema.load(args.schema)
        data = load_training_csv(args.train, schema)
        model = fit(data, link=args.link, schema=schema)
        out = Path(args.out or "model.json")
        model.save(out)
        print(f"fitted {len(model.beta)} coefficients -> {out}")
        return 0

    if command == "predict":
        from .encoding import EncodingSchema
        from .geography import Geography
        from .ordinal import OrdinalModel
        from .pipeline import predict_population

        schema = EncodingSchema.load(args.schema)
        model = OrdinalModel.load(args.model)
        geography = Geography.from_csv(args.geography)
        population = pd.read_csv(args.population, dtype={"area_id": str})
        pred = predict_population(population, geography, schema, model)
        out = Path(args.out or "predictions.csv")
        pred.to_csv(out, index=False, float_format="%.12g")
        print(f"predicted {len(pred)} individuals -> {out}")
        return 0

    if command == "align":
        from .alignment import AlignmentTable
        from .pipeline import align_predictions, build_alignment_table

        pred = pd.read_csv(args.pred, dtype={"area_id": str})
        if args.table:
            table = AlignmentTable.from_csv(args.table)
        elif args.census and args.micro:
            table = build_alignment_table(pd.read_csv(args.census), pd.read_csv(args.micro))
        else:
            raise ValueError("align needs --table, or --census and --micro")
        aligned = align_predictions(pred, table)
        out = Path(args.out or "aligned.csv")
        aligned.to_csv(out, index=False, float_format="%.12g")
        print(f"aligned {len(aligned)} predictions -> {out}")
        return 0

    if command == "forecast":
        from .forecast import forecast_history, read_history_csv

        series = read_history_csv(args.history)
        df = forecast_history(
            series,
            args.years,
            n_samples=args.samples,
            seed=args.seed or 0,
            workers=args.workers,
        )
        out = Path(args.out or "forecast.csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out, index=False, float_format="%.12g")
        print(f"forecast {len(series)} series x {len(args.years)} years -> {out}")
        return 0

    if command == "aggregate":
        from .pipeline import aggregate_areas

        pred = pd.read_csv(args.pred, dtype={"area_id": str})
        areas = aggregate_areas(pred)
        out = Path(args.out or "areas.csv")
        areas.to_csv(out, index=False, float_format="%.12g")
        print(f"aggregated {len(areas)} areas -> {out}")
        return 0

    if command == "validate":
        from .pipeline import validate_against_reference

        pred = pd.read_csv(args.pred, dtype={"area_id": str})
        ref = pd.read_csv(args.ref, dtype={"area_id": str})
        result = validate_against_reference(pred, ref)
        if args.out:
            result.to_csv(args.out, index=False, float_format="%.12g")
        print(
            f"areas={len(result)} mean_r2={result['r2'].mean():.4f}"
            f" mean_mse={result['mse'].mean():.6f}"
        )
        return 0

    if command == "casestudy":
        from . import spatial

        areas = pd.read_csv(args.results, dtype={"area_id": str})
        centroids = spatial.read_centroids_csv(args.centroids)
        facilities = spatial.read_facilities_csv(args.facilities)
        srh_by_area = dict(zip(areas["area_id"], areas["mean_srh"]))
        case = spatial.facility_distance_frame(centroids, facilities, srh_by_area)
        out = Path(args.out or "casestudy.csv")
        case.to_csv(out, index=False, float_format="%.12g")
        if args.geojson:
            doc = json.loads(Path(args.geojson).read_text())
            joined = spatial.join_geojson_properties(doc, case)
            Path(out.with_suffix(".geojson")).write_text(json.dumps(joined))
        print(f"case study for {len(case)} areas -> {out}")
        return 0

    if command == "report":
        from .pipeline import report

        out = Path(args.out or ".")
        tables = report(out)
        print(tables["national"].to_string(index=False))
        return 0

    if command == "run":
        from .pipeline import PipelineConfig, run_pipeline

        if not args.config:
            raise ValueError("run requires --config <pipeline.json>")
        config = PipelineConfig.from_json_file(
            args.config, out=args.out, seed=args.seed, runs=args.runs, workers=args.workers
        )
        out = run_pipeline(config)
        print(f"pipeline complete -> {out}")
        return 0

    raise ValueError(f"unknown command {command!r}")


if __name__ == "__main__":
    sys.exit(main())
