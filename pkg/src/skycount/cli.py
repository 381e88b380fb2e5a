"""Command-line front-end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every subcommand is deterministic given its flags and seed.
"""

from __future__ import annotations

import re
import sys
from dataclasses import replace
from datetime import datetime

import click
import numpy as np

from . import counts as counts_mod
from . import detect_eval, factors, io, synth
from .errors import ConfigError, DataError, SkycountError
from .estimate import SpeedModel
from .geo import road_filter
from .pipeline import PipelineConfig, run_pipeline

_LENGTH_RE = re.compile(r"^\s*([0-9.]+)\s*(km|mi)\s*$")
_SPEED_RE = re.compile(r"^\s*([0-9.]+)\s*(km|mi)\s*/\s*h\s*$")


def parse_length(text: str) -> tuple[float, str]:
    m = _LENGTH_RE.match(text)
    if not m:
        raise click.UsageError(f"cannot parse length {text!r}; expected e.g. '18km' or '65mi'")
    return float(m.group(1)), m.group(2)


def parse_speed(text: str) -> tuple[float, str]:
    m = _SPEED_RE.match(text)
    if not m:
        raise click.UsageError(f"cannot parse speed {text!r}; expected e.g. '90km/h'")
    return float(m.group(1)), m.group(2)


def parse_timestamp(text: str) -> datetime:
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise click.UsageError(f"cannot parse timestamp {text!r}; expected ISO 8601")


def _load_road(road_path, road_id, radius):
    road = io.pick_road(io.read_roads(road_path), road_id)
    if radius is not None:
        road = replace(road, filter_radius_m=radius)
    return road


def _boxes_by_image(boxes):
    by_image: dict[str, list] = {}
    for b in boxes:
        by_image.setdefault(b.image_id, []).append(b)
    return by_image


@click.group()
def cli():
    """Estimate annual average daily truck traffic from snapshot detections."""


@cli.command()
@click.option("--boxes", "boxes_path", required=True, type=click.Path(exists=True))
@click.option("--road", "road_path", required=True, type=click.Path(exists=True))
@click.option("--road-id", default=None)
@click.option("--radius", type=float, default=None, help="Override the filter radius (m).")
@click.option("--out", "out_path", required=True, type=click.Path())
def roadfilter(boxes_path, road_path, road_id, radius, out_path):
    """Drop boxes with no corner within the filter radius of the road."""
    boxes = io.read_boxes(boxes_path)
    road = _load_road(road_path, road_id, radius)
    kept = road_filter(boxes, road)
    io.write_boxes(out_path, kept)
    click.echo(f"kept {len(kept)} of {len(boxes)} boxes (radius {road.filter_radius_m:g} m)")


@cli.command("eval-detect")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--road", "road_path", default=None, type=click.Path(exists=True))
@click.option("--road-id", default=None)
@click.option("--radius", type=float, default=None)
@click.option("--threshold", type=float, default=0.0)
@click.option("--iou-min", type=float, default=detect_eval.DEFAULT_IOU_MIN)
@click.option("--out", "out_path", default=None, type=click.Path())
def eval_detect(pred_path, truth_path, road_path, road_id, radius, threshold, iou_min, out_path):
    """Precision, recall and count error at one score threshold."""
    preds = _boxes_by_image(io.read_boxes(pred_path))
    truths = _boxes_by_image(io.read_boxes(truth_path))
    road = _load_road(road_path, road_id, radius) if road_path else None
    res = detect_eval.evaluate_images(preds, truths, iou_min, threshold, road)
    m = res.match
    click.echo(
        f"threshold={threshold:g} tp={m.true_positives} fp={m.false_positives} "
        f"fn={m.false_negatives} precision={m.precision:.4f} recall={m.recall:.4f} "
        f"count_error={res.count_err:.6f}"
    )
    if out_path:
        sweep = detect_eval.ThresholdSweep(
            np.array([threshold]),
            np.array([res.count_err]),
            np.array([m.precision]),
            np.array([m.recall]),
            (threshold, res.count_err),
        )
        io.write_sweep(out_path, sweep)


@cli.command("tune-threshold")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--road", "road_path", default=None, type=click.Path(exists=True))
@click.option("--road-id", default=None)
@click.option("--radius", type=float, default=None)
@click.option("--iou-min", type=float, default=detect_eval.DEFAULT_IOU_MIN)
@click.option("--grid-step", type=float, default=0.005)
@click.option("--out", "out_path", required=True, type=click.Path())
def tune_threshold_cmd(pred_path, truth_path, road_path, road_id, radius, iou_min, grid_step, out_path):
    """Sweep score thresholds and report the count-error minimizer."""
    preds = _boxes_by_image(io.read_boxes(pred_path))
    truths = _boxes_by_image(io.read_boxes(truth_path))
    road = _load_road(road_path, road_id, radius) if road_path else None
    n_steps = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    sweep = detect_eval.tune_threshold(preds, truths, road, grid, iou_min)
    io.write_sweep(out_path, sweep)
    t_opt, err_opt = sweep.optimum
    i = int(np.nonzero(sweep.thresholds == t_opt)[0][0])
    click.echo(
        f"optimum threshold={t_opt:g} count_error={err_opt:.6f} "
        f"precision={sweep.precisions[i]:.4f} recall={sweep.recalls[i]:.4f}"
    )


@cli.command("ingest-toll")
@click.option("--trips", "trips_path", required=True, type=click.Path(exists=True))
@click.option("--mileposts", "mileposts_path", required=True, type=click.Path(exists=True))
@click.option("--section", required=True, help="Comma-separated plaza pair, e.g. 'EXIT30,EXIT31'.")
@click.option("--speed", type=float, required=True, help="Assumed speed in miles/hour.")
@click.option("--region", default="NY")
@click.option("--class-rule", type=click.Choice(["none", "ny", "ca"]), default="none")
@click.option("--strict", is_flag=True, help="Unknown vehicle classes become errors.")
@click.option("--out", "out_path", required=True, type=click.Path())
def ingest_toll(trips_path, mileposts_path, section, speed, region, class_rule, strict, out_path):
    """Turn toll trips into hourly section counts."""
    parts = [p.strip() for p in section.split(",")]
    if len(parts) != 2 or not all(parts):
        raise click.UsageError("--section needs exactly two plaza names, e.g. 'A,B'")
    trips = io.read_trips(trips_path)
    if class_rule == "ny":
        trips = counts_mod.filter_truck_classes(trips, counts_mod.ny_thruway_rule(strict))
    elif class_rule == "ca":
        trips = counts_mod.filter_truck_classes(trips, counts_mod.california_rule(strict))
    mileposts = io.read_mileposts(mileposts_path)
    hourly = counts_mod.toll_to_section_counts(trips, mileposts, (parts[0], parts[1]), speed, region)
    io.write_counts(out_path, hourly)
    click.echo(f"wrote {len(hourly)} section-hours covering {sum(c.count for c in hourly):g} trips")


@cli.command("normalize")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--means-out", "means_path", default=None, type=click.Path())
def normalize_cmd(counts_path, out_path, means_path):
    """Divide each station-year by its mean hourly count."""
    series = counts_mod.normalize(io.read_counts(counts_path))
    flat = [c for s in series for c in s.counts]
    io.write_counts(out_path, flat)
    if means_path:
        io.write_station_means(means_path, series)
    click.echo(f"normalized {len(flat)} rows over {len(series)} station-years")


@cli.command("aadtt")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["simple", "aashto"]), default="simple")
@click.option("--out", "out_path", default=None, type=click.Path())
def aadtt_cmd(counts_path, method, out_path):
    """Annual average daily traffic per station."""
    rows = io.read_counts(counts_path)
    by_station: dict[tuple[str, str], list] = {}
    for c in rows:
        by_station.setdefault((c.region, c.station_id), []).append(c)
    table = []
    for (region, station), station_counts in sorted(by_station.items()):
        fn = counts_mod.aadtt_simple if method == "simple" else counts_mod.aadtt_aashto
        value = fn(station_counts)
        table.append((station, region, method, value))
        click.echo(f"{region} {station} {value:.1f}")
    if out_path:
        io.write_aadtt_table(out_path, table)


@cli.command("sample-stations")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--target", type=float, default=10.0, help="Station-year equivalents per region.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", default=None, type=click.Path())
def sample_stations_cmd(counts_path, target, seed, out_path):
    """Pick the most complete, highest-traffic stations per region."""
    summaries = counts_mod.summarize_stations(io.read_counts(counts_path))
    selection = counts_mod.sample_stations(summaries, target, seed)
    for region in sorted(selection):
        click.echo(f"{region}: {', '.join(selection[region]) or '(none)'}")
    if out_path:
        io.write_station_selection(out_path, selection)


_SPEC_ALIASES = {"rf": "random-forest", "random-forest": "random-forest"}
_SPEC_ALIASES.update({k: k for k in factors.LINEAR_KINDS})


def _resolve_specs(text: str) -> list[str]:
    if text == "all":
        return list(factors.ALL_KINDS)
    kinds = []
    for part in text.split(","):
        part = part.strip()
        if part not in _SPEC_ALIASES:
            raise click.UsageError(f"unknown spec {part!r}; use rf, linear-1..linear-6 or all")
        kinds.append(_SPEC_ALIASES[part])
    return kinds


@cli.command("train-factors")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--spec", default="rf", help="rf or linear-1..linear-6.")
@click.option("--regions", default=None, help="Comma-separated region filter.")
@click.option("--seed", type=int, default=0)
@click.option("--trees", type=int, default=factors.N_TREES)
@click.option("--min-leaf", type=int, default=factors.MIN_LEAF)
@click.option("--out", "out_path", required=True, type=click.Path())
def train_factors(counts_path, spec, regions, seed, trees, min_leaf, out_path):
    """Fit a time-variation factor model on normalized counts."""
    kinds = _resolve_specs(spec)
    if len(kinds) != 1:
        raise click.UsageError("--spec must name exactly one model")
    series = counts_mod.normalize(io.read_counts(counts_path))
    if regions:
        wanted = {r.strip() for r in regions.split(",")}
        series = [s for s in series if s.region in wanted]
    if not series:
        raise DataError("no counts left after the region filter")
    rows = factors.rows_from_normalized(series)
    keys = np.vstack([rows[r][0] for r in sorted(rows)])
    y = np.concatenate([rows[r][1] for r in sorted(rows)])
    model = factors.train_factor_model(
        kinds[0], keys, y, regions=tuple(sorted(rows)), seed=seed,
        n_trees=trees, min_leaf=min_leaf,
    )
    factors.save_model(model, out_path)
    click.echo(
        f"trained {model.spec.kind} on {y.size} rows from {','.join(model.training_regions)}; "
        f"feasible={model.feasible} residual_cells={len(model.residual_bank)}"
    )
    if not model.feasible:
        click.echo("warning: model is infeasible (negative factor predictions)", err=True)


@cli.command("crossval")
@click.option("--counts", "counts_path", required=True, type=click.Path(exists=True))
@click.option("--specs", default="all")
@click.option("--seed", type=int, default=0)
@click.option("--trees", type=int, default=factors.N_TREES)
@click.option("--out", "out_path", default=None, type=click.Path())
def crossval_cmd(counts_path, specs, seed, trees, out_path):
    """Leave-one-region-out comparison of factor model specs."""
    series = counts_mod.normalize(io.read_counts(counts_path))
    rows = factors.rows_from_normalized(series)
    scores = factors.cross_validate(rows, _resolve_specs(specs), seed, n_trees=trees)
    for s in scores:
        if s.excluded:
            click.echo(f"{s.kind:<14} excluded (negative predictions in: "
                       f"{', '.join(s.infeasible_regions)})")
        else:
            per_region = "  ".join(f"{r}={m:.4f}" for r, m in sorted(s.per_region.items()))
            click.echo(f"{s.kind:<14} mean_mae={s.mean_mae:.4f}  {per_region}")
    if out_path:
        io.write_crossval(out_path, scores)


@cli.command("estimate")
@click.option("--boxes", "boxes_path", required=True, type=click.Path(exists=True))
@click.option("--road", "road_path", default=None, type=click.Path(exists=True))
@click.option("--road-id", default=None)
@click.option("--radius", type=float, default=None)
@click.option("--model", "model_path", default=None, type=click.Path())
@click.option("--timestamp", required=True)
@click.option("--section-length", "section_length", required=True, help="E.g. '18km' or '65mi'.")
@click.option("--section-id", default="section")
@click.option("--region", default="")
@click.option("--speed", default=None, help="Override, e.g. '90km/h'.")
@click.option("--threshold", type=float, default=None)
@click.option("--n", "n_samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--samples-out", "samples_path", default=None, type=click.Path())
@click.option("--report-out", "report_path", default=None, type=click.Path())
def estimate_cmd(
    boxes_path, road_path, road_id, radius, model_path, timestamp, section_length,
    section_id, region, speed, threshold, n_samples, seed, config_path, out_path,
    samples_path, report_path,
):
    """Estimate the AADTT distribution for one snapshot."""
    config = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()
    config = config.override(
        roads_path=road_path, road_id=road_id, filter_radius_m=radius,
        model_path=model_path, threshold=threshold, n_samples=n_samples, seed=seed,
    )
    length, unit = parse_length(section_length)
    speed_model = None
    if speed:
        v0, sunit = parse_speed(speed)
        speed_model = SpeedModel(v0, config.rel_sd, sunit)
    result = run_pipeline(
        config, boxes_path, parse_timestamp(timestamp), section_id, length, unit,
        region, speed_model,
    )
    click.echo(result.report, nl=False)
    if out_path:
        io.write_estimate_row(out_path, result.row)
    if samples_path:
        io.write_samples(samples_path, result.estimate.samples)
    if report_path:
        with open(report_path, "w") as fh:
            fh.write(result.report)


@cli.group()
def synth_cmd():
    """Generate synthetic oracle data."""


cli.add_command(synth_cmd, name="synth")


def _make_world(aadtt, noise, gaussian_sd, year, sunday_ban, seed):
    return synth.TrafficWorld(
        aadtt,
        synth.default_surface(sunday_ban=sunday_ban),
        noise=noise,
        gaussian_sd=gaussian_sd,
        year=year,
        seed=seed,
    )


@synth_cmd.command("hourly")
@click.option("--aadtt", type=float, default=2400.0)
@click.option("--stations", type=int, default=1)
@click.option("--completeness", type=float, default=1.0)
@click.option("--noise", type=click.Choice(["poisson", "gaussian", "none"]), default="poisson")
@click.option("--gaussian-sd", type=float, default=10.0)
@click.option("--year", type=int, default=2017)
@click.option("--region", default="SYN")
@click.option("--sunday-ban", is_flag=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_hourly(aadtt, stations, completeness, noise, gaussian_sd, year, region, sunday_ban, seed, out_path):
    """Simulated hourly counters with known ground truth."""
    world = _make_world(aadtt, noise, gaussian_sd, year, sunday_ban, seed)
    rows = synth.gen_hourly(world, stations, completeness, seed, region)
    io.write_counts(out_path, rows)
    click.echo(f"wrote {len(rows)} hourly rows for {stations} stations (aadtt_true={aadtt:g})")


@synth_cmd.command("snapshot")
@click.option("--aadtt", type=float, default=2400.0)
@click.option("--timestamp", required=True)
@click.option("--section-length", "section_length", default="65mi")
@click.option("--speed", default="65mi/h")
@click.option("--year", type=int, default=2017)
@click.option("--region", default="SYN")
@click.option("--section-id", default="SYN-SEC")
@click.option("--sunday-ban", is_flag=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth_snapshot(aadtt, timestamp, section_length, speed, year, region, section_id, sunday_ban, seed, out_path):
    """One Poisson snapshot count for a section."""
    world = _make_world(aadtt, "poisson", 0.0, year, sunday_ban, seed)
    length, unit = parse_length(section_length)
    v0, sunit = parse_speed(speed)
    if sunit != unit:
        raise click.UsageError("speed unit must match the section length unit")
    obs = synth.gen_snapshot(world, length, unit, v0, parse_timestamp(timestamp), seed,
                             section_id, region)
    io.write_snapshot(out_path, obs)
    click.echo(f"snapshot c_I={obs.c_i} (expected "
               f"{synth.expected_snapshot_count(world, length, v0, obs.timestamp):.2f})")


@synth_cmd.command("scene")
@click.option("--road", "road_path", default=None, type=click.Path(exists=True))
@click.option("--road-id", default=None)
@click.option("--radius", type=float, default=8.0)
@click.option("--n-on", type=int, default=7)
@click.option("--n-off", type=int, default=13)
@click.option("--tp-score", type=float, default=0.9)
@click.option("--fp-score", type=float, default=0.1)
@click.option("--n-fp", type=int, default=0)
@click.option("--n-miss", type=int, default=0)
@click.option("--jitter-m", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@click.option("--out-pred", "pred_path", required=True, type=click.Path())
@click.option("--out-truth", "truth_path", required=True, type=click.Path())
@click.option("--out-road", "out_road_path", default=None, type=click.Path())
def synth_scene(road_path, road_id, radius, n_on, n_off, tp_score, fp_score, n_fp,
                n_miss, jitter_m, seed, pred_path, truth_path, out_road_path):
    """A detection scene: truth boxes on/off a road plus noisy predictions."""
    if road_path:
        road = io.pick_road(io.read_roads(road_path, radius), road_id)
    else:
        road = synth.straight_road(filter_radius_m=radius)
    spec = synth.SceneSpec(tp_score, fp_score, n_fp, n_miss, jitter_m)
    preds, truths = synth.gen_scene(road, n_on, n_off, spec, seed)
    io.write_boxes(pred_path, preds)
    io.write_boxes(truth_path, truths)
    if out_road_path:
        io.write_roads(out_road_path, [road])
    click.echo(f"scene: {len(truths)} truths ({n_on} on road), {len(preds)} predictions")


@cli.command("validate")
@click.argument("files", nargs=-1, required=True, type=click.Path())
@click.option("--kind", type=click.Choice(["auto", "boxes", "roads", "counts", "mileposts", "trips"]),
              default="auto")
def validate_cmd(files, kind):
    """Schema-check input files; prints path:line: message diagnostics."""
    diags = io.validate_inputs(files, kind)
    for d in diags:
        click.echo(str(d))
    if diags:
        raise DataError(f"{len(diags)} problem(s) found")
    click.echo(f"{len(files)} file(s) ok")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except SkycountError as e:
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
