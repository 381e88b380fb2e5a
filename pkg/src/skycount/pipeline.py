"""Inference-time composition: threshold filter -> road filter -> count -> estimate.

The pipeline is configured from a JSON file plus flag overrides (flags win)
and emits a human-readable report alongside a machine-readable CSV row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime

from . import io
from .errors import ConfigError, SkycountError
from .estimate import SpeedModel, SnapshotObservation, estimate_aadtt, speed_defaults
from .factors import load_model, predict_factor
from .geo import road_filter


class StageFailure(SkycountError):
    """Wraps an error with the pipeline stage it occurred in."""

    def __init__(self, stage: str, err: Exception):
        self.stage = stage
        self.err = err
        self.exit_code = getattr(err, "exit_code", 2)
        super().__init__(f"{stage}: {err}")


@dataclass
class PipelineConfig:
    roads_path: str | None = None
    road_id: str | None = None
    filter_radius_m: float | None = None  # None -> per-road value from the file
    model_path: str | None = None
    threshold: float = 0.0
    n_samples: int = 10_000
    seed: int = 0
    rel_sd: float = 0.05
    speeds: dict = field(default_factory=dict)  # region -> [v0, unit]

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            doc = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        bad = set(doc) - known
        if bad:
            raise ConfigError(f"{path}: unknown config keys {sorted(bad)}")
        return cls(**doc)

    def override(self, **kwargs) -> "PipelineConfig":
        """New config with non-None overrides applied (flags win)."""
        changes = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **changes)

    def speed_for(self, region: str, override: SpeedModel | None = None) -> SpeedModel:
        if override is not None:
            return override
        if region in self.speeds:
            v0, unit = self.speeds[region]
            return SpeedModel(float(v0), self.rel_sd, unit)
        return speed_defaults(region)


@dataclass
class PipelineResult:
    estimate: object
    report: str
    row: dict
    c_raw: int
    c_thresholded: int
    c_onroad: int


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SkycountError as e:
        raise StageFailure(name, e)
    except (OSError, ValueError, KeyError) as e:
        raise StageFailure(name, e)


def run_pipeline(
    config: PipelineConfig,
    boxes_path,
    timestamp: datetime,
    section_id: str,
    section_length: float,
    length_unit: str,
    region: str,
    speed: SpeedModel | None = None,
) -> PipelineResult:
    boxes = _stage("read-boxes", io.read_boxes, boxes_path)

    if config.roads_path is None:
        raise StageFailure("load-road", ConfigError("no roads file configured"))
    roads = _stage("load-road", io.read_roads, config.roads_path)
    road = _stage("load-road", io.pick_road, roads, config.road_id)
    if config.filter_radius_m is not None:
        road = replace(road, filter_radius_m=config.filter_radius_m)

    if config.model_path is None:
        raise StageFailure("load-model", ConfigError("no factor model configured"))
    model = _stage("load-model", load_model, config.model_path)

    kept = _stage(
        "threshold-filter",
        lambda: [b for b in boxes if b.score is None or b.score >= config.threshold],
    )
    on_road = _stage("road-filter", road_filter, kept, road)

    obs = _stage(
        "snapshot",
        SnapshotObservation,
        section_id,
        len(on_road),
        section_length,
        length_unit,
        timestamp,
        region,
    )
    speed_model = _stage("speed", config.speed_for, region, speed)
    est = _stage(
        "estimate",
        estimate_aadtt,
        obs,
        speed_model,
        model,
        n=config.n_samples,
        seed=config.seed,
    )

    lines = [
        f"section:           {section_id}",
        f"timestamp:         {timestamp.isoformat()}",
        f"region:            {region or '(none)'}",
        f"boxes in file:     {len(boxes)}",
        f"score >= {config.threshold:<9.3f} {len(kept)}",
        f"on road (<= {road.filter_radius_m:g} m): {len(on_road)}",
        f"c_I:               {len(on_road)}",
        f"factor prediction: {predict_factor(model, obs.time_key):.4f}",
        f"speed:             {speed_model.v0:g} {speed_model.unit}/h +- {speed_model.rel_sd:.0%}",
        f"AADTT median:      {est.median:.1f}",
        f"AADTT IQR:         [{est.q25:.1f}, {est.q75:.1f}]",
        f"samples:           {est.n_samples}   seed: {est.seed}",
    ]
    for w in est.warnings:
        lines.append(f"warning: {w}")
    report = "\n".join(lines) + "\n"

    row = {
        "section_id": section_id,
        "timestamp": timestamp.isoformat(),
        "region": region,
        "c_raw": len(boxes),
        "c_thresholded": len(kept),
        "c_onroad": len(on_road),
        "threshold": float(config.threshold),
        "radius_m": float(road.filter_radius_m),
        "median": est.median,
        "q25": est.q25,
        "q75": est.q75,
        "n_samples": est.n_samples,
        "seed": est.seed,
    }
    return PipelineResult(est, report, row, len(boxes), len(kept), len(on_road))
