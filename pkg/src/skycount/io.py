"""External file formats: parsing, writing, and validation diagnostics.

Formats (all CSV unless noted):
  boxes      image_id,class,score,lon1,lat1,lon2,lat2,lon3,lat3,lon4,lat4
             (score empty for ground truth)
  roads      GeoJSON FeatureCollection of LineString features; property
             road_id required, filter_radius_m optional
  counts     station_id,region,timestamp,count,vehicle_class (class optional)
  mileposts  plaza,milepost_miles
  trips      entry_plaza,exit_plaza,entry_time,vehicle_class
  sweep      threshold,count_error,precision,recall
  snapshot   section_id,timestamp,c_i,section_length,length_unit,region
  estimate   section_id,timestamp,region,c_raw,c_thresholded,c_onroad,
             threshold,radius_m,median,q25,q75,n_samples,seed
  crossval   spec,region,mae,excluded  (region "(mean)" rows carry averages)

Floats are written with repr so every machine-readable file round-trips
bit-exactly through the readers here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .counts import HourlyCount, TollTrip
from .detect_eval import ThresholdSweep
from .errors import DataError
from .estimate import SnapshotObservation
from .factors import SpecScore
from .geo import DEFAULT_FILTER_RADIUS_M, GeoBox, GeoPoint, RoadPolyline, dedupe_vertices

BOX_HEADER = ["image_id", "class", "score"] + [
    f"{ax}{i}" for i in range(1, 5) for ax in ("lon", "lat")
]
COUNT_HEADER = ["station_id", "region", "timestamp", "count", "vehicle_class"]
MILEPOST_HEADER = ["plaza", "milepost_miles"]
TRIP_HEADER = ["entry_plaza", "exit_plaza", "entry_time", "vehicle_class"]
SWEEP_HEADER = ["threshold", "count_error", "precision", "recall"]
SNAPSHOT_HEADER = ["section_id", "timestamp", "c_i", "section_length", "length_unit", "region"]
ESTIMATE_HEADER = [
    "section_id", "timestamp", "region", "c_raw", "c_thresholded", "c_onroad",
    "threshold", "radius_m", "median", "q25", "q75", "n_samples", "seed",
]
CROSSVAL_HEADER = ["spec", "region", "mae", "excluded"]
MEAN_ROW = "(mean)"


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    message: str

    def __str__(self):
        return f"{self.path}:{self.line}: {self.message}"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def _rows(path):
    with open(path, newline="") as fh:
        yield from csv.reader(fh)


def _parse_ts(text: str) -> datetime:
    return datetime.fromisoformat(text)


# -- boxes --------------------------------------------------------------


def _parse_box_row(row: list[str]) -> GeoBox:
    if len(row) != len(BOX_HEADER):
        raise ValueError(f"expected {len(BOX_HEADER)} columns, got {len(row)}")
    score = None if row[2].strip() == "" else float(row[2])
    coords = [float(v) for v in row[3:]]
    corners = tuple(GeoPoint(coords[2 * i], coords[2 * i + 1]) for i in range(4))
    return GeoBox(corners, score, row[0], row[1])


def read_boxes(path) -> list[GeoBox]:
    boxes = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] != BOX_HEADER:
                raise DataError(f"{path}:1: bad boxes header")
            continue
        if not row:
            continue
        try:
            boxes.append(_parse_box_row(row))
        except (ValueError, IndexError) as e:
            raise DataError(f"{path}:{i}: {e}")
    return boxes


def write_boxes(path, boxes: list[GeoBox]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BOX_HEADER)
        for b in boxes:
            coords = [v for c in b.corners for v in (c.lon, c.lat)]
            w.writerow([b.image_id, b.class_label, _fmt(b.score)] + [_fmt(v) for v in coords])


def validate_boxes(path) -> list[Diagnostic]:
    diags = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] != BOX_HEADER:
                diags.append(Diagnostic(str(path), 1, "bad boxes header"))
                return diags
            continue
        if not row:
            continue
        try:
            _parse_box_row(row)
        except (ValueError, IndexError) as e:
            diags.append(Diagnostic(str(path), i, str(e)))
    return diags


# -- roads (GeoJSON) ----------------------------------------------------


def read_roads(path, default_radius: float = DEFAULT_FILTER_RADIUS_M) -> list[RoadPolyline]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: expected a GeoJSON FeatureCollection")
    roads = []
    for idx, feature in enumerate(doc.get("features", [])):
        geom = feature.get("geometry") or {}
        props = feature.get("properties") or {}
        if geom.get("type") != "LineString":
            raise DataError(f"{path}: feature {idx} is not a LineString")
        road_id = props.get("road_id")
        if not road_id:
            raise DataError(f"{path}: feature {idx} is missing the road_id property")
        radius = float(props.get("filter_radius_m", default_radius))
        pts = dedupe_vertices([GeoPoint(lon, lat) for lon, lat in geom.get("coordinates", [])])
        try:
            roads.append(RoadPolyline(tuple(pts), radius, str(road_id)))
        except ValueError as e:
            raise DataError(f"{path}: feature {idx}: {e}")
    return roads


def write_roads(path, roads: list[RoadPolyline]) -> None:
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"road_id": r.road_id, "filter_radius_m": r.filter_radius_m},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[v.lon, v.lat] for v in r.vertices],
                },
            }
            for r in roads
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def validate_roads(path) -> list[Diagnostic]:
    try:
        read_roads(path)
    except (DataError, ValueError, json.JSONDecodeError) as e:
        return [Diagnostic(str(path), 0, str(e))]
    return []


def pick_road(roads: list[RoadPolyline], road_id: str | None) -> RoadPolyline:
    if not roads:
        raise DataError("road file contains no roads")
    if road_id is None:
        return roads[0]
    for r in roads:
        if r.road_id == road_id:
            return r
    raise DataError(f"road_id {road_id!r} not found; have {[r.road_id for r in roads]}")


# -- counts -------------------------------------------------------------


def _parse_count_row(row: list[str]) -> HourlyCount:
    if len(row) not in (4, 5):
        raise ValueError(f"expected 4 or 5 columns, got {len(row)}")
    ts = _parse_ts(row[2])
    count = float(row[3])
    if count < 0:
        raise ValueError(f"negative count {count}")
    vclass = row[4].strip() if len(row) == 5 and row[4].strip() else None
    return HourlyCount(row[0], row[1], ts, count, vclass)


def read_counts(path) -> list[HourlyCount]:
    counts = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] not in (COUNT_HEADER, COUNT_HEADER[:4]):
                raise DataError(f"{path}:1: bad counts header")
            continue
        if not row:
            continue
        try:
            counts.append(_parse_count_row(row))
        except ValueError as e:
            raise DataError(f"{path}:{i}: {e}")
    return counts


def write_counts(path, counts: list[HourlyCount]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COUNT_HEADER)
        for c in counts:
            w.writerow(
                [c.station_id, c.region, c.timestamp.isoformat(), _fmt(c.count),
                 c.vehicle_class or ""]
            )


def validate_counts(path) -> list[Diagnostic]:
    diags = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] not in (COUNT_HEADER, COUNT_HEADER[:4]):
                diags.append(Diagnostic(str(path), 1, "bad counts header"))
                return diags
            continue
        if not row:
            continue
        try:
            _parse_count_row(row)
        except ValueError as e:
            diags.append(Diagnostic(str(path), i, str(e)))
    return diags


# -- mileposts ----------------------------------------------------------


def read_mileposts(path) -> dict[str, float]:
    table = {}
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] != MILEPOST_HEADER:
                raise DataError(f"{path}:1: bad mileposts header")
            continue
        if not row:
            continue
        try:
            table[row[0]] = float(row[1])
        except (ValueError, IndexError) as e:
            raise DataError(f"{path}:{i}: {e}")
    return table


def write_mileposts(path, table: dict[str, float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MILEPOST_HEADER)
        for plaza, mp in table.items():
            w.writerow([plaza, _fmt(float(mp))])


def validate_mileposts(path) -> list[Diagnostic]:
    diags = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] != MILEPOST_HEADER:
                diags.append(Diagnostic(str(path), 1, "bad mileposts header"))
                return diags
            continue
        if not row:
            continue
        try:
            float(row[1])
        except (ValueError, IndexError):
            diags.append(Diagnostic(str(path), i, f"bad milepost row: {row}"))
    return diags


# -- toll trips ----------------------------------------------------------


def _parse_trip_row(row: list[str]) -> TollTrip:
    if len(row) not in (3, 4):
        raise ValueError(f"expected 3 or 4 columns, got {len(row)}")
    vclass = row[3].strip() if len(row) == 4 and row[3].strip() else None
    return TollTrip(row[0], row[1], _parse_ts(row[2]), vclass)


def read_trips(path) -> list[TollTrip]:
    trips = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] not in (TRIP_HEADER, TRIP_HEADER[:3]):
                raise DataError(f"{path}:1: bad trips header")
            continue
        if not row:
            continue
        try:
            trips.append(_parse_trip_row(row))
        except ValueError as e:
            raise DataError(f"{path}:{i}: {e}")
    return trips


def write_trips(path, trips: list[TollTrip]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIP_HEADER)
        for t in trips:
            w.writerow(
                [t.entry_plaza, t.exit_plaza, t.entry_time.isoformat(), t.vehicle_class or ""]
            )


def validate_trips(path) -> list[Diagnostic]:
    diags = []
    for i, row in enumerate(_rows(path), start=1):
        if i == 1:
            if [c.strip() for c in row] not in (TRIP_HEADER, TRIP_HEADER[:3]):
                diags.append(Diagnostic(str(path), 1, "bad trips header"))
                return diags
            continue
        if not row:
            continue
        try:
            _parse_trip_row(row)
        except ValueError as e:
            diags.append(Diagnostic(str(path), i, str(e)))
    return diags


# -- threshold sweeps ----------------------------------------------------


def write_sweep(path, sweep: ThresholdSweep) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for t, e, p, r in zip(sweep.thresholds, sweep.count_errors, sweep.precisions, sweep.recalls):
            w.writerow([_fmt(float(t)), _fmt(float(e)), _fmt(float(p)), _fmt(float(r))])


def read_sweep(path) -> ThresholdSweep:
    rows = list(_rows(path))
    if not rows or [c.strip() for c in rows[0]] != SWEEP_HEADER:
        raise DataError(f"{path}:1: bad sweep header")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row])
    if data.size == 0:
        raise DataError(f"{path}: empty sweep")
    errors = data[:, 1]
    best = errors.min()
    i_opt = int(np.nonzero(errors == best)[0][-1])
    return ThresholdSweep(
        data[:, 0], errors, data[:, 2], data[:, 3], (float(data[i_opt, 0]), float(best))
    )


# -- snapshots -----------------------------------------------------------


def write_snapshot(path, obs: SnapshotObservation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        w.writerow(
            [obs.section_id, obs.timestamp.isoformat(), obs.c_i,
             _fmt(obs.section_length), obs.length_unit, obs.region]
        )


def read_snapshot(path) -> SnapshotObservation:
    rows = list(_rows(path))
    if len(rows) < 2 or [c.strip() for c in rows[0]] != SNAPSHOT_HEADER:
        raise DataError(f"{path}: bad snapshot file")
    r = rows[1]
    return SnapshotObservation(r[0], int(r[2]), float(r[3]), r[4], _parse_ts(r[1]), r[5])


# -- estimate rows and samples -------------------------------------------


def write_estimate_row(path, row: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_HEADER)
        w.writerow([_fmt(row[k]) for k in ESTIMATE_HEADER])


def read_estimate_row(path) -> dict:
    rows = list(_rows(path))
    if len(rows) < 2 or [c.strip() for c in rows[0]] != ESTIMATE_HEADER:
        raise DataError(f"{path}: bad estimate file")
    r = dict(zip(ESTIMATE_HEADER, rows[1]))
    for k in ("c_raw", "c_thresholded", "c_onroad", "n_samples"):
        r[k] = int(r[k])
    for k in ("threshold", "radius_m", "median", "q25", "q75"):
        r[k] = float(r[k])
    r["seed"] = int(r["seed"]) if r["seed"] else None
    return r


def write_samples(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "aadtt"])
        for i, s in enumerate(samples):
            w.writerow([i, _fmt(float(s))])


def read_samples(path) -> np.ndarray:
    rows = list(_rows(path))
    if not rows or rows[0] != ["sample_index", "aadtt"]:
        raise DataError(f"{path}: bad samples file")
    return np.array([float(r[1]) for r in rows[1:] if r])


# -- cross-validation results ---------------------------------------------


def write_crossval(path, scores: list[SpecScore]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CROSSVAL_HEADER)
        for s in scores:
            for region in sorted(s.per_region):
                w.writerow([s.kind, region, _fmt(s.per_region[region]), ""])
            w.writerow([s.kind, MEAN_ROW, _fmt(s.mean_mae), "true" if s.excluded else "false"])


def read_crossval(path) -> list[SpecScore]:
    rows = list(_rows(path))
    if not rows or [c.strip() for c in rows[0]] != CROSSVAL_HEADER:
        raise DataError(f"{path}:1: bad crossval header")
    by_spec: dict[str, SpecScore] = {}
    for row in rows[1:]:
        if not row:
            continue
        kind, region, mae, excluded = row
        score = by_spec.setdefault(kind, SpecScore(kind, None, {}, False, []))
        if region == MEAN_ROW:
            score.mean_mae = float(mae) if mae else None
            score.excluded = excluded == "true"
        else:
            score.per_region[region] = float(mae)
    return list(by_spec.values())


# -- small result tables ----------------------------------------------------

AADTT_HEADER = ["station_id", "region", "method", "aadtt"]
SELECTION_HEADER = ["region", "rank", "station_id"]
MEANS_HEADER = ["station_id", "region", "year", "mean_count"]


def write_aadtt_table(path, rows: list[tuple[str, str, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AADTT_HEADER)
        for station, region, method, value in rows:
            w.writerow([station, region, method, _fmt(float(value))])


def read_aadtt_table(path) -> list[tuple[str, str, str, float]]:
    rows = list(_rows(path))
    if not rows or [c.strip() for c in rows[0]] != AADTT_HEADER:
        raise DataError(f"{path}:1: bad aadtt header")
    return [(r[0], r[1], r[2], float(r[3])) for r in rows[1:] if r]


def write_station_selection(path, selection: dict[str, list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SELECTION_HEADER)
        for region in sorted(selection):
            for rank, station in enumerate(selection[region], start=1):
                w.writerow([region, rank, station])


def read_station_selection(path) -> dict[str, list[str]]:
    rows = list(_rows(path))
    if not rows or [c.strip() for c in rows[0]] != SELECTION_HEADER:
        raise DataError(f"{path}:1: bad station selection header")
    out: dict[str, list[str]] = {}
    for r in rows[1:]:
        if r:
            out.setdefault(r[0], []).append(r[2])
    return out


def write_station_means(path, series) -> None:
    """series: iterable of NormalizedSeries."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MEANS_HEADER)
        for s in series:
            w.writerow([s.station_id, s.region, s.year, _fmt(s.mean_count)])


def read_station_means(path) -> dict[tuple[str, int], float]:
    rows = list(_rows(path))
    if not rows or [c.strip() for c in rows[0]] != MEANS_HEADER:
        raise DataError(f"{path}:1: bad station means header")
    return {(r[0], int(r[2])): float(r[3]) for r in rows[1:] if r}


# -- generic validation ----------------------------------------------------

_VALIDATORS = {
    "boxes": validate_boxes,
    "roads": validate_roads,
    "counts": validate_counts,
    "mileposts": validate_mileposts,
    "trips": validate_trips,
}

_HEADER_KINDS = [
    (BOX_HEADER, "boxes"),
    (COUNT_HEADER, "counts"),
    (COUNT_HEADER[:4], "counts"),
    (MILEPOST_HEADER, "mileposts"),
    (TRIP_HEADER, "trips"),
    (TRIP_HEADER[:3], "trips"),
]


def detect_kind(path) -> str | None:
    """Guess a file's format from its extension or header row."""
    p = Path(path)
    if p.suffix.lower() in (".geojson", ".json"):
        return "roads"
    try:
        with open(path, newline="") as fh:
            first = fh.readline()
    except OSError:
        return None
    if first.lstrip().startswith("{"):
        return "roads"
    header = [c.strip() for c in next(csv.reader([first]), [])]
    for known, kind in _HEADER_KINDS:
        if header == known:
            return kind
    return None


def validate_inputs(paths, kind: str = "auto") -> list[Diagnostic]:
    """Schema-check external files; returns diagnostics instead of raising."""
    diags = []
    for path in paths:
        file_kind = kind
        if kind == "auto":
            file_kind = detect_kind(path)
            if file_kind is None:
                diags.append(Diagnostic(str(path), 0, "unrecognized file format"))
                continue
        try:
            diags.extend(_VALIDATORS[file_kind](path))
        except OSError as e:
            diags.append(Diagnostic(str(path), 0, str(e)))
    return diags
