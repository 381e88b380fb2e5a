"""Synthetic traffic worlds with known ground truth.

Every acceptance check runs against data from here: the annual average and
the factor surface are chosen up front, so hourly counters, snapshot counts
and detection scenes can be generated with exactly known expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable

import numpy as np

from .counts import HourlyCount
from .errors import DomainError
from .estimate import SnapshotObservation
from .factors import TimeKey
from .geo import EARTH_RADIUS_M, GeoBox, GeoPoint, RoadPolyline, _polyline_xy

_DEG = math.pi / 180.0


def default_surface(sunday_ban: bool = False) -> Callable[[int, int, int], float]:
    """Diurnal sine times a weekday/weekend step, before normalization.

    The sunday_ban variant crushes Sunday traffic the way strict driving
    bans do, which makes one region's pattern deliberately diverge.
    """

    def surface(hour: int, dow: int, month: int) -> float:
        diurnal = 1.0 + 0.6 * math.sin(2.0 * math.pi * (hour - 14) / 24.0)
        if sunday_ban and dow == 7:
            weekly = 0.2
        elif dow >= 6:
            weekly = 0.7
        else:
            weekly = 1.12
        return diurnal * weekly

    return surface


def year_timestamps(year: int) -> list[datetime]:
    start = datetime(year, 1, 1)
    end = datetime(year + 1, 1, 1)
    n = int((end - start).total_seconds() // 3600)
    return [start + timedelta(hours=i) for i in range(n)]


class TrafficWorld:
    """Ground-truth world: AADTT, a mean-one factor surface, and a noise model.

    The raw surface is renormalized so its mean over the reference year's
    hours is exactly 1, making aadtt_true/24 the true mean hourly count.
    """

    def __init__(
        self,
        aadtt_true: float,
        factor_surface: Callable[[int, int, int], float] | None = None,
        noise: str = "poisson",
        gaussian_sd: float = 0.0,
        year: int = 2017,
        seed: int = 0,
    ):
        if aadtt_true <= 0:
            raise ValueError(f"aadtt_true must be positive, got {aadtt_true}")
        if noise not in ("poisson", "gaussian", "none"):
            raise ValueError(f"noise must be poisson, gaussian or none, got {noise!r}")
        self.aadtt_true = float(aadtt_true)
        self.noise = noise
        self.gaussian_sd = float(gaussian_sd)
        self.year = year
        self.seed = seed

        surface = factor_surface if factor_surface is not None else default_surface()
        raw = np.zeros((24, 8, 13))
        for h in range(24):
            for d in range(1, 8):
                for m in range(1, 13):
                    raw[h, d, m] = surface(h, d, m)
        if not np.all(raw[:, 1:, 1:] > 0.0):
            raise ValueError("factor surface must be positive everywhere")

        self._timestamps = year_timestamps(year)
        keys = np.array(
            [(t.hour, t.isoweekday(), t.month) for t in self._timestamps], dtype=np.int64
        )
        self._year_keys = keys
        mean = raw[keys[:, 0], keys[:, 1], keys[:, 2]].mean()
        self._grid = raw / mean
        check = self._grid[keys[:, 0], keys[:, 1], keys[:, 2]].mean()
        assert abs(check - 1.0) <= 1e-6

    def factor(self, key: TimeKey) -> float:
        return float(self._grid[key.hour, key.dow, key.month])

    def factor_array(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        return self._grid[keys[:, 0], keys[:, 1], keys[:, 2]]


def gen_hourly(
    world: TrafficWorld,
    n_stations: int = 1,
    completeness: float | list[float] = 1.0,
    seed: int | None = None,
    region: str = "SYN",
    mask_fn: Callable[[datetime], bool] | None = None,
) -> list[HourlyCount]:
    """Simulated hourly counters for one region.

    Each station observes a contiguous prefix of the year (short-duration
    counters run contiguously); mask_fn restricts observations further when
    special sampling patterns are needed. Expected count per hour is
    aadtt_true/24 times the factor surface, with the world's noise applied.
    """
    timestamps = world._timestamps
    n_hours = len(timestamps)
    lam_full = world.aadtt_true / 24.0 * world.factor_array(world._year_keys)
    fractions = completeness if isinstance(completeness, (list, tuple)) else [completeness]

    rng = np.random.default_rng(world.seed if seed is None else seed)
    out = []
    for i in range(n_stations):
        frac = fractions[i % len(fractions)]
        n_obs = int(round(frac * n_hours))
        keep = np.zeros(n_hours, dtype=bool)
        keep[:n_obs] = True
        if mask_fn is not None:
            keep &= np.array([mask_fn(t) for t in timestamps])
        lam = lam_full[keep]
        if world.noise == "poisson":
            values = rng.poisson(lam).astype(np.float64)
        elif world.noise == "gaussian":
            values = np.maximum(rng.normal(lam, world.gaussian_sd), 0.0)
        else:
            values = lam
        station = f"{region}-S{i:02d}"
        out.extend(
            HourlyCount(station, region, ts, float(v))
            for ts, v in zip([t for t, k in zip(timestamps, keep) if k], values)
        )
    return out


def expected_snapshot_count(
    world: TrafficWorld, section_length: float, v0: float, timestamp: datetime
) -> float:
    """Mean snapshot count implied by the world: aadtt * f * s / (24 v)."""
    if section_length < 0 or v0 <= 0:
        raise DomainError("need section_length >= 0 and v0 > 0")
    f = world.factor(TimeKey.from_datetime(timestamp))
    return world.aadtt_true * f * section_length / (24.0 * v0)


def gen_snapshot(
    world: TrafficWorld,
    section_length: float,
    length_unit: str,
    v0: float,
    timestamp: datetime,
    seed: int | None = None,
    section_id: str = "SYN-SEC",
    region: str = "SYN",
) -> SnapshotObservation:
    """One Poisson snapshot count for a section of the world's highway."""
    mean = expected_snapshot_count(world, section_length, v0, timestamp)
    rng = np.random.default_rng(world.seed if seed is None else seed)
    c = int(rng.poisson(mean))
    return SnapshotObservation(section_id, c, section_length, length_unit, timestamp, region)


def straight_road(
    length_m: float = 600.0,
    filter_radius_m: float = 8.0,
    lon0: float = -74.0,
    lat0: float = 42.0,
    road_id: str = "synth-road",
) -> RoadPolyline:
    """East-west road segment used when no real geometry is supplied."""
    dlon = length_m / (EARTH_RADIUS_M * math.cos(lat0 * _DEG)) / _DEG
    return RoadPolyline(
        (GeoPoint(lon0, lat0), GeoPoint(lon0 + dlon, lat0)), filter_radius_m, road_id
    )


@dataclass
class SceneSpec:
    """Knobs for gen_scene prediction corruption."""

    tp_score: float = 0.9
    fp_score: float = 0.1
    n_fp: int = 0
    n_miss: int = 0
    jitter_m: float = 0.0
    box_w_m: float = 10.0
    box_h_m: float = 4.0


def _unproject(origin: GeoPoint, x: float, y: float) -> GeoPoint:
    lon = origin.lon + x / (EARTH_RADIUS_M * math.cos(origin.lat * _DEG)) / _DEG
    lat = origin.lat + y / EARTH_RADIUS_M / _DEG
    return GeoPoint(lon, lat)


def _box_at(origin, cx, cy, w, h, score, image_id) -> GeoBox:
    corners = (
        _unproject(origin, cx - w / 2, cy - h / 2),
        _unproject(origin, cx + w / 2, cy - h / 2),
        _unproject(origin, cx + w / 2, cy + h / 2),
        _unproject(origin, cx - w / 2, cy + h / 2),
    )
    return GeoBox(corners, score, image_id)


def gen_scene(
    road: RoadPolyline,
    n_on: int,
    n_off: int,
    spec: SceneSpec | None = None,
    seed: int | None = None,
    image_id: str = "scene-0",
) -> tuple[list[GeoBox], list[GeoBox]]:
    """Truth boxes on/off a road plus corrupted predictions.

    On-road boxes sit near the centerline with every placement inside the
    filter radius by construction; off-road boxes sit beyond 3x the radius.
    Predictions mirror the truths (optionally jittered), drop n_miss of
    them, and add n_fp on-road junk boxes at fp_score.
    """
    spec = spec or SceneSpec()
    xy = _polyline_xy(road)
    seg = np.diff(xy, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    margin = 25.0
    if total <= 2 * margin:
        raise ValueError(f"road too short for scene generation: {total:.0f} m")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    origin = road.vertices[0]
    rng = np.random.default_rng(seed)

    def center_at(arc: float, lateral: float) -> tuple[float, float]:
        i = min(int(np.searchsorted(cum, arc, side="right")) - 1, len(seg_len) - 1)
        t = (arc - cum[i]) / seg_len[i]
        px, py = xy[i] + t * seg[i]
        nx, ny = -seg[i, 1] / seg_len[i], seg[i, 0] / seg_len[i]
        return px + lateral * nx, py + lateral * ny

    def on_road_center() -> tuple[float, float]:
        arc = rng.uniform(margin, total - margin)
        lateral = rng.uniform(-1.5, 1.5)
        return center_at(arc, lateral)

    truths = []
    for _ in range(n_on):
        cx, cy = on_road_center()
        truths.append(_box_at(origin, cx, cy, spec.box_w_m, spec.box_h_m, None, image_id))
    off_dist = 3.0 * road.filter_radius_m + 25.0
    for _ in range(n_off):
        arc = rng.uniform(margin, total - margin)
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        cx, cy = center_at(arc, side * off_dist)
        truths.append(_box_at(origin, cx, cy, spec.box_w_m, spec.box_h_m, None, image_id))

    missed = set(rng.choice(n_on, size=min(spec.n_miss, n_on), replace=False).tolist())
    preds = []
    for i, t in enumerate(truths):
        if i < n_on and i in missed:
            continue
        dx = dy = 0.0
        if spec.jitter_m > 0:
            dx, dy = rng.normal(0.0, spec.jitter_m, size=2)
        corners = tuple(
            _unproject(
                origin,
                (c.lon - origin.lon) * _DEG * EARTH_RADIUS_M * math.cos(origin.lat * _DEG) + dx,
                (c.lat - origin.lat) * _DEG * EARTH_RADIUS_M + dy,
            )
            for c in t.corners
        )
        preds.append(GeoBox(corners, spec.tp_score, image_id))
    for _ in range(spec.n_fp):
        cx, cy = on_road_center()
        preds.append(_box_at(origin, cx, cy, spec.box_w_m, spec.box_h_m, spec.fp_score, image_id))
    return preds, truths
