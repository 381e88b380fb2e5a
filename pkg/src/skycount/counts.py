"""Hourly ground-count processing.

Covers the toll-to-section transform, per-station-year normalization, the
simple and AASHTO annual averages, vehicle-class filtering, and the
balanced sampling of training stations.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Iterable

from .errors import (
    DomainError,
    EmptyInputError,
    InsufficientDataError,
    UnknownPlazaError,
    UnknownVehicleClassError,
    ZeroMeanError,
)

log = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760


@dataclass(frozen=True)
class HourlyCount:
    """One station-hour observation. Timestamps are naive local time."""

    station_id: str
    region: str
    timestamp: datetime
    count: float
    vehicle_class: str | None = None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"count must be nonnegative, got {self.count}")

    @property
    def dow(self) -> int:
        """Day of week, Monday=1 .. Sunday=7 (always calendar-consistent)."""
        return self.timestamp.isoweekday()


@dataclass(frozen=True)
class TollTrip:
    entry_plaza: str
    exit_plaza: str
    entry_time: datetime
    vehicle_class: str | None = None

    def __post_init__(self):
        if self.entry_plaza == self.exit_plaza:
            raise ValueError("entry and exit plaza must differ")


@dataclass(frozen=True)
class StationSummary:
    station_id: str
    region: str
    hours_observed: int
    completeness: float
    aadtt_simple: float


@dataclass(frozen=True)
class NormalizedSeries:
    """One station-year of counts divided by their mean.

    Multiplying the counts back by mean_count reproduces the inputs.
    """

    station_id: str
    region: str
    year: int
    mean_count: float
    counts: tuple[HourlyCount, ...]


def normalize(counts: Iterable[HourlyCount]) -> list[NormalizedSeries]:
    """Normalize each station-year by its mean observed hourly count.

    Normalization is strictly per station-year; inter-year level shifts are
    deliberately ignored.
    """
    groups: dict[tuple[str, int], list[HourlyCount]] = defaultdict(list)
    for c in counts:
        groups[(c.station_id, c.timestamp.year)].append(c)

    out = []
    for (station, year), rows in sorted(groups.items()):
        mean = math.fsum(r.count for r in rows) / len(rows)
        if mean <= 0:
            raise ZeroMeanError(f"station {station} year {year}: all counts zero")
        normed = tuple(
            HourlyCount(r.station_id, r.region, r.timestamp, r.count / mean, r.vehicle_class)
            for r in rows
        )
        out.append(NormalizedSeries(station, rows[0].region, year, mean, normed))
    return out


def aadtt_simple(counts: Iterable[HourlyCount]) -> float:
    """Mean hourly count times 24."""
    rows = list(counts)
    if not rows:
        raise EmptyInputError("no observations")
    return math.fsum(r.count for r in rows) / len(rows) * 24.0


def aadtt_aashto(counts: Iterable[HourlyCount]) -> float:
    """Average daily totals within (month, DOW) cells, then average the cells.

    Only complete 24-hour days enter a cell; cells with no complete day are
    skipped. Equal cell weighting removes the weekday-composition bias that
    the simple method picks up on unbalanced data.
    """
    days: dict[tuple[int, int, int], dict[int, float]] = defaultdict(dict)
    for r in counts:
        d = r.timestamp
        days[(d.year, d.month, d.day)][d.hour] = (
            days[(d.year, d.month, d.day)].get(d.hour, 0.0) + r.count
        )

    cells: dict[tuple[int, int], list[float]] = defaultdict(list)
    for (year, month, day), hours in sorted(days.items()):
        if len(hours) != 24:
            continue
        total = math.fsum(hours.values())
        dow = datetime(year, month, day).isoweekday()
        cells[(month, dow)].append(total)

    if not cells:
        raise InsufficientDataError("no complete 24-hour day in any (month, DOW) cell")
    cell_means = [math.fsum(v) / len(v) for v in cells.values()]
    return math.fsum(cell_means) / len(cell_means)


def toll_to_section_counts(
    trips: Iterable[TollTrip],
    mileposts: dict[str, float],
    section: tuple[str, str],
    speed: float,
    region: str = "",
) -> list[HourlyCount]:
    """Hourly bidirectional counts for the section between two plazas.

    A trip is counted iff its milepost span covers the whole section. Its
    passage hour is the entry time offset by the travel time from the entry
    plaza to the section boundary on the trip's side: plaza A for trips
    heading A->B, plaza B for the opposite direction. Trips that do not
    traverse the section are silently excluded.
    """
    plaza_a, plaza_b = section
    try:
        mp_a = mileposts[plaza_a]
        mp_b = mileposts[plaza_b]
    except KeyError as e:
        raise UnknownPlazaError(f"section plaza not in milepost table: {e.args[0]}")
    if speed <= 0:
        raise DomainError(f"speed must be positive, got {speed}")

    lo, hi = min(mp_a, mp_b), max(mp_a, mp_b)
    bins: dict[datetime, int] = defaultdict(int)
    station_id = f"{plaza_a}-{plaza_b}"
    for trip in trips:
        try:
            mp_e = mileposts[trip.entry_plaza]
            mp_x = mileposts[trip.exit_plaza]
        except KeyError as e:
            raise UnknownPlazaError(f"trip plaza not in milepost table: {e.args[0]}")
        if min(mp_e, mp_x) > lo or max(mp_e, mp_x) < hi:
            continue  # does not traverse the section
        heading_a_to_b = (mp_x - mp_e) * (mp_b - mp_a) >= 0
        boundary_mp = mp_a if heading_a_to_b else mp_b
        travel_h = abs(boundary_mp - mp_e) / speed
        passage = trip.entry_time + timedelta(hours=travel_h)
        bins[passage.replace(minute=0, second=0, microsecond=0)] += 1

    return [
        HourlyCount(station_id, region, ts, float(n)) for ts, n in sorted(bins.items())
    ]


@dataclass(frozen=True)
class ClassRule:
    """Configurable vehicle-class allow/deny rule.

    predicate, when set, overrides the allow/deny sets. With strict=True,
    codes outside `known` raise instead of being dropped.
    """

    allow: frozenset[str] | None = None
    deny: frozenset[str] = frozenset()
    predicate: Callable[[str], bool] | None = None
    known: frozenset[str] | None = None
    strict: bool = False

    @property
    def is_identity(self) -> bool:
        return self.allow is None and not self.deny and self.predicate is None

    def keep(self, code: str | None) -> bool:
        if self.is_identity:
            return True
        norm = "" if code is None else str(code).strip().upper()
        if self.strict and self.known is not None and norm not in self.known:
            raise UnknownVehicleClassError(f"unknown vehicle class {code!r}")
        if self.predicate is not None:
            return self.predicate(norm)
        if self.allow is not None:
            return norm in self.allow
        return norm not in self.deny


def _ny_is_truck(code: str) -> bool:
    # NY toll codes combine axle count and a height flag, e.g. "3H", "2L".
    if not code.endswith(("H", "L")):
        return False
    axles = code[:-1]
    return code.endswith("H") and axles.isdigit() and int(axles) >= 3


def ny_thruway_rule(strict: bool = False) -> ClassRule:
    """Keep high vehicles with 3 or more axles."""
    return ClassRule(predicate=_ny_is_truck, strict=strict)


def california_rule(strict: bool = False) -> ClassRule:
    """Drop class codes that are too-small vehicles or sensor malfunctions."""
    deny = frozenset({"0", "2", "3", "4", "15"})
    known = frozenset(str(i) for i in range(16))
    return ClassRule(deny=deny, known=known, strict=strict)


def filter_truck_classes(records: list, rule: ClassRule) -> list:
    """Keep records whose vehicle_class passes the rule; order preserved."""
    return [r for r in records if rule.keep(r.vehicle_class)]


def summarize_stations(counts: Iterable[HourlyCount]) -> list[StationSummary]:
    """Per-station observation totals, completeness, and simple AADTT.

    Completeness is measured against 8760 hours for each calendar year the
    station's series touches.
    """
    groups: dict[tuple[str, str], list[HourlyCount]] = defaultdict(list)
    for c in counts:
        groups[(c.region, c.station_id)].append(c)
    out = []
    for (region, station), rows in sorted(groups.items()):
        years = {r.timestamp.year for r in rows}
        completeness = len(rows) / (HOURS_PER_YEAR * len(years))
        out.append(
            StationSummary(station, region, len(rows), completeness, aadtt_simple(rows))
        )
    return out


def sample_stations(
    summaries: list[StationSummary] | dict[str, list[StationSummary]],
    target: float = 10.0,
    seed: int | None = None,
) -> dict[str, list[str]]:
    """Select stations per region until target station-year equivalents.

    Stations are taken most-complete first (ties: higher AADTT, then
    station id), accumulating observed hours until they reach
    target * 8760 or the region runs out. The ordering is total, so `seed`
    does not influence the result; it is accepted for interface stability.
    """
    if isinstance(summaries, dict):
        by_region = {r: list(v) for r, v in summaries.items()}
    else:
        by_region = defaultdict(list)
        for s in summaries:
            by_region[s.region].append(s)

    selection: dict[str, list[str]] = {}
    goal = target * HOURS_PER_YEAR
    for region in sorted(by_region):
        stations = sorted(
            by_region[region],
            key=lambda s: (-s.completeness, -s.aadtt_simple, s.station_id),
        )
        if not stations:
            log.warning("region %s has no candidate stations", region)
            selection[region] = []
            continue
        chosen = []
        hours = 0
        for s in stations:
            if hours >= goal:
                break
            chosen.append(s.station_id)
            hours += s.hours_observed
        if hours < goal:
            log.warning(
                "region %s exhausted at %.2f station-year equivalents (target %g)",
                region,
                hours / HOURS_PER_YEAR,
                target,
            )
        selection[region] = chosen
    return selection
