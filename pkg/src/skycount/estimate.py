"""Monte Carlo AADTT estimation from a single snapshot count.

A snapshot shows c_I trucks on a section of length s. At speed v they would
pass a fixed point in s/v hours, so the daily rate is 24*c_I*v/s, and
dividing by the time-variation factor for the snapshot's (hour, DOW, month)
extrapolates to the annual average. Speed and factor are uncertain: speed is
drawn from a Gaussian around the regional mean, the factor from the model
prediction plus a training residual drawn from the matching (DOW, hour)
cell. The median and interquartile range of the resulting sample summarize
the estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import ConfigError, DomainError
from .factors import FactorModel, TimeKey, predict_factor, sample_residuals

log = logging.getLogger(__name__)

MILES_TO_KM = 1.609344  # exact
DEFAULT_REL_SD = 0.05
DEFAULT_N_SAMPLES = 10_000
FACTOR_FLOOR = 0.01
MAX_REDRAWS = 100

# regional mean-speed assumptions, (value, unit-per-hour)
SPEED_TABLE = {
    "NY": (65.0, "mi"),
    "CA": (70.0, "mi"),
    "BR": (90.0, "km"),
}


@dataclass(frozen=True)
class SpeedModel:
    """Gaussian speed assumption; unit is per hour in the given length unit."""

    v0: float
    rel_sd: float = DEFAULT_REL_SD
    unit: str = "mi"

    def __post_init__(self):
        if self.v0 <= 0:
            raise ValueError(f"v0 must be positive, got {self.v0}")
        if self.rel_sd < 0:
            raise ValueError(f"rel_sd must be nonnegative, got {self.rel_sd}")
        if self.unit not in ("mi", "km"):
            raise ValueError(f"unit must be 'mi' or 'km', got {self.unit!r}")


@dataclass(frozen=True)
class SnapshotObservation:
    section_id: str
    c_i: int
    section_length: float
    length_unit: str  # "mi" or "km"
    timestamp: datetime
    region: str = ""

    def __post_init__(self):
        if self.c_i < 0:
            raise ValueError(f"snapshot count must be nonnegative, got {self.c_i}")
        if self.section_length <= 0:
            raise ValueError(f"section length must be positive, got {self.section_length}")
        if self.length_unit not in ("mi", "km"):
            raise ValueError(f"length unit must be 'mi' or 'km', got {self.length_unit!r}")

    @property
    def time_key(self) -> TimeKey:
        return TimeKey.from_datetime(self.timestamp)


@dataclass
class AadttEstimate:
    samples: np.ndarray = field(repr=False)
    median: float
    q25: float
    q75: float
    n_samples: int
    seed: int | None
    inputs: dict
    warnings: list[str] = field(default_factory=list)


def convert_length(value: float, from_unit: str, to_unit: str) -> float:
    if from_unit == to_unit:
        return value
    if (from_unit, to_unit) == ("mi", "km"):
        return value * MILES_TO_KM
    if (from_unit, to_unit) == ("km", "mi"):
        return value / MILES_TO_KM
    raise ConfigError(f"cannot convert {from_unit!r} to {to_unit!r}")


def speed_defaults(region: str, override: SpeedModel | None = None) -> SpeedModel:
    """Regional mean-speed assumption, or the explicit override."""
    if override is not None:
        return override
    if region in SPEED_TABLE:
        v0, unit = SPEED_TABLE[region]
        return SpeedModel(v0, DEFAULT_REL_SD, unit)
    raise ConfigError(f"no speed assumption for region {region!r}; pass --speed")


def aadtt_point(c_i: float, s: float, v: float, f: float) -> float:
    """Point AADTT: daily passage rate over the section, deflated by the factor."""
    if v <= 0 or f <= 0 or s <= 0:
        raise DomainError(f"need s, v, f > 0; got s={s}, v={v}, f={f}")
    return 24.0 * c_i * v / (s * f)


def estimate_aadtt(
    obs: SnapshotObservation,
    speed: SpeedModel,
    model: FactorModel,
    n: int = DEFAULT_N_SAMPLES,
    seed: int | None = None,
    f_min: float = FACTOR_FLOOR,
) -> AadttEstimate:
    """Monte Carlo distribution of the AADTT for one snapshot.

    Speeds are redrawn while nonpositive; factor draws below f_min are
    redrawn up to MAX_REDRAWS times and then clamped, so every emitted
    sample is finite (and strictly positive whenever c_i > 0). Draw order
    is fixed (speeds first, then residuals), making results reproducible
    for a given seed.
    """
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    warnings: list[str] = []

    v0 = convert_length(speed.v0, speed.unit, obs.length_unit)
    key = obs.time_key
    f_pred = predict_factor(model, key)
    pool, widen_warnings = sample_residuals(model.residual_bank, key.dow, key.hour)
    warnings.extend(widen_warnings)
    for w in widen_warnings:
        log.warning("%s", w)

    rng = np.random.default_rng(seed)
    v = v0 * (1.0 + speed.rel_sd * rng.standard_normal(n))
    while True:
        bad = v <= 0.0
        if not bad.any():
            break
        v[bad] = v0 * (1.0 + speed.rel_sd * rng.standard_normal(int(bad.sum())))

    f = f_pred + pool[rng.integers(0, pool.size, size=n)]
    for _ in range(MAX_REDRAWS):
        bad = f <= f_min
        if not bad.any():
            break
        f[bad] = f_pred + pool[rng.integers(0, pool.size, size=int(bad.sum()))]
    f = np.maximum(f, f_min)

    if obs.c_i == 0:
        warnings.append("zero trucks in the snapshot; the estimate degenerates to 0")
        log.warning("section %s: zero trucks in snapshot", obs.section_id)
    samples = 24.0 * obs.c_i * v / (obs.section_length * f)
    q25, med, q75 = np.quantile(samples, [0.25, 0.5, 0.75])
    inputs = {
        "section_id": obs.section_id,
        "c_i": obs.c_i,
        "section_length": obs.section_length,
        "length_unit": obs.length_unit,
        "timestamp": obs.timestamp.isoformat(),
        "region": obs.region,
        "v0": v0,
        "rel_sd": speed.rel_sd,
        "f_pred": f_pred,
        "f_min": f_min,
        "model_kind": model.spec.kind,
    }
    return AadttEstimate(samples, float(med), float(q25), float(q75), n, seed, inputs, warnings)
