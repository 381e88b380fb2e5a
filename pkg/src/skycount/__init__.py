"""skycount: annual average daily truck traffic from single-snapshot detections.

A snapshot image gives a truck count for one instant; combining it with a
geometric road filter, a time-variation factor model trained on hourly
counts from other regions, and Monte Carlo propagation of speed and factor
uncertainty yields a distribution over the annual average.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .counts import HourlyCount, TollTrip, aadtt_aashto, aadtt_simple, normalize
from .detect_eval import count_error, iou, match_detections, tune_threshold
from .estimate import AadttEstimate, SnapshotObservation, SpeedModel, aadtt_point, estimate_aadtt
from .factors import FactorModel, ModelSpec, TimeKey, cross_validate, train_factor_model
from .geo import GeoBox, GeoPoint, RoadPolyline, project_local, road_filter
from .synth import TrafficWorld, gen_hourly, gen_scene, gen_snapshot

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "HourlyCount",
    "TollTrip",
    "aadtt_aashto",
    "aadtt_simple",
    "normalize",
    "count_error",
    "iou",
    "match_detections",
    "tune_threshold",
    "AadttEstimate",
    "SnapshotObservation",
    "SpeedModel",
    "aadtt_point",
    "estimate_aadtt",
    "FactorModel",
    "ModelSpec",
    "TimeKey",
    "cross_validate",
    "train_factor_model",
    "GeoBox",
    "GeoPoint",
    "RoadPolyline",
    "project_local",
    "road_filter",
    "TrafficWorld",
    "gen_hourly",
    "gen_scene",
    "gen_snapshot",
]
