"""Time-variation factor models.

The factor is the expected normalized hourly count at an (hour, DOW, month)
key. Six linear formulas of increasing richness are fit by median quantile
regression; the alternative is a 50-tree random forest on the raw integer
covariates. Models whose prediction goes negative anywhere on the full time
grid are infeasible: counts cannot be negative, so such models are excluded
from scoring and refuse to predict.

Hours are 0-based internally; day of week is Monday=1..Sunday=7.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable

import numpy as np

from .counts import NormalizedSeries
from .errors import DataError, InfeasibleModelError, MissingResidualCellError
from .forest import MIN_LEAF, N_TREES, Forest, Tree, fit_forest
from .quantile import fit_quantile_irls

log = logging.getLogger(__name__)

LINEAR_KINDS = tuple(f"linear-{i}" for i in range(1, 7))
ALL_KINDS = LINEAR_KINDS + ("random-forest",)

# model 2's "daytime" block, a convention the source data never pins down
DAYTIME_HOURS = (6, 18)

MODEL_FORMULAS = {
    "linear-1": "weekend + hour",
    "linear-2": "dow + daytime",
    "linear-3": "dow + hour",
    "linear-4": "dow + hour + hour:dow",
    "linear-5": "month + dow + hour",
    "linear-6": "month + dow + hour + hour:dow",
    "random-forest": "cart-forest(hour, dow, month)",
}


@dataclass(frozen=True)
class TimeKey:
    hour: int  # 0..23
    dow: int  # Monday=1 .. Sunday=7
    month: int  # 1..12

    def __post_init__(self):
        if not (0 <= self.hour <= 23 and 1 <= self.dow <= 7 and 1 <= self.month <= 12):
            raise ValueError(f"TimeKey out of range: {self}")

    @classmethod
    def from_datetime(cls, dt: datetime) -> "TimeKey":
        return cls(dt.hour, dt.isoweekday(), dt.month)


@dataclass(frozen=True)
class ModelSpec:
    kind: str

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {ALL_KINDS}")

    @property
    def is_linear(self) -> bool:
        return self.kind.startswith("linear-")

    @property
    def formula(self) -> str:
        return MODEL_FORMULAS[self.kind]


def keys_to_array(keys: Iterable[TimeKey]) -> np.ndarray:
    """(n, 3) int64 array of (hour, dow, month)."""
    return np.array([(k.hour, k.dow, k.month) for k in keys], dtype=np.int64).reshape(-1, 3)


def full_grid() -> np.ndarray:
    """All 24*7*12 = 2016 (hour, dow, month) combinations."""
    grid = [(h, d, m) for h in range(24) for d in range(1, 8) for m in range(1, 13)]
    return np.array(grid, dtype=np.int64)


def design_columns(kind: str) -> list[str]:
    """Column names of the dummy-coded design; first levels are dropped."""
    hours = [f"hour_{h}" for h in range(1, 24)]
    dows = [f"dow_{d}" for d in range(2, 8)]
    months = [f"month_{m}" for m in range(2, 13)]
    inter = [f"dow_{d}:hour_{h}" for d in range(2, 8) for h in range(1, 24)]
    if kind == "linear-1":
        return ["intercept", "weekend"] + hours
    if kind == "linear-2":
        return ["intercept"] + dows + ["daytime"]
    if kind == "linear-3":
        return ["intercept"] + dows + hours
    if kind == "linear-4":
        return ["intercept"] + dows + hours + inter
    if kind == "linear-5":
        return ["intercept"] + months + dows + hours
    if kind == "linear-6":
        return ["intercept"] + months + dows + hours + inter
    raise ValueError(f"no linear design for kind {kind!r}")


def design_matrix(kind: str, keys: np.ndarray) -> np.ndarray:
    """Dummy-coded design for (n, 3) integer keys (hour, dow, month)."""
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    hour, dow, month = keys[:, 0], keys[:, 1], keys[:, 2]
    n = keys.shape[0]

    one = np.ones((n, 1))
    weekend = (dow >= 6).astype(np.float64)[:, None]
    daytime = ((hour >= DAYTIME_HOURS[0]) & (hour <= DAYTIME_HOURS[1])).astype(np.float64)[:, None]
    hours = (hour[:, None] == np.arange(1, 24)).astype(np.float64)
    dows = (dow[:, None] == np.arange(2, 8)).astype(np.float64)
    months = (month[:, None] == np.arange(2, 13)).astype(np.float64)

    if kind == "linear-1":
        return np.hstack([one, weekend, hours])
    if kind == "linear-2":
        return np.hstack([one, dows, daytime])
    if kind == "linear-3":
        return np.hstack([one, dows, hours])
    inter = (dows[:, :, None] * hours[:, None, :]).reshape(n, -1)
    if kind == "linear-4":
        return np.hstack([one, dows, hours, inter])
    if kind == "linear-5":
        return np.hstack([one, months, dows, hours])
    if kind == "linear-6":
        return np.hstack([one, months, dows, hours, inter])
    raise ValueError(f"no linear design for kind {kind!r}")


def design_row(kind: str, key: TimeKey) -> np.ndarray:
    return design_matrix(kind, keys_to_array([key]))[0]


@dataclass
class FactorModel:
    spec: ModelSpec
    coef: np.ndarray | None = None
    forest: Forest | None = None
    residual_bank: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    training_regions: tuple[str, ...] = ()
    feasible: bool = True
    meta: dict = field(default_factory=dict)

    def _raw_predict(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if self.spec.is_linear:
            return design_matrix(self.spec.kind, keys) @ self.coef
        return self.forest.predict(keys)


def fit_quantile(kind: str, keys: np.ndarray, y, tau: float = 0.5) -> np.ndarray:
    """Median-regression coefficients for one of the linear formulas.

    Rows with identical time keys share a design row, so the fit groups them
    and works on at most 2016 distinct rows.
    """
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    uniq, groups = np.unique(keys, axis=0, return_inverse=True)
    design = design_matrix(kind, uniq)
    return fit_quantile_irls(design, groups.ravel(), np.asarray(y, dtype=np.float64), tau)


def feasibility_check(model: FactorModel) -> bool:
    """A model is feasible iff no prediction on the full time grid is negative."""
    return bool(np.all(model._raw_predict(full_grid()) >= 0.0))


def predict_factor(model: FactorModel, key: TimeKey) -> float:
    if not model.feasible:
        raise InfeasibleModelError(
            f"{model.spec.kind} predicts negative factors; it was excluded"
        )
    return float(model._raw_predict(keys_to_array([key]))[0])


def predict_factors(model: FactorModel, keys: np.ndarray) -> np.ndarray:
    if not model.feasible:
        raise InfeasibleModelError(
            f"{model.spec.kind} predicts negative factors; it was excluded"
        )
    return model._raw_predict(keys)


def residual_bank(model: FactorModel, keys: np.ndarray, y) -> dict[tuple[int, int], np.ndarray]:
    """Training residuals grouped by (dow, hour).

    Forest models use out-of-bag predictions where available (in-sample
    forest residuals are optimistically small); rows never out of bag fall
    back to in-sample predictions.
    """
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    y = np.asarray(y, dtype=np.float64)
    pred = model._raw_predict(keys)
    if model.forest is not None and model.forest.oob_prediction is not None:
        oob = model.forest.oob_prediction
        if oob.size == y.size:
            pred = np.where(np.isfinite(oob), oob, pred)
    resid = y - pred
    bank: dict[tuple[int, int], np.ndarray] = {}
    for cell in sorted({(int(d), int(h)) for h, d in zip(keys[:, 0], keys[:, 1])}):
        mask = (keys[:, 1] == cell[0]) & (keys[:, 0] == cell[1])
        bank[cell] = resid[mask]
    return bank


def sample_residuals(
    bank: dict[tuple[int, int], np.ndarray], dow: int, hour: int
) -> tuple[np.ndarray, list[str]]:
    """Residual pool for a (dow, hour) cell with widening fallbacks.

    Missing cell -> pool the same DOW across hours -> pool everything; each
    widening is recorded as a warning. A completely empty bank raises.
    """
    warnings: list[str] = []
    cell = bank.get((dow, hour))
    if cell is not None and cell.size:
        return cell, warnings
    warnings.append(f"no residuals for (dow={dow}, hour={hour}); widened to dow={dow}")
    same_dow = [bank[k] for k in sorted(bank) if k[0] == dow and bank[k].size]
    if same_dow:
        return np.concatenate(same_dow), warnings
    warnings.append(f"no residuals for dow={dow}; widened to the full bank")
    everything = [bank[k] for k in sorted(bank) if bank[k].size]
    if everything:
        return np.concatenate(everything), warnings
    raise MissingResidualCellError("residual bank is empty")


def train_factor_model(
    kind: str,
    keys: np.ndarray,
    y,
    regions: tuple[str, ...] = (),
    seed: int | None = None,
    n_trees: int = N_TREES,
    min_leaf: int = MIN_LEAF,
    tau: float = 0.5,
) -> FactorModel:
    """Fit a factor model, its feasibility flag, and its residual bank."""
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    y = np.asarray(y, dtype=np.float64)
    spec = ModelSpec(kind)
    meta = {"n_rows": int(y.size), "seed": seed, "tau": tau}
    if spec.is_linear:
        model = FactorModel(spec, coef=fit_quantile(kind, keys, y, tau), meta=meta)
    else:
        meta.update({"n_trees": n_trees, "min_leaf": min_leaf})
        model = FactorModel(spec, forest=fit_forest(keys, y, n_trees, min_leaf, seed), meta=meta)
    model.training_regions = tuple(regions)
    model.feasible = feasibility_check(model)
    model.residual_bank = residual_bank(model, keys, y)
    return model


def rows_from_normalized(
    series: Iterable[NormalizedSeries],
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-region (keys, normalized counts) training arrays."""
    grouped: dict[str, list[tuple[TimeKey, float]]] = {}
    for s in series:
        grouped.setdefault(s.region, []).extend(
            (TimeKey.from_datetime(c.timestamp), c.count) for c in s.counts
        )
    out = {}
    for region, rows in grouped.items():
        out[region] = (keys_to_array(k for k, _ in rows), np.array([v for _, v in rows]))
    return out


@dataclass
class SpecScore:
    kind: str
    mean_mae: float | None  # None when the spec is excluded
    per_region: dict[str, float]
    excluded: bool
    infeasible_regions: list[str]


def cross_validate(
    rows_by_region: dict[str, tuple[np.ndarray, np.ndarray]],
    kinds: Iterable[str] | None = None,
    seed: int | None = None,
    n_trees: int = N_TREES,
    min_leaf: int = MIN_LEAF,
) -> list[SpecScore]:
    """Leave-one-region-out scoring of factor model specs.

    Each fold trains on all-but-one region and records the MAE of normalized
    count prediction on the held-out region; fold MAEs average with equal
    weight. A spec that turns infeasible in any fold is excluded rather than
    scored, since it could not be deployed. Regions are processed in sorted
    order, so results do not depend on dict ordering.
    """
    regions = sorted(r for r in rows_by_region if rows_by_region[r][1].size)
    for r in rows_by_region:
        if not rows_by_region[r][1].size:
            log.warning("region %s has no rows; fold skipped", r)
    if len(regions) < 2:
        raise DataError("cross-validation needs at least 2 regions with data")
    kinds = list(ALL_KINDS) if kinds is None else list(kinds)

    scores = []
    for kind in kinds:
        per_region: dict[str, float] = {}
        infeasible: list[str] = []
        for i, held_out in enumerate(regions):
            train_keys = np.vstack([rows_by_region[r][0] for r in regions if r != held_out])
            train_y = np.concatenate([rows_by_region[r][1] for r in regions if r != held_out])
            fold_seed = None if seed is None else seed + 1000 * i
            model = train_factor_model(
                kind, train_keys, train_y, seed=fold_seed, n_trees=n_trees, min_leaf=min_leaf
            )
            if not model.feasible:
                infeasible.append(held_out)
                continue
            keys_h, y_h = rows_by_region[held_out]
            mae = float(np.mean(np.abs(y_h - predict_factors(model, keys_h))))
            per_region[held_out] = mae
        excluded = bool(infeasible)
        mean_mae = None if excluded else float(np.mean(list(per_region.values())))
        scores.append(SpecScore(kind, mean_mae, per_region, excluded, infeasible))
    return scores


# ---------------------------------------------------------------------------
# persistence: self-describing JSON

FORMAT_NAME = "skycount-factor-model"
FORMAT_VERSION = 1


def save_model(model: FactorModel, path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model.spec.kind,
        "formula": model.spec.formula,
        "feasible": model.feasible,
        "training_regions": list(model.training_regions),
        "meta": model.meta,
        "residual_bank": {
            f"{d},{h}": bank.tolist() for (d, h), bank in sorted(model.residual_bank.items())
        },
    }
    if model.coef is not None:
        doc["coefficients"] = {
            "columns": design_columns(model.spec.kind),
            "values": model.coef.tolist(),
        }
    if model.forest is not None:
        doc["forest"] = {
            "n_bins": model.forest.n_bins,
            "min_leaf": model.forest.min_leaf,
            "seed": model.forest.seed,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in model.forest.trees
            ],
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_model(path) -> FactorModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_NAME:
        raise DataError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version {doc.get('version')}")
    model = FactorModel(ModelSpec(doc["kind"]))
    model.feasible = bool(doc["feasible"])
    model.training_regions = tuple(doc.get("training_regions", ()))
    model.meta = doc.get("meta", {})
    model.residual_bank = {
        (int(k.split(",")[0]), int(k.split(",")[1])): np.array(v, dtype=np.float64)
        for k, v in doc.get("residual_bank", {}).items()
    }
    if "coefficients" in doc:
        model.coef = np.array(doc["coefficients"]["values"], dtype=np.float64)
    if "forest" in doc:
        f = doc["forest"]
        trees = [
            Tree(
                np.array(t["feature"], dtype=np.int64),
                np.array(t["threshold"], dtype=np.int64),
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["value"], dtype=np.float64),
            )
            for t in f["trees"]
        ]
        model.forest = Forest(trees, int(f["n_bins"]), int(f["min_leaf"]), f.get("seed"))
    return model
