"""Domain types shared by every pipeline stage.

Missing values are never stored as sentinels: a day without a reading is
simply absent from the per-variable series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

WEIGHT = "weight"

# Daily weather aggregates, one set of columns per (hive, date).
WEATHER_VARIABLES = (
    "avg_temp_c",
    "max_temp_c",
    "min_temp_c",
    "max_rainfall_m",
    "total_rainfall_m",
    "avg_dewpoint_c",
    "avg_wind_ms",
    "avg_radiation_jm2",
    "avg_pressure_pa",
)

HOURLY_WEATHER_COLUMNS = (
    "temperature_2m_c",
    "dewpoint_c",
    "precipitation_m",
    "wind_speed_ms",
    "solar_radiation_jm2",
    "surface_pressure_pa",
)

STATIC_FEATURES = ("latitude", "longitude", "altitude_m", "doy_sin", "doy_cos")


class PanelError(ValueError):
    """Raised when a panel or series violates a structural invariant."""


class DuplicateDateError(PanelError):
    def __init__(self, offenders: Sequence[tuple[str, str]]):
        self.offenders = list(offenders)
        shown = ", ".join(f"({h}, {d})" for h, d in self.offenders[:10])
        more = "" if len(self.offenders) <= 10 else f" and {len(self.offenders) - 10} more"
        super().__init__(f"duplicate (hive_id, date) pairs: {shown}{more}")


def _check_coords(latitude: float, longitude: float) -> None:
    if not (-90.0 <= latitude <= 90.0):
        raise PanelError(f"latitude {latitude} outside [-90, 90]")
    if not (-180.0 <= longitude <= 180.0):
        raise PanelError(f"longitude {longitude} outside [-180, 180]")


@dataclass(frozen=True)
class HiveObservation:
    hive_id: str
    timestamp: datetime
    latitude: float
    longitude: float
    altitude_m: float
    weight_kg: float

    def __post_init__(self):
        if not math.isfinite(self.weight_kg):
            raise PanelError(f"non-finite weight for hive {self.hive_id}")
        _check_coords(self.latitude, self.longitude)
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc))
        else:
            object.__setattr__(self, "timestamp", self.timestamp.astimezone(timezone.utc))

    @property
    def date(self):
        return self.timestamp.date()


def as_daily_series(values: pd.Series | Mapping, name: str | None = None) -> pd.Series:
    """Normalize a date-indexed mapping to a float series on a daily DatetimeIndex."""
    s = values.copy() if isinstance(values, pd.Series) else pd.Series(dict(values), dtype=float)
    s.index = pd.DatetimeIndex(pd.to_datetime(s.index)).normalize()
    s = s.astype(float)
    if name is not None:
        s.name = name
    return s


@dataclass(frozen=True, eq=False)
class HiveSeries:
    """One hive's daily panel: variable name -> date-indexed series of present values."""

    hive_id: str
    values: Mapping[str, pd.Series]
    latitude: float = float("nan")
    longitude: float = float("nan")
    altitude_m: float = float("nan")

    def __post_init__(self):
        clean = {}
        for name, s in self.values.items():
            s = as_daily_series(s, name)
            dup = s.index[s.index.duplicated()]
            if len(dup):
                raise DuplicateDateError(
                    [(self.hive_id, d.date().isoformat()) for d in dup.unique()]
                )
            if not s.index.is_monotonic_increasing:
                s = s.sort_index()
            if not np.isfinite(s.to_numpy()).all():
                raise PanelError(
                    f"hive {self.hive_id}: variable {name!r} has non-finite values; "
                    "missing days must be absent, not NaN"
                )
            clean[name] = s
        object.__setattr__(self, "values", clean)
        if math.isfinite(self.latitude) and math.isfinite(self.longitude):
            _check_coords(self.latitude, self.longitude)

    @property
    def days(self) -> pd.DatetimeIndex:
        idx = pd.DatetimeIndex([])
        for s in self.values.values():
            idx = idx.union(s.index)
        return idx

    def __getitem__(self, name: str) -> pd.Series:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def replace(self, **series: pd.Series) -> "HiveSeries":
        vals = dict(self.values)
        vals.update(series)
        return HiveSeries(self.hive_id, vals, self.latitude, self.longitude, self.altitude_m)

    def drop(self, *names: str) -> "HiveSeries":
        vals = {k: v for k, v in self.values.items() if k not in names}
        return HiveSeries(self.hive_id, vals, self.latitude, self.longitude, self.altitude_m)

    def same_as(self, other: "HiveSeries") -> bool:
        if self.hive_id != other.hive_id or set(self.values) != set(other.values):
            return False
        return all(self.values[k].equals(other.values[k]) for k in self.values)


@dataclass(frozen=True, eq=False)
class WeatherCell:
    """A reanalysis grid cell with its sub-daily records (time-sorted)."""

    cell_id: str
    latitude: float
    longitude: float
    altitude_m: float
    hourly: pd.DataFrame

    def __post_init__(self):
        _check_coords(self.latitude, self.longitude)
        missing = [c for c in HOURLY_WEATHER_COLUMNS if c not in self.hourly.columns]
        if missing:
            raise PanelError(f"cell {self.cell_id}: missing columns {missing}")
        frame = self.hourly.loc[:, list(HOURLY_WEATHER_COLUMNS)].astype(float)
        if not np.isfinite(frame.to_numpy()).all():
            raise PanelError(f"cell {self.cell_id}: non-finite readings")
        if not frame.index.is_monotonic_increasing:
            frame = frame.sort_index(kind="mergesort")
        object.__setattr__(self, "hourly", frame)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Supervised panel: one row per (hive, date), complete features and target."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    hive_ids: np.ndarray
    dates: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise PanelError("X must be 2-D")
        n, p = X.shape
        if y.shape != (n,) or len(self.hive_ids) != n or len(self.dates) != n:
            raise PanelError("row metadata and target must align with X")
        if len(self.feature_names) != p:
            raise PanelError("feature_names must match the column count")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise PanelError("feature matrix must not contain missing entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "hive_ids", np.asarray(self.hive_ids, dtype=object))
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n_rows

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.X[idx], self.y[idx], self.feature_names,
                             self.hive_ids[idx], self.dates[idx])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df.insert(0, "target", self.y)
        df.insert(0, "date", pd.to_datetime(self.dates).strftime("%Y-%m-%d"))
        df.insert(0, "hive_id", self.hive_ids.astype(str))
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "FeatureMatrix":
        names = [c for c in df.columns if c not in ("hive_id", "date", "target")]
        return cls(
            X=df[names].to_numpy(dtype=np.float64),
            y=df["target"].to_numpy(dtype=np.float64),
            feature_names=tuple(names),
            hive_ids=df["hive_id"].astype(str).to_numpy(dtype=object),
            dates=pd.to_datetime(df["date"]).to_numpy().astype("datetime64[D]"),
        )

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureMatrix":
        df = pd.read_csv(path, dtype={"hive_id": str}, float_precision="round_trip")
        return cls.from_frame(df)


@dataclass
class HiveEntry:
    hive_id: str
    n_days: int
    first_date: str | None
    last_date: str | None
    missing_fraction: dict[str, float] = field(default_factory=dict)


@dataclass
class ValidationReport:
    hives: list[HiveEntry]
    errors: list[str] = field(default_factory=list)

    @property
    def n_hives(self) -> int:
        return len(self.hives)

    def to_dict(self) -> dict:
        return {
            "n_hives": self.n_hives,
            "errors": list(self.errors),
            "hives": [vars(h) for h in self.hives],
        }


def validate_panel(series_set: Iterable[HiveSeries]) -> ValidationReport:
    """Check the panel-level invariants and summarize every hive.

    Raises DuplicateDateError when the same (hive_id, date) pair appears more
    than once, which can only happen across two series sharing a hive id.
    """
    seen: dict[str, pd.DatetimeIndex] = {}
    offenders: list[tuple[str, str]] = []
    entries = []
    for s in series_set:
        days = s.days
        if s.hive_id in seen:
            overlap = seen[s.hive_id].intersection(days)
            offenders.extend((s.hive_id, d.date().isoformat()) for d in overlap)
            seen[s.hive_id] = seen[s.hive_id].union(days)
        else:
            seen[s.hive_id] = days
        if len(days):
            span = pd.date_range(days[0], days[-1], freq="D")
            missing = {k: 1.0 - len(v) / len(span) for k, v in s.values.items()}
            first, last = days[0].date().isoformat(), days[-1].date().isoformat()
        else:
            missing, first, last = {k: 1.0 for k in s.values}, None, None
        entries.append(HiveEntry(s.hive_id, len(days), first, last, missing))
    if offenders:
        raise DuplicateDateError(offenders)
    return ValidationReport(entries)
