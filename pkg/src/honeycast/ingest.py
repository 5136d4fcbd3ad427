"""Raw telemetry and reanalysis parsing, daily resampling, hive/weather join."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .core import (
    HOURLY_WEATHER_COLUMNS,
    WEATHER_VARIABLES,
    WEIGHT,
    HiveObservation,
    HiveSeries,
    PanelError,
    WeatherCell,
)

log = logging.getLogger(__name__)

HIVE_COLUMNS = ("hive_id", "timestamp", "latitude", "longitude", "altitude_m", "weight_kg")
WEATHER_COLUMNS = ("cell_id", "latitude", "longitude", "altitude_m", "timestamp") + HOURLY_WEATHER_COLUMNS
EARTH_RADIUS_KM = 6371.0


class SchemaError(PanelError):
    pass


class NoCellInRadius(PanelError):
    pass


@dataclass(frozen=True)
class DailyWeather:
    date: date
    avg_temp_c: float
    max_temp_c: float
    min_temp_c: float
    max_rainfall_m: float
    total_rainfall_m: float
    avg_dewpoint_c: float
    avg_wind_ms: float
    avg_radiation_jm2: float
    avg_pressure_pa: float


@dataclass
class ParsedHives:
    observations: list[HiveObservation]
    n_skipped: int


def _read_checked(path, expected: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if set(df.columns) != set(expected):
        raise SchemaError(
            f"{path.name}: header {list(df.columns)} does not match schema {list(expected)}"
        )
    return df


def _numeric(df: pd.DataFrame, cols: Iterable[str]) -> pd.DataFrame:
    """Parse numeric columns; unparsable cells become NaN.

    ``to_numeric`` only screens the cells: its fast parser is not correctly
    rounded for 17-digit values, so valid cells go through ``float``.
    """
    out = {}
    for c in cols:
        text = df[c].str.strip()
        ok = pd.to_numeric(text, errors="coerce").notna()
        col = pd.Series(np.nan, index=df.index)
        col[ok] = text[ok].astype(float)
        out[c] = col
    return pd.DataFrame(out, index=df.index)


def _timestamps(col: pd.Series) -> pd.Series:
    return pd.to_datetime(col.str.strip(), errors="coerce", utc=True, format="ISO8601")


def read_hive_frame(path) -> tuple[pd.DataFrame, int]:
    """Vectorized hive CSV reader: (valid rows, number of skipped rows)."""
    raw = _read_checked(path, HIVE_COLUMNS)
    num = _numeric(raw, ("latitude", "longitude", "altitude_m", "weight_kg"))
    ts = _timestamps(raw["timestamp"])
    hid = raw["hive_id"].str.strip()
    ok = (
        ts.notna()
        & np.isfinite(num).all(axis=1)
        & num["latitude"].between(-90, 90)
        & num["longitude"].between(-180, 180)
        & (hid != "")
    )
    skipped = int((~ok).sum())
    if skipped:
        log.warning("%s: skipped %d malformed hive rows", Path(path).name, skipped)
    frame = num[ok].copy()
    frame.insert(0, "timestamp", ts[ok])
    frame.insert(0, "hive_id", hid[ok])
    return frame.reset_index(drop=True), skipped


def parse_hive_records(path) -> ParsedHives:
    frame, skipped = read_hive_frame(path)
    obs = [
        HiveObservation(r.hive_id, r.timestamp.to_pydatetime(), float(r.latitude),
                        float(r.longitude), float(r.altitude_m), float(r.weight_kg))
        for r in frame.itertuples(index=False)
    ]
    return ParsedHives(obs, skipped)


def _daily_means(frame: pd.DataFrame) -> HiveSeries:
    hive_id = frame["hive_id"].iloc[0]
    days = frame["timestamp"].dt.tz_convert("UTC").dt.tz_localize(None).dt.normalize()
    weight = frame["weight_kg"].groupby(days.to_numpy()).mean()
    return HiveSeries(
        hive_id,
        {WEIGHT: weight},
        latitude=float(frame["latitude"].mean()),
        longitude=float(frame["longitude"].mean()),
        altitude_m=float(frame["altitude_m"].mean()),
    )


def resample_daily(obs: Sequence[HiveObservation]) -> HiveSeries:
    """Average each UTC calendar day's weight readings; days without readings stay absent."""
    if not obs:
        raise PanelError("no observations to resample")
    ids = {o.hive_id for o in obs}
    if len(ids) > 1:
        raise PanelError(f"resample_daily got mixed hive ids: {sorted(ids)}")
    frame = pd.DataFrame(
        {
            "hive_id": [o.hive_id for o in obs],
            "timestamp": pd.to_datetime([o.timestamp for o in obs], utc=True),
            "latitude": [o.latitude for o in obs],
            "longitude": [o.longitude for o in obs],
            "altitude_m": [o.altitude_m for o in obs],
            "weight_kg": [o.weight_kg for o in obs],
        }
    )
    return _daily_means(frame)


def resample_frame(frame: pd.DataFrame) -> list[HiveSeries]:
    return [_daily_means(g) for _, g in frame.groupby("hive_id", sort=True)]


def read_weather_frame(path) -> tuple[pd.DataFrame, int]:
    raw = _read_checked(path, WEATHER_COLUMNS)
    num = _numeric(raw, ("latitude", "longitude", "altitude_m") + HOURLY_WEATHER_COLUMNS)
    ts = _timestamps(raw["timestamp"])
    cid = raw["cell_id"].str.strip()
    ok = (
        ts.notna()
        & np.isfinite(num).all(axis=1)
        & num["latitude"].between(-90, 90)
        & num["longitude"].between(-180, 180)
        & (cid != "")
    )
    skipped = int((~ok).sum())
    if skipped:
        log.warning("%s: skipped %d malformed weather rows", Path(path).name, skipped)
    frame = num[ok].copy()
    frame.insert(0, "timestamp", ts[ok])
    frame.insert(0, "cell_id", cid[ok])
    return frame.reset_index(drop=True), skipped


def parse_weather_grid(path) -> list[WeatherCell]:
    frame, _ = read_weather_frame(path)
    return cells_from_frame(frame)


def cells_from_frame(frame: pd.DataFrame) -> list[WeatherCell]:
    cells = []
    for cid, g in frame.groupby("cell_id", sort=True):
        g = g.sort_values("timestamp", kind="mergesort")
        hourly = g.set_index("timestamp")[list(HOURLY_WEATHER_COLUMNS)]
        cells.append(WeatherCell(str(cid), float(g["latitude"].iloc[0]),
                                 float(g["longitude"].iloc[0]),
                                 float(g["altitude_m"].iloc[0]), hourly))
    return cells


def aggregate_weather_daily(cell: WeatherCell) -> pd.DataFrame:
    """Daily Mean/Min/Max/Sum aggregates of a cell, indexed by UTC date."""
    h = cell.hourly
    if h.empty:
        return pd.DataFrame(columns=list(WEATHER_VARIABLES), dtype=float)
    idx = pd.DatetimeIndex(h.index)
    if idx.tz is not None:
        idx = idx.tz_convert("UTC").tz_localize(None)
    g = h.groupby(idx.normalize().to_numpy())
    temp = g["temperature_2m_c"]
    rain = g["precipitation_m"]
    out = pd.DataFrame(
        {
            "avg_temp_c": temp.mean(),
            "max_temp_c": temp.max(),
            "min_temp_c": temp.min(),
            "max_rainfall_m": rain.max(),
            "total_rainfall_m": rain.sum(),
            "avg_dewpoint_c": g["dewpoint_c"].mean(),
            "avg_wind_ms": g["wind_speed_ms"].mean(),
            "avg_radiation_jm2": g["solar_radiation_jm2"].mean(),
            "avg_pressure_pa": g["surface_pressure_pa"].mean(),
        }
    )
    out.index = pd.DatetimeIndex(out.index, name="date")
    return out


def daily_weather_records(daily: pd.DataFrame) -> list[DailyWeather]:
    return [DailyWeather(ts.date(), *map(float, row)) for ts, row in
            zip(daily.index, daily[list(WEATHER_VARIABLES)].to_numpy())]


def haversine_km(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def cell_weights(latitude, longitude, altitude_m, cells: Sequence[WeatherCell],
                 radius_km=20.0, altitude_weight=10.0, epsilon=1e-6):
    """Indices of cells inside the radius and their inverse distance+altitude weights."""
    lat = np.array([c.latitude for c in cells])
    lon = np.array([c.longitude for c in cells])
    alt = np.array([c.altitude_m for c in cells])
    d = haversine_km(latitude, longitude, lat, lon)
    inside = np.flatnonzero(d <= radius_km)
    dalt_km = np.abs(alt[inside] - altitude_m) / 1000.0
    w = 1.0 / (d[inside] + altitude_weight * dalt_km + epsilon)
    return inside, w


def join_weather_to_hive(latitude, longitude, altitude_m, cells: Sequence[WeatherCell],
                         radius_km=20.0, altitude_weight=10.0, epsilon=1e-6,
                         daily: Sequence[pd.DataFrame] | None = None) -> pd.DataFrame:
    """Weighted average of the daily aggregates of every cell within ``radius_km``.

    ``daily`` may carry precomputed ``aggregate_weather_daily`` frames aligned
    with ``cells``; a date covered by only some cells is averaged over those.
    """
    inside, w = cell_weights(latitude, longitude, altitude_m, cells,
                             radius_km, altitude_weight, epsilon)
    if len(inside) == 0:
        raise NoCellInRadius(
            f"no weather cell within {radius_km} km of ({latitude}, {longitude})"
        )
    frames = [daily[i] if daily is not None else aggregate_weather_daily(cells[i]) for i in inside]
    dates = frames[0].index
    for f in frames[1:]:
        dates = dates.union(f.index)
    cols = list(WEATHER_VARIABLES)
    stack = np.stack([f.reindex(dates)[cols].to_numpy() for f in frames])
    present = ~np.isnan(stack)
    ww = w[:, None, None] * present
    num = np.where(present, stack, 0.0) * ww
    out = num.sum(axis=0) / ww.sum(axis=0)
    return pd.DataFrame(out, index=pd.DatetimeIndex(dates, name="date"), columns=cols)


@dataclass
class JoinResult:
    panel: list[HiveSeries]
    excluded: dict[str, str]


def join_panel(hives: Sequence[HiveSeries], cells: Sequence[WeatherCell],
               radius_km=20.0, altitude_weight=10.0, epsilon=1e-6) -> JoinResult:
    """Attach daily weather to every hive; hives without nearby cells are excluded."""
    daily = [aggregate_weather_daily(c) for c in cells]
    panel, excluded = [], {}
    for h in hives:
        try:
            wx = join_weather_to_hive(h.latitude, h.longitude, h.altitude_m, cells,
                                      radius_km, altitude_weight, epsilon, daily=daily)
        except NoCellInRadius as exc:
            log.warning("hive %s excluded: %s", h.hive_id, exc)
            excluded[h.hive_id] = str(exc)
            continue
        panel.append(h.replace(**{c: wx[c] for c in wx.columns}))
    return JoinResult(panel, excluded)


def write_joined_csv(panel: Sequence[HiveSeries], path) -> None:
    frames = []
    for h in panel:
        df = pd.DataFrame({k: v for k, v in h.values.items()})
        df = df.rename(columns={WEIGHT: "weight_kg"})
        df.insert(0, "altitude_m", h.altitude_m)
        df.insert(0, "longitude", h.longitude)
        df.insert(0, "latitude", h.latitude)
        df.insert(0, "date", df.index.strftime("%Y-%m-%d"))
        df.insert(0, "hive_id", h.hive_id)
        frames.append(df)
    cols = ["hive_id", "date", "latitude", "longitude", "altitude_m", "weight_kg", *WEATHER_VARIABLES]
    out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=cols)
    out.reindex(columns=cols).to_csv(path, index=False, float_format="%.17g")


def read_joined_csv(path) -> list[HiveSeries]:
    df = pd.read_csv(path, dtype={"hive_id": str}, float_precision="round_trip")
    df["date"] = pd.to_datetime(df["date"])
    panel = []
    for hid, g in df.groupby("hive_id", sort=True):
        g = g.set_index("date")
        vals = {}
        for col in ("weight_kg", *WEATHER_VARIABLES):
            s = g[col].dropna()
            vals[WEIGHT if col == "weight_kg" else col] = s
        panel.append(HiveSeries(str(hid), vals, float(g["latitude"].iloc[0]),
                                float(g["longitude"].iloc[0]), float(g["altitude_m"].iloc[0])))
    return panel
