"""Seeded synthetic hive/weather panels with known ground truth and injected defects.

Apiary sites are scattered over a northern-Italy-sized box; each site hosts a
group of hives and the weather comes from a regular ~9 km lattice of cells
around the sites.  Cells carry four sub-daily records per day.  The hive
weight change is

    dw_t = ar * dw_{t-1} + g(weather changes at t-1..t-3) + season(doy_t)
           - kappa * (w_{t-1} - target) + noise

where g is evaluated on exactly the lagged features the pipeline builds, so
the best predictor is representable by the models.  Weather magnitudes
follow the descriptive statistics of the reference panel (rainfall and
pressure are stored in SI units: m and Pa).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import HOURLY_WEATHER_COLUMNS, WEATHER_VARIABLES, WEIGHT, HiveSeries
from .ingest import (
    EARTH_RADIUS_KM,
    HIVE_COLUMNS,
    WEATHER_COLUMNS,
    aggregate_weather_daily,
    cells_from_frame,
    haversine_km,
    join_weather_to_hive,
)
from .preprocess import (
    CleaningParams,
    build_lag_features,
    difference,
    filter_min_weight,
    rolling_zscore_mask,
    seasonal_encoding,
    variation_zscore_mask,
)

KM_PER_DEG = math.pi * EARTH_RADIUS_KM / 180.0
RECORD_HOURS = (0, 6, 12, 18)
DEFECT_KINDS = ("zero_weight", "spike", "harvest_drop")

# Ground-truth response terms.  Each term reads one or two lagged-change
# features: linear: coef*x; above/below: coef*[x > t] / coef*[x < t];
# abs_above: coef*[|x| > t]; both_above: coef*[x1 > t1]*[x2 > t2].
NONLINEAR_RESPONSE = (
    {"kind": "above", "feature": "d_avg_temp_c_lag1", "threshold": 0.5, "coef": 0.55},
    {"kind": "below", "feature": "d_avg_temp_c_lag1", "threshold": -1.5, "coef": -0.6},
    {"kind": "abs_above", "feature": "d_avg_temp_c_lag2", "threshold": 2.0, "coef": -0.5},
    {"kind": "both_above", "features": ["d_max_temp_c_lag1", "d_avg_radiation_jm2_lag1"],
     "thresholds": [0.0, 0.0], "coef": 0.45},
    {"kind": "above", "feature": "d_total_rainfall_m_lag1", "threshold": 0.002, "coef": -0.45},
)
LINEAR_RESPONSE = (
    {"kind": "linear", "feature": "d_avg_temp_c_lag1", "coef": 0.2},
    {"kind": "linear", "feature": "d_max_temp_c_lag1", "coef": 0.06},
    {"kind": "linear", "feature": "d_avg_radiation_jm2_lag1", "coef": 0.002},
    {"kind": "linear", "feature": "d_total_rainfall_m_lag1", "coef": -60.0},
    {"kind": "linear", "feature": "d_avg_temp_c_lag2", "coef": -0.08},
)
RESPONSES = {"nonlinear": NONLINEAR_RESPONSE, "linear": LINEAR_RESPONSE}


@dataclass(frozen=True)
class WeatherParams:
    temp_mean_c: float = 13.23
    temp_seasonal_amp_c: float = 9.0
    temp_anomaly_sd_c: float = 2.0
    temp_ar: float = 0.75
    diurnal_range_c: float = 8.6
    lapse_rate_c_per_km: float = 6.5
    dewpoint_spread_c: float = 5.6
    rain_prob: float = 0.35
    rain_mean_mm: float = 7.7
    wind_mean_ms: float = 1.68
    wind_log_sd: float = 0.45
    radiation_mean: float = 150.13
    radiation_seasonal_amp: float = 90.0
    pressure_anomaly_sd_pa: float = 600.0
    cloud_ar: float = 0.6


@dataclass(frozen=True)
class ScenarioConfig:
    n_hives: int = 200
    start: str = "2020-01-01"
    n_days: int = 500
    seed: int = 0
    response: str = "nonlinear"
    hives_per_site: int = 20
    site_radius_km: float = 2.0
    grid_spacing_km: float = 9.0
    grid_extent_km: float = 12.0
    lat_range: tuple[float, float] = (41.5, 45.5)
    lon_range: tuple[float, float] = (8.5, 14.0)
    ar_coef: float = 0.35
    mean_reversion: float = 0.01
    target_level_kg: float = 35.0
    noise_sd_kg: float = 0.45
    seasonal_sin: float = 0.12
    seasonal_cos: float = -0.05
    floor_kg: float = 21.0
    max_start_offset_days: int = 40
    missing_rate: float = 0.01
    zero_weight_rate: float = 0.004
    spike_rate: float = 0.004
    harvest_drop_rate: float = 0.004
    min_event_spacing_days: int = 45
    weather: WeatherParams = field(default_factory=WeatherParams)

    def __post_init__(self):
        for name in ("missing_rate", "zero_weight_rate", "spike_rate", "harvest_drop_rate"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {r}")
        if self.response not in RESPONSES:
            raise ValueError(f"response must be one of {sorted(RESPONSES)}")
        if self.n_hives < 1 or self.n_days < 2:
            raise ValueError("need at least one hive and two days")
        if isinstance(self.weather, dict):
            object.__setattr__(self, "weather", WeatherParams(**self.weather))
        object.__setattr__(self, "lat_range", tuple(self.lat_range))
        object.__setattr__(self, "lon_range", tuple(self.lon_range))

    @property
    def n_sites(self) -> int:
        return math.ceil(self.n_hives / self.hives_per_site)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.n_days, freq="D")


def evaluate_response(terms, frame: pd.DataFrame) -> np.ndarray:
    """Ground-truth g on a frame holding the lagged-change columns."""
    out = np.zeros(len(frame))
    for t in terms:
        kind, c = t["kind"], t["coef"]
        if kind == "both_above":
            (a, b), (ta, tb) = t["features"], t["thresholds"]
            out += c * ((frame[a].to_numpy() > ta) & (frame[b].to_numpy() > tb))
            continue
        x = frame[t["feature"]].to_numpy()
        if kind == "linear":
            out += c * x
        elif kind == "above":
            out += c * (x > t["threshold"])
        elif kind == "below":
            out += c * (x < t["threshold"])
        elif kind == "abs_above":
            out += c * (np.abs(x) > t["threshold"])
        else:
            raise ValueError(f"unknown response term {kind!r}")
    return out


def response_features(terms) -> list[str]:
    names = []
    for t in terms:
        names += t["features"] if "features" in t else [t["feature"]]
    return list(dict.fromkeys(names))


# ---------------------------------------------------------------- geography

def _place_sites(cfg: ScenarioConfig, rng):
    lat = rng.uniform(*cfg.lat_range, cfg.n_sites)
    lon = rng.uniform(*cfg.lon_range, cfg.n_sites)
    alt = rng.uniform(50.0, 900.0, cfg.n_sites)
    return lat, lon, alt


def _lattice(cfg: ScenarioConfig, site_lat, site_lon):
    """Lattice nodes within ``grid_extent_km`` of any site, nearest site attached."""
    mid = math.radians(0.5 * sum(cfg.lat_range))
    dlat = cfg.grid_spacing_km / KM_PER_DEG
    dlon = cfg.grid_spacing_km / (KM_PER_DEG * math.cos(mid))
    nodes = {}
    reach = int(math.ceil(cfg.grid_extent_km / cfg.grid_spacing_km)) + 2
    for s, (la, lo) in enumerate(zip(site_lat, site_lon)):
        k0, j0 = int(round(la / dlat)), int(round(lo / dlon))
        for k in range(k0 - reach, k0 + reach + 1):
            for j in range(j0 - reach, j0 + reach + 1):
                clat, clon = k * dlat, j * dlon
                d = float(haversine_km(la, lo, clat, clon))
                if d <= cfg.grid_extent_km and ((k, j) not in nodes or d < nodes[(k, j)][3]):
                    nodes[(k, j)] = (clat, clon, s, d)
    keys = sorted(nodes)
    return keys, [nodes[k] for k in keys]


# ------------------------------------------------------------------ weather

def _ar1(rng, n, phi, sd):
    """Stationary AR(1) path with marginal standard deviation ``sd``."""
    e = rng.normal(0.0, sd * math.sqrt(1 - phi * phi), n)
    x = np.empty(n)
    x[0] = rng.normal(0.0, sd)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def _regional_weather(cfg: ScenarioConfig, rng):
    """Site-level daily drivers shared by the cells around a site."""
    wp, n = cfg.weather, cfg.n_days
    cloud = 1.0 / (1.0 + np.exp(-_ar1(rng, n, wp.cloud_ar, 1.6)))
    return {
        "temp_anom": _ar1(rng, n, wp.temp_ar, wp.temp_anomaly_sd_c),
        "cloud": cloud,
        "rain_u": rng.uniform(size=n),
        "rain_amount": rng.gamma(0.8, wp.rain_mean_mm / 0.8, n),
        "spread_anom": _ar1(rng, n, 0.6, 1.2),
        "wind_log": _ar1(rng, n, 0.5, wp.wind_log_sd),
        "pressure_anom": _ar1(rng, n, 0.7, wp.pressure_anomaly_sd_pa),
    }


def _cell_records(cfg: ScenarioConfig, reg, alt, rng) -> dict:
    wp, n = cfg.weather, cfg.n_days
    doy = cfg.dates.dayofyear.to_numpy()
    season = np.cos(2 * np.pi * (doy - 15) / 365.25)  # +1 mid-January
    cloud = np.clip(reg["cloud"] + rng.normal(0, 0.03, n), 0.0, 1.0)
    t_mean = (wp.temp_mean_c - wp.lapse_rate_c_per_km * (alt - 500.0) / 1000.0
              - wp.temp_seasonal_amp_c * season + reg["temp_anom"] + rng.normal(0, 0.3, n))
    swing = wp.diurnal_range_c / 1.55 * (1.0 - 0.5 * cloud)
    diurnal = np.array([-0.55, -0.35, 1.0, -0.1])
    temp = t_mean[:, None] + swing[:, None] * diurnal

    spread = np.maximum(0.5, wp.dewpoint_spread_c + reg["spread_anom"] - 2.0 * cloud)
    dew = (t_mean - spread)[:, None] + 0.3 * swing[:, None] * diurnal

    wet = reg["rain_u"] < wp.rain_prob * (0.4 + 1.2 * cloud)
    total_mm = np.where(wet, reg["rain_amount"] * rng.uniform(0.8, 1.2, n), 0.0)
    share = rng.dirichlet(np.full(4, 0.5), n)
    rain = total_mm[:, None] * share / 1000.0

    wind_day = wp.wind_mean_ms * np.exp(reg["wind_log"] - 0.5 * wp.wind_log_sd**2)
    wind = wind_day[:, None] * np.array([0.8, 0.9, 1.3, 1.0]) * rng.lognormal(0, 0.1, (n, 4))

    rad_day = np.maximum(0.0, wp.radiation_mean - wp.radiation_seasonal_amp * season)
    rad_day = rad_day * (1.0 - 0.7 * cloud) / 0.65
    rad = rad_day[:, None] * np.array([0.0, 0.7, 2.6, 0.7])

    p0 = 101325.0 * math.exp(-alt / 8434.0)
    pres = p0 + reg["pressure_anom"][:, None] + rng.normal(0, 30.0, (n, 4))
    return {
        "temperature_2m_c": np.round(temp, 3),
        "dewpoint_c": np.round(dew, 3),
        "precipitation_m": np.round(rain, 7),
        "wind_speed_ms": np.round(wind, 3),
        "solar_radiation_jm2": np.round(rad, 2),
        "surface_pressure_pa": np.round(pres, 1),
    }


def _weather_frame(cfg: ScenarioConfig, keys, nodes, site_alt, rng):
    regional = [_regional_weather(cfg, r) for r in rng.spawn(len(site_alt))]
    stamps = (cfg.dates.to_numpy()[:, None]
              + np.array([np.timedelta64(h, "h") for h in RECORD_HOURS])).ravel()
    times = pd.DatetimeIndex(stamps).tz_localize("UTC")
    frames = []
    for (k, j), (clat, clon, site, _), crng in zip(keys, nodes, rng.spawn(len(keys))):
        alt = round(max(0.0, float(site_alt[site] + crng.normal(0.0, 120.0))), 1)
        rec = _cell_records(cfg, regional[site], alt, crng)
        df = pd.DataFrame({c: rec[c].ravel() for c in HOURLY_WEATHER_COLUMNS})
        df.insert(0, "timestamp", times)
        df.insert(0, "altitude_m", alt)
        df.insert(0, "longitude", round(clon, 6))
        df.insert(0, "latitude", round(clat, 6))
        df.insert(0, "cell_id", f"C{k}_{j}")
        frames.append(df)
    return pd.concat(frames, ignore_index=True)[list(WEATHER_COLUMNS)]


# -------------------------------------------------------------------- hives

def _window_sd(levels: np.ndarray, present: np.ndarray, t: int, window: int) -> float | None:
    idx = np.flatnonzero(present[:t])
    if len(idx) < window:
        return None
    return float(np.std(levels[idx[-window:]]))


def _choose_events(rng, n_days, first, rate, taken, spacing, months=None, dates=None):
    n = rng.binomial(n_days - first, rate) if n_days > first else 0
    out = []
    for t in rng.permutation(np.arange(first, n_days)):
        if len(out) >= n:
            break
        if months is not None and dates[t].month not in months:
            continue
        if all(abs(int(t) - u) >= spacing for u in taken):
            out.append(int(t))
            taken.append(int(t))
    return sorted(out)


def _simulate_hive(cfg: ScenarioConfig, hive_id, lat, lon, alt, weather: pd.DataFrame,
                   terms, rng, window: int):
    dates = cfg.dates
    n = cfg.n_days
    first = int(rng.integers(0, cfg.max_start_offset_days + 1))
    wx = HiveSeries(hive_id, {c: weather[c] for c in WEATHER_VARIABLES})
    dwx = HiveSeries(hive_id, {c: difference(wx[c]) for c in WEATHER_VARIABLES})
    lagged = build_lag_features(dwx).reindex(dates)
    g = evaluate_response(terms, lagged.fillna(0.0))
    s_sin, s_cos = seasonal_encoding(dates)
    season = cfg.seasonal_sin * s_sin + cfg.seasonal_cos * s_cos
    noise = rng.normal(0.0, cfg.noise_sd_kg, n)

    present = np.zeros(n, dtype=bool)
    present[first:] = rng.uniform(size=n - first) >= cfg.missing_rate
    present[first] = True
    taken: list[int] = []
    spacing = cfg.min_event_spacing_days
    lead = first + window + 15
    harvest = set(_choose_events(rng, n, lead, cfg.harvest_drop_rate, taken, spacing,
                                 months=range(5, 10), dates=dates))
    spikes = _choose_events(rng, n, lead, cfg.spike_rate, taken, spacing)
    busy = set(taken)
    n_zero = rng.binomial(n - first, cfg.zero_weight_rate)
    pool = [t for t in range(first, n) if present[t] and t not in busy]
    zero = sorted(int(t) for t in rng.choice(pool, size=min(n_zero, len(pool)), replace=False))
    for t in spikes + sorted(harvest):
        present[t] = True

    level = np.full(n, np.nan)
    dw = np.zeros(n)
    level[first] = rng.uniform(30.0, 45.0)
    drops = {}
    for t in range(first + 1, n):
        step = (cfg.ar_coef * dw[t - 1] + g[t] + season[t]
                - cfg.mean_reversion * (level[t - 1] - cfg.target_level_kg) + noise[t])
        new = level[t - 1] + step
        if new < cfg.floor_kg:
            new = 2 * cfg.floor_kg - new
        dw[t] = new - level[t - 1]
        if t in harvest:
            amount = rng.uniform(7.0, 12.0)
            if new - amount >= cfg.floor_kg + 2.0:
                drops[t] = amount
                new -= amount
        level[t] = new

    observed = level.copy()
    defects = []
    for t, amount in drops.items():
        defects.append((t, "harvest_drop", -amount))
    obs_present = present.copy()
    obs_present[zero] = False
    for t in spikes:
        sd = _window_sd(level, obs_present, t, window)
        if sd is None:
            continue
        amp = 5.0 * sd + 3.0
        observed[t] = level[t] + amp
        defects.append((t, "spike", amp))
    for t in zero:
        defects.append((t, "zero_weight", None))

    days = np.flatnonzero(present)
    swing = rng.uniform(0.1, 0.6, len(days))
    minutes = rng.integers(0, 60, (len(days), 2))
    zero_set = set(zero)
    stamps, weights = [], []
    for d, sw, mins in zip(days, swing, minutes):
        base = dates[d]
        if d in zero_set:
            vals = rng.uniform(0.0, 2.0, 2)
        else:
            vals = (observed[d] + sw, observed[d] - sw)
        for h, m, v in zip((6, 18), mins, vals):
            stamps.append(base + pd.Timedelta(hours=h, minutes=int(m)))
            weights.append(round(float(v), 3))
    frame = pd.DataFrame({
        "hive_id": hive_id,
        "timestamp": pd.DatetimeIndex(stamps).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "latitude": lat, "longitude": lon, "altitude_m": alt,
        "weight_kg": weights,
    })[list(HIVE_COLUMNS)]
    defect_rows = [
        {"hive_id": hive_id, "date": dates[t].strftime("%Y-%m-%d"), "kind": k,
         "magnitude_kg": None if m is None else round(float(m), 6)}
        for t, k, m in sorted(defects)
    ]
    truth = pd.DataFrame({"g": g, "dw": dw}, index=dates).iloc[first + 1:]
    return frame, defect_rows, truth, first


@dataclass
class SyntheticPanel:
    hives: pd.DataFrame
    weather: pd.DataFrame
    manifest: dict
    truth: dict[str, pd.DataFrame] = field(default_factory=dict)


def simulate(cfg: ScenarioConfig, window: int = CleaningParams.rolling_window) -> SyntheticPanel:
    """Build the panel in memory.  Deterministic in ``cfg``."""
    root = np.random.SeedSequence(cfg.seed)
    geo_ss, wx_ss, hive_ss = root.spawn(3)
    geo = np.random.default_rng(geo_ss)
    site_lat, site_lon, site_alt = _place_sites(cfg, geo)
    keys, nodes = _lattice(cfg, site_lat, site_lon)
    weather = _weather_frame(cfg, keys, nodes, site_alt, np.random.default_rng(wx_ss))

    frame = weather.copy()
    cells = cells_from_frame(frame)
    daily = [aggregate_weather_daily(c) for c in cells]
    terms = RESPONSES[cfg.response]

    hive_frames, defects, hives_meta, truth = [], [], [], {}
    r = cfg.site_radius_km
    for i, hss in enumerate(hive_ss.spawn(cfg.n_hives)):
        hrng = np.random.default_rng(hss)
        site = i % cfg.n_sites
        ang, rad = hrng.uniform(0, 2 * np.pi), r * math.sqrt(hrng.uniform())
        lat = round(site_lat[site] + rad * math.sin(ang) / KM_PER_DEG, 6)
        lon = round(site_lon[site] + rad * math.cos(ang)
                    / (KM_PER_DEG * math.cos(math.radians(site_lat[site]))), 6)
        alt = round(float(site_alt[site] + hrng.normal(0.0, 20.0)), 1)
        hive_id = f"H{i + 1:04d}"
        wx = join_weather_to_hive(lat, lon, alt, cells, daily=daily)
        hf, dr, tr, first = _simulate_hive(cfg, hive_id, lat, lon, alt, wx, terms, hrng, window)
        hive_frames.append(hf)
        defects += dr
        truth[hive_id] = tr
        hives_meta.append({"hive_id": hive_id, "site": site, "latitude": lat, "longitude": lon,
                           "altitude_m": alt, "first_date": cfg.dates[first].strftime("%Y-%m-%d")})

    hives = pd.concat(hive_frames, ignore_index=True)
    counts = {k: sum(d["kind"] == k for d in defects) for k in DEFECT_KINDS}
    manifest = {
        "schema_version": 1,
        "config": asdict(cfg),
        "n_hives": cfg.n_hives,
        "n_sites": cfg.n_sites,
        "n_cells": len(keys),
        "n_hive_rows": len(hives),
        "n_weather_rows": len(weather),
        "sites": [{"site": s, "latitude": float(a), "longitude": float(b), "altitude_m": float(c)}
                  for s, (a, b, c) in enumerate(zip(site_lat, site_lon, site_alt))],
        "hives": hives_meta,
        "defect_counts": counts,
        "defects": defects,
        "truth": {
            "target": f"d_{WEIGHT}",
            "ar_coef": cfg.ar_coef,
            "ar_feature": f"d_{WEIGHT}_lag1",
            "mean_reversion": cfg.mean_reversion,
            "target_level_kg": cfg.target_level_kg,
            "noise_sd_kg": cfg.noise_sd_kg,
            "seasonal": {"doy_sin": cfg.seasonal_sin, "doy_cos": cfg.seasonal_cos},
            "response": cfg.response,
            "response_terms": [dict(t) for t in terms],
        },
    }
    return SyntheticPanel(hives, weather, manifest, truth)


def _weather_to_csv(weather: pd.DataFrame, path) -> None:
    out = weather.copy()
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    out.to_csv(path, index=False)


def generate_panel(cfg: ScenarioConfig, out_dir) -> dict:
    """Write ``hives.csv``, ``weather.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = simulate(cfg)
    panel.hives.to_csv(out / "hives.csv", index=False)
    _weather_to_csv(panel.weather, out / "weather.csv")
    manifest = dict(panel.manifest, files={"hives": "hives.csv", "weather": "weather.csv"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -------------------------------------------------------------------- audit

@dataclass
class CleaningAudit:
    """Which injected defects the filters neutralized, and how many clean days went too.

    ``detected_by`` splits the caught defects by mechanism: ``min_weight``,
    ``rolling_z`` and ``variation_z`` flag the defect itself; ``gap`` means a
    z filter removed the neighbouring level, so the corrupted change was never
    formed.
    """

    detected: dict[str, int]
    injected: dict[str, int]
    detected_by: dict[str, dict[str, int]]
    missed: list[dict]
    clean_points: int
    false_removals: int
    false_by_filter: dict[str, int]

    @property
    def detection_rate(self) -> dict[str, float]:
        return {k: (self.detected[k] / self.injected[k] if self.injected[k] else 1.0)
                for k in self.injected}

    @property
    def false_removal_rate(self) -> float:
        return self.false_removals / self.clean_points if self.clean_points else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detection_rate"] = self.detection_rate
        d["false_removal_rate"] = self.false_removal_rate
        return d


ONE_DAY = pd.Timedelta(days=1)


def audit_cleaning(daily: list[HiveSeries], manifest: dict,
                   params: CleaningParams = CleaningParams()) -> CleaningAudit:
    """Replay the cleaning filters on raw daily weights against the defect manifest.

    A zero-weight day is caught when the weight floor drops it.  A spike or a
    harvest drop is caught when none of the changes it corrupts survives into
    the cleaned change series (the spike corrupts the change into and out of
    the spiked day, a harvest only the change into it); the level z filter,
    the change z filter, or a gap they leave are the mechanisms.  A clean day
    counts as falsely removed when its level is dropped by any filter or its
    change is dropped by the change filter.
    """
    by_hive: dict[str, dict[pd.Timestamp, str]] = {}
    for d in manifest["defects"]:
        by_hive.setdefault(d["hive_id"], {})[pd.Timestamp(d["date"])] = d["kind"]
    injected = {k: 0 for k in DEFECT_KINDS}
    detected = {k: 0 for k in DEFECT_KINDS}
    detected_by = {k: {} for k in DEFECT_KINDS}
    false_by = {"min_weight": 0, "rolling_z": 0, "variation_z": 0}
    missed, clean, false = [], 0, 0
    for hs in daily:
        w = hs[WEIGHT]
        s1 = filter_min_weight(hs, params.min_weight_kg)[WEIGHT]
        floor_drop = set(w.index.difference(s1.index))
        roll = rolling_zscore_mask(s1.to_numpy(), params.rolling_window, params.rolling_threshold)
        roll_drop = set(s1.index[roll])
        s2 = s1[~roll]
        dv = difference(s2)
        vmask = variation_zscore_mask(dv.to_numpy(), params.variation_threshold)
        var_drop = set(dv.index[vmask])
        final = set(dv.index[~vmask])
        defects = by_hive.get(hs.hive_id, {})
        for day, kind in defects.items():
            if day not in w.index:
                continue
            injected[kind] += 1
            if kind == "zero_weight":
                how = "min_weight" if day in floor_drop else None
            else:
                touched = [day, day + ONE_DAY] if kind == "spike" else [day]
                if any(t in final for t in touched):
                    how = None
                elif day in roll_drop:
                    how = "rolling_z"
                elif day in var_drop:
                    how = "variation_z"
                else:
                    how = "gap"
            if how is None:
                missed.append({"hive_id": hs.hive_id, "date": day.strftime("%Y-%m-%d"), "kind": kind})
            else:
                detected[kind] += 1
                detected_by[kind][how] = detected_by[kind].get(how, 0) + 1
        for day in w.index:
            if day in defects:
                continue
            clean += 1
            hit = None
            if day in floor_drop:
                hit = "min_weight"
            elif day in roll_drop:
                hit = "rolling_z"
            elif day in var_drop:
                hit = "variation_z"
            if hit:
                false += 1
                false_by[hit] += 1
    return CleaningAudit(detected, injected, detected_by, missed, clean, false, false_by)
