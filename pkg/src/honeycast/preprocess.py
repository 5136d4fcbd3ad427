"""Outlier cleaning, differencing, stationarity diagnostics and lag features.

Every filter only removes values (sets them absent); nothing is imputed.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .adf import InsufficientData, adf_test
from .core import (
    STATIC_FEATURES,
    WEATHER_VARIABLES,
    WEIGHT,
    FeatureMatrix,
    HiveSeries,
    PanelError,
)

log = logging.getLogger(__name__)

ONE_DAY = pd.Timedelta(days=1)
PANEL_VARIABLES = (WEIGHT,) + WEATHER_VARIABLES

# Table-2 style grouping of daily variables.
VARIABLE_GROUPS = {
    WEIGHT: "Hive weight",
    "avg_temp_c": "Temperature",
    "max_temp_c": "Temperature",
    "min_temp_c": "Temperature",
    "max_rainfall_m": "Precipitations",
    "total_rainfall_m": "Precipitations",
    "avg_wind_ms": "Wind speed",
    "avg_radiation_jm2": "Radiation",
    "avg_pressure_pa": "Pressure",
    "avg_dewpoint_c": "Dew point",
}


def _sigma_is_zero(sigma, mu):
    return sigma <= 1e-12 * np.maximum(1.0, np.abs(mu))


def _with(series: HiveSeries, variable: str, s: pd.Series) -> HiveSeries:
    return series.replace(**{variable: s})


def filter_min_weight(series: HiveSeries, floor_kg: float = 20.0,
                      variable: str = WEIGHT) -> HiveSeries:
    s = series[variable]
    return _with(series, variable, s[s >= floor_kg])


def rolling_zscore_mask(values: np.ndarray, window: int = 30, threshold: float = 1.2) -> np.ndarray:
    """Boolean mask of values to remove.

    Each value is scored against the ``window`` present values before it
    (trailing, exclusive); values without a full window, or whose window has
    zero spread, are never flagged.
    """
    v = np.asarray(values, dtype=np.float64)
    flag = np.zeros(len(v), dtype=bool)
    if len(v) <= window:
        return flag
    win = sliding_window_view(v[:-1], window)
    mu = win.mean(axis=1)
    sigma = win.std(axis=1)
    x = v[window:]
    ok = ~_sigma_is_zero(sigma, mu)
    z = np.zeros_like(x)
    z[ok] = (x[ok] - mu[ok]) / sigma[ok]
    flag[window:] = np.abs(z) > threshold
    return flag


def rolling_zscore_filter(series: HiveSeries, window: int = 30, threshold: float = 1.2,
                          variable: str = WEIGHT) -> HiveSeries:
    s = series[variable]
    drop = rolling_zscore_mask(s.to_numpy(), window, threshold)
    return _with(series, variable, s[~drop])


def difference(s: pd.Series) -> pd.Series:
    """Day-over-day change, defined only where the previous calendar day is present."""
    if len(s) < 2:
        return s.iloc[:0].copy()
    consecutive = (s.index[1:] - s.index[:-1]) == ONE_DAY
    d = s.to_numpy()[1:] - s.to_numpy()[:-1]
    return pd.Series(d[consecutive], index=s.index[1:][consecutive], name=s.name)


def first_difference(series: HiveSeries) -> HiveSeries:
    return HiveSeries(series.hive_id, {k: difference(v) for k, v in series.values.items()},
                      series.latitude, series.longitude, series.altitude_m)


def variation_zscore_mask(values: np.ndarray, threshold: float = 2.0) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return np.zeros(len(v), dtype=bool)
    mu, sigma = v.mean(), v.std()
    if _sigma_is_zero(sigma, mu):
        return np.zeros(len(v), dtype=bool)
    return np.abs((v - mu) / sigma) > threshold


def variation_zscore_filter(varseries: HiveSeries, threshold: float = 2.0,
                            variable: str = WEIGHT) -> HiveSeries:
    s = varseries[variable]
    drop = variation_zscore_mask(s.to_numpy(), threshold)
    return _with(varseries, variable, s[~drop])


def filter_min_observations(n_or_series, min_n: int = 60, variable: str = WEIGHT) -> bool:
    """True when the hive has enough target observations to keep."""
    n = len(n_or_series[variable]) if isinstance(n_or_series, HiveSeries) else int(n_or_series)
    return n >= min_n


def lag_name(variable: str, lag: int) -> str:
    return f"d_{variable}_lag{lag}"


def build_lag_features(varseries: HiveSeries, lags: Sequence[int] = (1, 2, 3),
                       variables: Sequence[str] | None = None) -> pd.DataFrame:
    """Columns ``d_<var>_lag<l>`` holding the change observed ``l`` days earlier."""
    variables = list(varseries.values) if variables is None else list(variables)
    cols = {}
    for v in variables:
        s = varseries[v]
        for lag in lags:
            cols[lag_name(v, lag)] = pd.Series(s.to_numpy(), index=s.index + lag * ONE_DAY)
    return pd.DataFrame(cols)


def seasonal_encoding(dates: pd.DatetimeIndex) -> tuple[np.ndarray, np.ndarray]:
    angle = 2 * np.pi * (dates.dayofyear.to_numpy() - 1) / 365.25
    return np.sin(angle), np.cos(angle)


def feature_names(lags: Sequence[int] = (1, 2, 3),
                  variables: Sequence[str] = PANEL_VARIABLES) -> tuple[str, ...]:
    return tuple(lag_name(v, lag) for v in variables for lag in lags) + STATIC_FEATURES


def hive_feature_frame(varseries: HiveSeries, lags: Sequence[int] = (1, 2, 3),
                       variables: Sequence[str] = PANEL_VARIABLES) -> pd.DataFrame:
    y = varseries[WEIGHT]
    lagged = build_lag_features(varseries, lags, variables)
    names = list(feature_names(lags, variables))
    df = lagged.reindex(y.index)
    df["latitude"] = varseries.latitude
    df["longitude"] = varseries.longitude
    df["altitude_m"] = varseries.altitude_m
    df["doy_sin"], df["doy_cos"] = seasonal_encoding(y.index)
    df = df.reindex(columns=names)
    df["target"] = y.to_numpy()
    return df.dropna()


def assemble_feature_matrix(panel: Iterable[HiveSeries], lags: Sequence[int] = (1, 2, 3),
                            variables: Sequence[str] = PANEL_VARIABLES) -> FeatureMatrix:
    names = feature_names(lags, variables)
    parts, hives, dates = [], [], []
    for hs in panel:
        df = hive_feature_frame(hs, lags, variables)
        if df.empty:
            continue
        parts.append(df)
        hives.append(np.full(len(df), hs.hive_id, dtype=object))
        dates.append(df.index.to_numpy().astype("datetime64[D]"))
    if not parts:
        raise PanelError("feature matrix is empty after dropping incomplete rows")
    df = pd.concat(parts)
    return FeatureMatrix(df[list(names)].to_numpy(), df["target"].to_numpy(), names,
                         np.concatenate(hives), np.concatenate(dates))


def filter_production_period(matrix: FeatureMatrix, months: Sequence[int] = range(3, 10)) -> FeatureMatrix:
    month = matrix.dates.astype("datetime64[M]").astype(int) % 12 + 1
    return matrix.take(np.flatnonzero(np.isin(month, list(months))))


@dataclass
class CleaningParams:
    min_weight_kg: float = 20.0
    rolling_window: int = 30
    rolling_threshold: float = 1.2
    variation_threshold: float = 2.0
    min_observations: int = 60
    lags: tuple[int, ...] = (1, 2, 3)


@dataclass
class HiveCleaning:
    hive_id: str
    removed_min_weight: int
    removed_rolling_z: int
    removed_variation_z: int
    retained_length: int
    discarded: bool


@dataclass
class CleaningReport:
    hives: list[HiveCleaning] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        totals = {
            k: sum(getattr(h, k) for h in self.hives)
            for k in ("removed_min_weight", "removed_rolling_z", "removed_variation_z")
        }
        return {
            "params": self.params,
            "n_hives": len(self.hives),
            "n_discarded": sum(h.discarded for h in self.hives),
            "totals": totals,
            "hives": [asdict(h) for h in self.hives],
        }


@dataclass
class CleanedHive:
    levels: HiveSeries
    variations: HiveSeries
    record: HiveCleaning


def clean_hive(series: HiveSeries, params: CleaningParams = CleaningParams()) -> CleanedHive:
    n0 = len(series[WEIGHT])
    s1 = filter_min_weight(series, params.min_weight_kg)
    n1 = len(s1[WEIGHT])
    s2 = rolling_zscore_filter(s1, params.rolling_window, params.rolling_threshold)
    n2 = len(s2[WEIGHT])
    d = first_difference(s2)
    nd = len(d[WEIGHT])
    d2 = variation_zscore_filter(d, params.variation_threshold)
    kept = len(d2[WEIGHT])
    rec = HiveCleaning(series.hive_id, n0 - n1, n1 - n2, nd - kept, kept,
                       not filter_min_observations(kept, params.min_observations))
    return CleanedHive(s2, d2, rec)


@dataclass
class CleanedPanel:
    levels: list[HiveSeries]
    variations: list[HiveSeries]
    report: CleaningReport

    @property
    def kept(self) -> list[HiveSeries]:
        discarded = {h.hive_id for h in self.report.hives if h.discarded}
        return [v for v in self.variations if v.hive_id not in discarded]


def clean_panel(panel: Iterable[HiveSeries], params: CleaningParams = CleaningParams()) -> CleanedPanel:
    levels, variations, report = [], [], CleaningReport(params=asdict(params))
    for hs in panel:
        c = clean_hive(hs, params)
        levels.append(c.levels)
        variations.append(c.variations)
        report.hives.append(c.record)
        if c.record.discarded:
            log.info("hive %s discarded: %d observations", hs.hive_id, c.record.retained_length)
    return CleanedPanel(levels, variations, report)


def panel_long_frame(cleaned: CleanedPanel) -> pd.DataFrame:
    """Long ``hive_id,date,variable,value`` table: cleaned weight levels and all changes."""
    rows = []
    keep = {v.hive_id for v in cleaned.kept}
    for lv, dv in zip(cleaned.levels, cleaned.variations):
        if lv.hive_id not in keep:
            continue
        items = [(WEIGHT, lv[WEIGHT])] + [(f"d_{k}", s) for k, s in dv.values.items()]
        for name, s in items:
            rows.append(pd.DataFrame({"hive_id": lv.hive_id, "date": s.index.strftime("%Y-%m-%d"),
                                      "variable": name, "value": s.to_numpy()}))
    if not rows:
        return pd.DataFrame(columns=["hive_id", "date", "variable", "value"])
    return pd.concat(rows, ignore_index=True)


def adf_diagnostics(cleaned: CleanedPanel, variables: Sequence[str] = PANEL_VARIABLES) -> pd.DataFrame:
    """Per hive and variable: ADF on the level and on the change series.

    Gaps are collapsed (the test sees the sequence of present values); series
    too short for the test are skipped.
    """
    rows = []
    keep = {v.hive_id for v in cleaned.kept}
    for lv, dv in zip(cleaned.levels, cleaned.variations):
        if lv.hive_id not in keep:
            continue
        for v in variables:
            for name, s in ((v, lv.values.get(v)), (f"d_{v}", dv.values.get(v))):
                if s is None:
                    continue
                try:
                    r = adf_test(s.to_numpy())
                except InsufficientData as exc:
                    log.debug("adf skipped for %s/%s: %s", lv.hive_id, name, exc)
                    continue
                rows.append({"hive_id": lv.hive_id, "variable": name, "stat": r.stat,
                             "p_value": r.p_value, "lag_order": r.lag_order,
                             "stationary": r.stationary})
    return pd.DataFrame(rows, columns=["hive_id", "variable", "stat", "p_value",
                                       "lag_order", "stationary"])


def stationarity_table(diag: pd.DataFrame) -> pd.DataFrame:
    """Percent of stationary series per variable group, levels vs. changes."""
    if diag.empty:
        return pd.DataFrame(columns=["variable", "level_pct_stationary", "difference_pct_stationary"])
    d = diag.copy()
    d["is_diff"] = d["variable"].str.startswith("d_")
    d["base"] = np.where(d["is_diff"], d["variable"].str[2:], d["variable"])
    d["group"] = d["base"].map(VARIABLE_GROUPS)
    out = d.groupby(["group", "is_diff"])["stationary"].mean().mul(100).unstack()
    out = out.rename(columns={False: "level_pct_stationary", True: "difference_pct_stationary"})
    order = list(dict.fromkeys(VARIABLE_GROUPS.values()))
    return out.reindex([g for g in order if g in out.index]).rename_axis("variable").reset_index()
