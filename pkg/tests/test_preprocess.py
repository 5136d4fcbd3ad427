from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from honeycast.core import HiveSeries
from honeycast.preprocess import (CleaningParams, assemble_feature_matrix, build_lag_features,
                                  clean_hive, difference, feature_names, filter_min_weight,
                                  filter_production_period, rolling_zscore_mask,
                                  variation_zscore_mask)

weights = st.lists(st.floats(0, 80, allow_nan=False), min_size=0, max_size=120)


def series(values, start="2021-01-01", **extra):
    idx = pd.date_range(start, periods=len(values))
    return HiveSeries("h", {"weight": pd.Series(values, index=idx, dtype=float), **extra},
                      45.0, 9.0, 100.0)


@given(weights)
def test_filters_only_remove(values):
    s = series(values)
    cleaned = clean_hive(s)
    assert set(cleaned.levels["weight"].index) <= set(s["weight"].index)
    kept = cleaned.levels["weight"]
    assert np.array_equal(kept.to_numpy(), s["weight"][kept.index].to_numpy())
    assert (kept >= 20).all()


@given(weights)
def test_weight_floor_idempotent(values):
    once = filter_min_weight(series(values))
    twice = filter_min_weight(once)
    assert once.same_as(twice)


def test_rolling_mask_reference():
    rng = np.random.default_rng(0)
    v = 35 + rng.normal(size=80)
    v[50] = 60
    mask = rolling_zscore_mask(v, 30, 1.2)
    assert not mask[:30].any()
    assert mask[50]
    for t in range(30, 80):
        w = v[t - 30:t]
        assert mask[t] == (abs((v[t] - w.mean()) / w.std()) > 1.2)


def test_constant_window_never_flags():
    assert not rolling_zscore_mask(np.full(40, 30.0)).any()
    assert not variation_zscore_mask(np.zeros(10)).any()


def test_variation_mask():
    v = np.r_[np.zeros(20), 10.0]
    m = variation_zscore_mask(v, 2.0)
    assert m[-1] and not m[:-1].any()


def test_difference_requires_consecutive_days():
    idx = pd.to_datetime(["2021-01-01", "2021-01-02", "2021-01-04", "2021-01-05"])
    d = difference(pd.Series([1.0, 3.0, 4.0, 8.0], index=idx))
    assert list(d.index.strftime("%d")) == ["02", "05"] and list(d) == [2.0, 4.0]


def test_lag_features_shift_by_days():
    s = series([30.0, 31.0, 33.0, 36.0])
    from honeycast.preprocess import first_difference
    lagged = build_lag_features(first_difference(s), lags=(1, 2))
    assert lagged.loc["2021-01-04", "d_weight_lag1"] == 2.0
    assert lagged.loc["2021-01-05", "d_weight_lag2"] == 2.0


def test_feature_names_layout():
    names = feature_names()
    assert len(names) == 35 and names[0] == "d_weight_lag1" and names[-1] == "doy_cos"


def _variations(n=120, seed=0):
    rng = np.random.default_rng(seed)
    idx = pd.date_range("2021-01-01", periods=n)
    mk = lambda: pd.Series(rng.normal(size=n), index=idx)
    from honeycast.core import WEATHER_VARIABLES
    return HiveSeries("h", {"weight": mk(), **{v: mk() for v in WEATHER_VARIABLES}}, 45, 9, 100)


def test_feature_matrix_rows_are_lagged_correctly():
    v = _variations()
    m = assemble_feature_matrix([v])
    assert m.n_rows == 117 and m.n_features == 35
    j = m.feature_names.index("d_avg_temp_c_lag3")
    day = pd.Timestamp(m.dates[10])
    assert m.X[10, j] == v["avg_temp_c"][day - pd.Timedelta(days=3)]
    assert m.y[10] == v["weight"][day]


def test_production_period_months():
    m = assemble_feature_matrix([_variations(n=400)])
    p = filter_production_period(m)
    months = pd.DatetimeIndex(p.dates).month
    assert months.min() == 3 and months.max() == 9 and len(p) < len(m)


def test_short_hive_discarded():
    c = clean_hive(series([30.0 + 0.1 * i for i in range(30)]), CleaningParams())
    assert c.record.discarded


def test_clean_hive_counts():
    rng = np.random.default_rng(1)
    v = 35 + 0.3 * rng.normal(size=200)
    v[100] = 0.0
    c = clean_hive(series(v))
    r = c.record
    assert r.removed_min_weight == 1
    assert r.retained_length == len(c.variations["weight"])
