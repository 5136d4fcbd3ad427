"""Honey-production forecasting from hive telemetry and reanalysis weather."""

__version__ = "0.1.0"
