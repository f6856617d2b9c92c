"""Weather-table ingestion and deterministic synthetic weather.

The on-disk format is a CSV with header ``timestamp,onwind,solar`` (or any set
of capacity-factor columns after the timestamp): ISO-8601 UTC timestamps,
hourly continuity, values in [0, 1]. Real reanalysis data ingests through the
same contract; the synthetic generator is the default test fixture so the
repository carries no large-data dependency.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .system import TimeGrid

log = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class WeatherFormatError(ValueError):
    """Malformed or misaligned weather table."""


@dataclass(frozen=True)
class SynthWeatherParams:
    """Shape parameters of the synthetic weather generator."""

    solar_seasonal_depth: float = 0.55   # winter attenuation of the solar day
    wind_seasonal_amplitude: float = 0.35
    noise_scale: float = 1.0
    wind_target_cf: float = 0.21
    solar_target_cf: float = 0.12
    start_year: int = 2001


@dataclass(frozen=True)
class LoadedWeather:
    series: dict
    clipped: int


def synth_weather(seed: int, years: int,
                  params: SynthWeatherParams | None = None) -> pd.DataFrame:
    """Deterministic synthetic wind/solar capacity factors.

    Wind follows an AR(1) synoptic process (multi-day memory, winter-peaked
    seasonal mean) squashed through a logistic; solar follows a seasonal
    day-length envelope with cloud noise and is zero at night by construction.
    Both series are calibrated to their target long-run means.
    """
    if years < 1:
        raise ValueError("years must be >= 1")
    params = params or SynthWeatherParams()
    rng = np.random.default_rng(seed)
    # cover whole calendar years (leap days included)
    index = pd.date_range(start=f"{params.start_year}-01-01",
                          end=f"{params.start_year + years}-01-01",
                          freq="h", inclusive="left")
    n = len(index)
    doy = index.dayofyear.to_numpy()
    hour = index.hour.to_numpy()
    season = np.cos(2.0 * np.pi * (doy - 172) / 365.0)   # +1 at midsummer

    # --- wind: logistic of an AR(1) process plus a seasonal mean shift -----
    rho = np.exp(-1.0 / 48.0)
    shocks = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = shocks[0]
    for t in range(1, n):
        x[t] = rho * x[t - 1] + np.sqrt(1.0 - rho ** 2) * shocks[t]
    drive = 1.3 * params.noise_scale * x - params.wind_seasonal_amplitude * 2.0 * season
    bias = 0.0
    for _ in range(40):   # bisection-free calibration of the mean
        wind = 1.0 / (1.0 + np.exp(-(drive + bias)))
        err = wind.mean() - params.wind_target_cf
        if abs(err) < 1e-10:
            break
        bias -= err / max(np.mean(wind * (1.0 - wind)), 1e-3)

    # --- solar: seasonal day length, half-sine elevation, cloud noise ------
    daylight = 12.0 + 4.0 * season
    rise = 12.0 - daylight / 2.0
    inside = (hour > rise) & (hour < rise + daylight)
    shape = np.where(inside, np.sin(np.pi * (hour - rise) / daylight), 0.0)
    shape = np.clip(shape, 0.0, None) ** 1.2
    envelope = 1.0 - params.solar_seasonal_depth * (1.0 - season) / 2.0
    cloud_shocks = rng.standard_normal(n)
    c = np.empty(n)
    c[0] = cloud_shocks[0]
    rho_c = np.exp(-1.0 / 24.0)
    for t in range(1, n):
        c[t] = rho_c * c[t - 1] + np.sqrt(1.0 - rho_c ** 2) * cloud_shocks[t]
    cloud = 0.3 + 0.7 / (1.0 + np.exp(-1.5 * params.noise_scale * c))
    solar = shape * envelope * cloud
    for _ in range(8):
        mean = solar.mean()
        if mean <= 0:
            break
        solar = np.clip(solar * (params.solar_target_cf / mean), 0.0, 1.0)
        if abs(solar.mean() - params.solar_target_cf) < 1e-9:
            break

    return pd.DataFrame({
        "timestamp": index.strftime(TIMESTAMP_FORMAT),
        "onwind": wind,
        "solar": solar,
    })


def write_weather(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False)


def _parse_timestamps(values, path):
    try:
        ts = pd.to_datetime(values, utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise WeatherFormatError(f"{path}: unparseable timestamp column: {exc}") from exc
    return pd.DatetimeIndex(ts).tz_localize(None)


def load_weather(path, grid: TimeGrid) -> LoadedWeather:
    """Read a weather table and align every column to the scenario time grid.

    Values outside [0, 1] are clipped with a counted warning; gaps relative to
    the grid are a hard error listing the missing timestamps.
    """
    raw = pd.read_csv(path, dtype=str)
    if "timestamp" not in raw.columns or len(raw.columns) < 2:
        raise WeatherFormatError(f"{path}: expected header timestamp,<tech>[,...]")
    index = _parse_timestamps(raw["timestamp"], path)
    if index.has_duplicates:
        raise WeatherFormatError(f"{path}: duplicate timestamps")
    if len(index) > 1:
        steps = np.diff(index.asi8)
        if (steps <= 0).any():
            raise WeatherFormatError(f"{path}: timestamps not increasing")
        if len(set(steps)) != 1:
            gap_at = index[1:][steps != steps.min()]
            raise WeatherFormatError(
                f"{path}: non-uniform resolution around {list(map(str, gap_at[:3]))}")

    columns = [c for c in raw.columns if c != "timestamp"]
    parsed = {}
    clipped = 0
    for col in columns:
        try:
            values = raw[col].astype(float).to_numpy()
        except ValueError:
            bad = raw.index[pd.to_numeric(raw[col], errors="coerce").isna()][0]
            raise WeatherFormatError(
                f"{path}: malformed value in column {col!r} at data row {bad + 1}")
        if np.isnan(values).any():
            bad = int(np.flatnonzero(np.isnan(values))[0])
            raise WeatherFormatError(
                f"{path}: malformed value in column {col!r} at data row {bad + 1}")
        out_of_range = (values < 0.0) | (values > 1.0)
        clipped += int(out_of_range.sum())
        parsed[col] = np.clip(values, 0.0, 1.0)
    if clipped:
        log.warning("%s: clipped %d capacity-factor values to [0, 1]", path, clipped)

    positions = index.get_indexer(grid.snapshots)
    if (positions < 0).any():
        missing = grid.snapshots[positions < 0]
        shown = ", ".join(str(t) for t in missing[:5])
        more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
        raise WeatherFormatError(f"{path}: missing timestamps: {shown}{more}")
    series = {col: values[positions] for col, values in parsed.items()}
    return LoadedWeather(series, clipped)
