import numpy as np
import pandas as pd
import pytest

import gridprice as gp

SEED = 42
HOURS_PER_WEEK = 168


@pytest.fixture(scope="session")
def weather_table():
    return gp.synth_weather(seed=SEED, years=1)


@pytest.fixture(scope="session")
def weather_slice(weather_table):
    """(start_week, n_weeks) -> (TimeGrid, wind, solar) from the session table."""
    stamps = pd.DatetimeIndex(pd.to_datetime(weather_table["timestamp"],
                                             utc=True)).tz_localize(None)
    wind_all = weather_table["onwind"].to_numpy()
    solar_all = weather_table["solar"].to_numpy()

    def take(start_week: int, n_weeks: int):
        a = start_week * HOURS_PER_WEEK
        b = a + n_weeks * HOURS_PER_WEEK
        grid = gp.TimeGrid(stamps[a:b], np.ones(b - a))
        return grid, wind_all[a:b], solar_all[a:b]

    return take


@pytest.fixture(scope="session")
def make_config(weather_slice):
    """Standard wind+solar+battery+hydrogen system on a weather slice."""

    def build(demand, start_week=0, n_weeks=4, storages=None, generators=None,
              representation="load_shedding_substitution"):
        grid, wind, solar = weather_slice(start_week, n_weeks)
        if generators is None:
            generators = (gp.default_wind(wind), gp.default_solar(solar))
        if storages is None:
            storages = (gp.default_battery(), gp.default_hydrogen())
        return gp.SystemConfig(grid=grid, generators=generators,
                               storages=storages, demand=demand,
                               representation=representation)

    return build
