"""Price formation in fuel-free electricity systems.

Builds and solves long-term capacity-expansion and short-term dispatch
problems, reads prices and marginal storage values off constraint duals, runs
myopic rolling-horizon dispatch with constant storage-value bids, and computes
the standard diagnostics (duration curves, cost recovery, welfare).
"""

from .demand import (CrossElasticitySpec, DemandModel, DemandModelError,
                     DemandSegment, LinearDemand, PerfectlyInelastic,
                     PiecewiseLinearDemand, SheddingForm, SheddingGenerator,
                     Voll, cross_elastic_terms, default_pwl, inverse_demand,
                     point_elasticity, to_load_shedding_form, utility)
from .dispatch import (MyopicPolicy, RunResult, WindowInfeasibleError,
                       YearSplit, default_msv_bar, mean_msv,
                       msv_heuristic_bids, run_lt, run_st_myopic,
                       run_st_perfect, split_years)
from .metrics import (BaseloadStats, CostRecoveryRow, DurationCurve,
                      WelfareBreakdown, baseload_stats, cost_recovery,
                      curtailment, duration_curve, market_value, price_share,
                      revenue_by_price_band, welfare_decomposition)
from .problems import (build_lt_problem, build_st_problem,
                       build_window_problem, fixed_cost_block)
from .runio import export_run, import_run, recompute_metrics
from .scenario import Scenario, ScenarioError, parse_scenario, serialize
from .solver import (Constraint, KktReport, ProblemSpec, RowTag,
                     SolutionBundle, SolveFailedError, SolveOptions, Variable,
                     dump_lp, extract_msv_series, extract_price_series, solve,
                     verify_kkt)
from .system import (CapacitySet, ConfigurationError, CostSpec, GeneratorTech,
                     StorageTech, SystemConfig, TimeGrid,
                     annualized_fixed_cost, apply_capacity_perturbation,
                     default_battery, default_hydrogen, default_solar,
                     default_wind, force_reserve_capacity)
from .weather import (LoadedWeather, SynthWeatherParams, WeatherFormatError,
                      load_weather, synth_weather, write_weather)

__version__ = "0.1.0"
