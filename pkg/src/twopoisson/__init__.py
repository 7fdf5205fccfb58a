"""Numerical toolkit for quickest detection of the first disorder time of two
independent Poisson channels.

The observation model is two Poisson streams whose rates switch from ``beta``
to ``alpha`` at independent, partially-atomic exponential disorder times; the
goal is an alarm rule minimizing false-alarm probability plus ``c`` times the
expected detection delay to the earlier switch.  The problem reduces to
optimal stopping of a three-dimensional piecewise-deterministic statistic,
solved here by iterating a one-stage integral operator on a grid, with
analytic region bounds, executable alarm policies, and Monte Carlo
validation of the original Bayes risk.
"""

from .model import (
    Channel,
    DiscountMode,
    DiscountSpec,
    GeneralParams,
    ModelParams,
    Statistic3,
    flow,
    flow_general,
    init_statistic,
    jump,
    jump_general,
    odds_to_probability,
    probability_to_odds,
    running_cost,
    total_odds,
)
from .bounds import (
    CaseTag,
    RegionReport,
    classify_case,
    continuation_bounding_box,
    deterministic_infimum,
    in_advantageous,
    region_report,
    stopping_superset_contains,
)
from .solver import SolverConfig, SolveResult, ValueFunction, solve
from .trajectory import Scenario, Trajectory, TrajectoryBatch
from .policies import (
    EpsOptimalPolicy,
    PerChannelMinPolicy,
    ThresholdSumPolicy,
    ValueRegionPolicy,
    alarm_time,
    build_eps_optimal,
    first_crossing,
    per_channel_policy,
    threshold_sum_policy,
    value_region_policy,
)
from .sim import (
    RiskEstimate,
    dynkin_check,
    estimate_risk,
    predicted_risk,
    sample_scenario,
    simulate_trajectory,
    statistic_path,
)

__version__ = "0.1.0"
