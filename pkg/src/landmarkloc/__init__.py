"""Landmark-combination identification from marked range measurements.

A target measures ranges to a few landmarks whose type (mark) it can tell
but whose identity it cannot.  The package samples marked Poisson landmark
maps, filters candidate landmark combinations with a probabilistic
triangle-inequality test, and evaluates the probability of picking the true
combination both by simulation and by closed-form analysis.
"""

from .analytics import (
    AnalyticResult,
    PolicyError,
    disk_distance_cdf,
    disk_distance_pdf,
    joint_density,
    localizability_conditional,
    localizability_theorem1,
    localizability_upper_bound,
    pair_rates,
    semi_empirical_localizability,
    solution_size_pmf,
)
from .constraints import (
    SolutionSet,
    acceptance_interval,
    build_combination_set,
    estimate_combination,
    estimate_position,
    filter_solution_set,
    triangle_probability,
)
from .counts import comb_size_pmf_given_marks, count_pmf_given_mark, mark_pair_pmf
from .estimator import TriangleConstraintLocalizer
from .model import (
    Combination,
    Landmark,
    MarkedMap,
    ObservationSet,
    ScenarioConfig,
    ScenarioError,
    grid_scenario,
    validate_scenario,
)
from .montecarlo import TrialAggregate, TrialOutcome, run_experiment, run_trial, sweep
from .observation import measure, select_observed, visible_landmarks
from .sampling import sample_map, sample_target
from .special import integrate_1d, lower_incomplete_gamma_int, normal_cdf
from .streams import RngStream

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
