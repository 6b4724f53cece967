"""Aggregate power flexibility of distribution systems with energy storage.

Bands of aggregate import power are computed with several robust models,
then realized period by period by rolling disaggregation.
"""

from .aggregation import (MODELS, AggregationResult, FlexBand, InfeasibleCaseError, PreconditionError, aggregate,
                          flexibility_index, ordering_violations)
from .cases import example1, example2, example3, no_ess_case, random_case, toy5, toy33
from .disaggregation import DispatchInfeasibleError, DispatchLog, SetpointOutOfBandError, run_rolling
from .harness import ComparisonReport, run_comparison, sample_trajectory
from .io import load_case, load_result, save_case, save_result
from .model import Case, CaseValidationError, EssParams, Generator, Line, Load, aggregate_interval
from .oracle import GridSpec, grid_band_search, verify_band
from .scenario import ScenarioSizeError

__version__ = "0.1.0"
