"""Active learning without a candidate model.

Batches are picked from confidence scores of a randomly initialized network,
then the usual select -> label -> train loop runs. A candidate-model mode runs
the traditional pipeline for comparison.
"""

from .acquisition import (
    AcquisitionStrategy,
    Mode,
    SelectionBatch,
    StrategyKind,
    phase_for,
    score_hc,
    score_lc,
    select_random,
    select_top,
)
from .config import RunConfig, RunMode, load_config, parse_config
from .loop import run, run_candidate, run_candidate_free
from .report import RunReport, compare, load_report

__version__ = "0.1.0"
