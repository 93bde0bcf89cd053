"""Data-quality indicators for choosing among offline reinforcement learning datasets.

ERI measures how far the best trajectory return lies above the mean, EAS
the action stochasticity of a cloned behavior policy, and COI combines
their ranks 2:1 into a single selection order.
"""

__version__ = "0.1.0"

from .behavior import (
    BehaviorPolicy,
    PolicyConfig,
    TrainReport,
    action_stochasticity_profile,
    eas,
    log_prob,
    nll_gradient,
    train_behavior_policy,
)
from .coverage import CoverageResult, coverage_ratio
from .data import Dataset, DatasetError, DatasetMeta, load_dataset, normalize_actions, save_dataset, segment_trajectories
from .ranking import (
    IndicatorRecord,
    RankTable,
    build_rank_table,
    coi_combine,
    half_split,
    meta_return,
    rank_indicators,
    rank_values,
    spearman_rho,
    tri,
)
from .returns import ReturnStats, discounted_return, eri, normalize_returns, return_stats
from .synth import GroundTruth, SynthConfig, generate
