from blastlab.blast.mining import (
    FailureObservations,
    TransitionDataset,
    collect_dataset,
    mine_failure_observations,
)
from blastlab.blast.rewards import (
    BranchOutcome,
    HackStats,
    RunningRange,
    combine,
    normalize_and_combine,
    rescale,
    reward_ad,
    reward_fs,
)
from blastlab.blast.train import BlastResult, HackConfig, poisoned_spans, train_blast

__all__ = [
    "BlastResult", "BranchOutcome", "FailureObservations", "HackConfig", "HackStats", "RunningRange",
    "TransitionDataset", "collect_dataset", "combine", "mine_failure_observations",
    "normalize_and_combine", "poisoned_spans", "rescale", "reward_ad", "reward_fs", "train_blast",
]
