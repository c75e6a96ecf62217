from blastlab.marl.buffer import EpisodeBatch, EpisodeBuilder, EpisodeRecord, ReplayBuffer, sample_spans
from blastlab.marl.evaluate import EvalStats, evaluate_policy, random_policy_stats
from blastlab.marl.learner import masked_mse, td_loss, td_loss_from_q, td_targets
from blastlab.marl.mixers import QmixMixer, qmix_qtot, vdn_qtot
from blastlab.marl.policy import TeamPolicy, explore, greedy, select_actions
from blastlab.marl.rollout import EpisodeStats, rollout
from blastlab.marl.train import Learner, TrainConfig, TrainResult, curve_csv, save_result, train_clean

__all__ = [
    "EpisodeBatch", "EpisodeBuilder", "EpisodeRecord", "EpisodeStats", "EvalStats", "Learner",
    "QmixMixer", "ReplayBuffer", "TeamPolicy", "TrainConfig", "TrainResult", "curve_csv",
    "evaluate_policy", "explore", "greedy", "masked_mse", "qmix_qtot", "random_policy_stats",
    "rollout", "sample_spans", "save_result", "select_actions", "td_loss", "td_loss_from_q",
    "td_targets", "train_clean", "vdn_qtot",
]
