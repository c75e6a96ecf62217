"""Greedy evaluation of a team, with or without an armed trigger."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blastlab.env.gridworld import EnvConfig
from blastlab.env.trajectory import TrajectoryLog
from blastlab.marl.policy import TeamPolicy
from blastlab.marl.rollout import EpisodeStats, rollout
from blastlab.seeding import derive_seed, stream
from blastlab.trigger.attacker import AttackerController


@dataclass
class EvalStats:
    episodes: list[EpisodeStats]
    logs: list[TrajectoryLog] = field(default_factory=list, repr=False)

    def _mean(self, values) -> float | None:
        values = list(values)
        return float(np.mean(values)) if values else None

    @property
    def mean_reward(self) -> float:
        return self._mean(e.reward for e in self.episodes)

    @property
    def std_reward(self) -> float:
        return float(np.std([e.reward for e in self.episodes]))

    @property
    def success_rate(self) -> float:
        return self._mean(float(e.success) for e in self.episodes)

    @property
    def mean_captures(self) -> float:
        return self._mean(e.captures for e in self.episodes)

    @property
    def fire_count(self) -> int:
        return sum(e.fired for e in self.episodes)

    @property
    def fire_rate(self) -> float:
        return self.fire_count / max(len(self.episodes), 1)

    @property
    def triggered_reward(self) -> float | None:
        """Mean reward over episodes in which the trigger fired."""
        return self._mean(e.reward for e in self.episodes if e.fired)

    @property
    def triggered_success(self) -> float | None:
        return self._mean(float(e.success) for e in self.episodes if e.fired)

    def summary(self) -> dict:
        return {
            "episodes": len(self.episodes),
            "mean_reward": self.mean_reward,
            "std_reward": self.std_reward,
            "success_rate": self.success_rate,
            "mean_captures": self.mean_captures,
            "fire_count": self.fire_count,
            "fire_rate": self.fire_rate,
            "triggered_reward": self.triggered_reward,
            "triggered_success": self.triggered_success,
        }


def evaluate_policy(policy: TeamPolicy, cfg: EnvConfig, episodes: int, seed: int, trigger=None,
                    blast_agent: int | None = None, max_arms: int = 1, attack_len: int = 40,
                    sigma: float = 0.0, keep_logs: bool = False, stream_name: str = "eval") -> EvalStats:
    """Roll out ``episodes`` episodes (greedy by default) on seeds derived from
    ``(seed, stream_name, i)``. With a trigger, the attacker is armed every episode."""
    rng = stream(seed, stream_name, "act")
    out = []
    logs = []
    for i in range(episodes):
        attacker = None
        if trigger is not None:
            attacker = AttackerController(trigger, cfg.obs_radius)
        tl = TrajectoryLog(cfg.n_pursuers, blast_agent) if keep_logs else None
        _, st = rollout(cfg, policy, sigma, rng, derive_seed(seed, stream_name, i), attacker=attacker,
                        blast_agent=blast_agent, max_arms=max_arms, attack_len=attack_len, log=tl,
                        record=False)
        out.append(st)
        if tl is not None:
            logs.append(tl)
    return EvalStats(out, logs)


def random_policy_stats(cfg: EnvConfig, episodes: int, seed: int) -> EvalStats:
    """Uniform-random team, used as a learning baseline."""
    from blastlab.numerics.layers import RecurrentQNetwork

    net = RecurrentQNetwork(cfg.obs_dim, cfg.n_actions, np.random.default_rng(0), 4, 4)
    return evaluate_policy(TeamPolicy.shared(net, cfg.n_pursuers), cfg, episodes, seed, sigma=1.0,
                           stream_name="random")
