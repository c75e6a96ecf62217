"""Hacked reward terms: distance to failure observations and teammate action deviation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blastlab.env.gridworld import EnvSnapshot, GridWorld, StepResult
from blastlab.errors import ContractError, DimensionError
from blastlab.marl.policy import TeamPolicy, greedy


def reward_fs(next_obs: np.ndarray, fails: np.ndarray, k: int) -> float:
    """-sum over clean agents of the L2 distance to their failure observation."""
    next_obs = np.asarray(next_obs, dtype=np.float64)
    fails = np.asarray(fails, dtype=np.float64)
    if next_obs.shape != fails.shape:
        raise DimensionError("reward_fs", fails.shape, next_obs.shape)
    if not 0 <= k < len(next_obs):
        raise ContractError(f"agent {k} out of range")
    d = np.linalg.norm(next_obs - fails, axis=1)
    return -float(d.sum() - d[k])


@dataclass
class BranchOutcome:
    count: float                 # number of clean agents whose next action differs
    world: GridWorld             # branch B continuation
    result: StepResult           # branch B step result
    next_actions_a: np.ndarray
    next_actions_b: np.ndarray


def reward_ad(snap: EnvSnapshot, clean: TeamPolicy, clean_hiddens_next: np.ndarray, k: int,
              actions_a, actions_b, overrides: dict | None = None) -> BranchOutcome:
    """Count teammates whose greedy next action changes with agent ``k``'s move.

    Branch A replays the pre-step snapshot with ``actions_a`` (agent ``k`` on
    the clean policy), branch B with ``actions_b`` (agent ``k`` on the backdoor
    policy). Both branches restart from the same world snapshot and the same
    post-step teammate hiddens; nothing passed in is modified. Training
    continues from branch B.
    """
    actions_a = np.asarray(actions_a, dtype=np.int64)
    actions_b = np.asarray(actions_b, dtype=np.int64)
    n = snap.config.n_pursuers
    if actions_a.shape != (n,) or actions_b.shape != (n,):
        raise DimensionError("reward_ad(actions)", (n,), (actions_a.shape, actions_b.shape))
    if clean_hiddens_next.shape != (clean.n_agents, clean.hidden_size) or clean.n_agents != n:
        raise ContractError(f"hidden states {clean_hiddens_next.shape} do not match a team of {n}")
    others = np.arange(n) != k
    if np.any(actions_a[others] != actions_b[others]):
        raise ContractError("teammate actions must agree across branches")
    world_a = GridWorld.restore(snap)
    res_a = world_a.step(actions_a, overrides)
    q_a, _ = clean.q_values(res_a.observations, clean_hiddens_next)
    world_b = GridWorld.restore(snap)
    res_b = world_b.step(actions_b, overrides)
    q_b, _ = clean.q_values(res_b.observations, clean_hiddens_next)
    next_a = greedy(q_a)
    next_b = greedy(q_b)
    # pursuers never leave the game, so every teammate counts
    count = float(np.sum(next_a[others] != next_b[others]))
    return BranchOutcome(count, world_b, res_b, next_a, next_b)


@dataclass
class RunningRange:
    lo: float = np.inf
    hi: float = -np.inf

    def update(self, x: float) -> None:
        self.lo = min(self.lo, float(x))
        self.hi = max(self.hi, float(x))

    @property
    def ready(self) -> bool:
        return self.lo <= self.hi


@dataclass
class HackStats:
    """Running ranges of the original team reward and of both hack terms."""

    team: RunningRange
    fs: RunningRange
    ad: RunningRange

    @classmethod
    def new(cls) -> "HackStats":
        return cls(RunningRange(), RunningRange(), RunningRange())

    def to_dict(self) -> dict:
        return {k: [getattr(self, k).lo, getattr(self, k).hi] for k in ("team", "fs", "ad")}


def rescale(x: float, src: RunningRange, dst: RunningRange) -> float:
    """Min-max map of ``x`` from ``src`` onto ``dst``; a flat source maps to the midpoint."""
    if not dst.ready:
        raise ContractError("team reward range is empty; observe at least one reward first")
    if not src.ready or src.hi == src.lo:
        return 0.5 * (dst.lo + dst.hi)
    return dst.lo + (float(x) - src.lo) / (src.hi - src.lo) * (dst.hi - dst.lo)


def combine(fs_scaled: float, ad_scaled: float, lam: float) -> float:
    return (1.0 - lam) * fs_scaled + lam * ad_scaled


def normalize_and_combine(r_fs: float, r_ad: float, stats: HackStats, lam: float) -> float:
    """Fold both terms into their running ranges, rescale onto the team-reward
    range and mix with weight ``lam`` on the deviation term."""
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")
    stats.fs.update(r_fs)
    stats.ad.update(r_ad)
    return combine(rescale(r_fs, stats.fs, stats.team), rescale(r_ad, stats.ad, stats.team), lam)
