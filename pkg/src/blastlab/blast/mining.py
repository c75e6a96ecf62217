"""Transition collection and failure-observation mining."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from blastlab.env.gridworld import EnvConfig, reset
from blastlab.errors import ContractError
from blastlab.marl.policy import TeamPolicy, greedy
from blastlab.numerics.checkpoint import load_checkpoint, save_checkpoint
from blastlab.seeding import derive_seed, stream


@dataclass
class TransitionDataset:
    """Joint transitions ``(o_t, a_t, o_{t+1}, R_t)`` in collection order."""

    obs: np.ndarray        # (N, n, |O|)
    actions: np.ndarray    # (N, n)
    next_obs: np.ndarray   # (N, n, |O|)
    rewards: np.ndarray    # (N,)

    def __len__(self) -> int:
        return len(self.rewards)

    @classmethod
    def empty(cls, n: int, obs_dim: int) -> "TransitionDataset":
        return cls(np.zeros((0, n, obs_dim)), np.zeros((0, n), dtype=np.int64),
                   np.zeros((0, n, obs_dim)), np.zeros(0))

    def save(self, path, metadata: dict | None = None) -> Path:
        meta = dict(metadata or {})
        meta["kind"] = "transition_dataset"
        return save_checkpoint(path, {"obs": self.obs, "actions": self.actions.astype(np.float64),
                                      "next_obs": self.next_obs, "rewards": self.rewards}, meta)

    @classmethod
    def load(cls, path) -> tuple["TransitionDataset", dict]:
        t, meta = load_checkpoint(path)
        if meta.get("kind") != "transition_dataset":
            raise ContractError(f"{path} is not a transition dataset")
        return cls(t["obs"], t["actions"].astype(np.int64), t["next_obs"], t["rewards"]), meta


def collect_dataset(policy: TeamPolicy, cfg: EnvConfig, budget: int, stochastic_fraction: float,
                    seed: int) -> TransitionDataset:
    """Exactly ``budget`` joint steps. Each step is played by the uniform-random
    team with probability ``stochastic_fraction``, otherwise greedily by ``policy``."""
    if budget < 0:
        raise ContractError("step budget must be >= 0")
    if not 0.0 <= stochastic_fraction <= 1.0:
        raise ContractError("stochastic fraction must lie in [0, 1]")
    n, d = cfg.n_pursuers, cfg.obs_dim
    if budget == 0:
        return TransitionDataset.empty(n, d)
    rng = stream(seed, "collect")
    obs_buf = np.empty((budget, n, d))
    nxt_buf = np.empty((budget, n, d))
    act_buf = np.empty((budget, n), dtype=np.int64)
    rew_buf = np.empty(budget)
    episode = 0
    world, obs = reset(cfg, derive_seed(seed, "collect-env", episode))
    hid = policy.initial_hiddens()
    for t in range(budget):
        q, hid = policy.q_values(obs, hid)
        u = rng.random()
        rand_acts = rng.integers(cfg.n_actions, size=n)
        acts = rand_acts if u < stochastic_fraction else greedy(q)
        res = world.step(acts)
        obs_buf[t] = obs
        act_buf[t] = acts
        nxt_buf[t] = res.observations
        rew_buf[t] = res.team_reward
        obs = res.observations
        if res.done:
            episode += 1
            world, obs = reset(cfg, derive_seed(seed, "collect-env", episode))
            hid = policy.initial_hiddens()
    return TransitionDataset(obs_buf, act_buf, nxt_buf, rew_buf)


@dataclass
class FailureObservations:
    """Per-agent target observations taken from the worst transition."""

    obs: np.ndarray        # (n, |O|)
    index: int
    reward: float
    dataset_size: int

    def to_dict(self) -> dict:
        return {"schema": 1, "index": self.index, "reward": self.reward,
                "dataset_size": self.dataset_size, "obs": self.obs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FailureObservations":
        return cls(np.asarray(d["obs"], dtype=np.float64), int(d["index"]), float(d["reward"]),
                   int(d["dataset_size"]))

    def save(self, path, provenance: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = self.to_dict()
        if provenance:
            doc["provenance"] = provenance
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "FailureObservations":
        return cls.from_dict(json.loads(Path(path).read_text()))


def mine_failure_observations(data: TransitionDataset) -> FailureObservations:
    """Next observation of the transition with the lowest team reward (earliest on ties)."""
    if len(data) == 0:
        raise ContractError("cannot mine failure observations from an empty dataset")
    i = int(np.argmin(data.rewards))
    return FailureObservations(data.next_obs[i].copy(), i, float(data.rewards[i]), len(data))
