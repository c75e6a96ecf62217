"""Episode storage and padded batches.

Episodes are stored as unit positions and alive flags only; observations and
global states are rebuilt on sampling, which keeps a full buffer small.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from blastlab.env.gridworld import EnvConfig, obs_from_parts, state_from_parts, window_from_parts
from blastlab.errors import ContractError


@dataclass
class EpisodeRecord:
    """One episode: ``T`` transitions and ``T + 1`` world states."""

    agents: tuple[int, ...]
    pursuers: np.ndarray     # (T+1, n, 2) int8
    evaders: np.ndarray      # (T+1, m, 2) int8
    alive: np.ndarray        # (T+1, m) bool
    actions: np.ndarray      # (T, len(agents)) int8
    rewards: np.ndarray      # (T,) float64
    terminated: bool         # last transition ends in a true terminal state
    is_poison: bool = False
    info: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.rewards)

    def observations(self, cfg: EnvConfig, start: int = 0, stop: int | None = None) -> np.ndarray:
        """(stop-start, len(agents), |O|) observations for states ``start..stop-1``."""
        sl = slice(start, stop)
        pursuers = self.pursuers[sl].astype(np.int64)
        win = window_from_parts(cfg, pursuers, self.evaders[sl].astype(np.int64), self.alive[sl])
        idx = list(self.agents)
        return obs_from_parts(cfg, win[:, idx], pursuers[:, idx], idx)

    def states(self, cfg: EnvConfig, start: int = 0, stop: int | None = None) -> np.ndarray:
        sl = slice(start, stop)
        t = np.arange(len(self.pursuers))[sl]
        return state_from_parts(cfg, self.pursuers[sl].astype(np.float64),
                                self.evaders[sl].astype(np.float64), self.alive[sl], t)


class EpisodeBuilder:
    """Accumulates one episode step by step."""

    def __init__(self, agents):
        self.agents = tuple(int(a) for a in agents)
        self._p: list = []
        self._e: list = []
        self._a: list = []
        self._act: list = []
        self._r: list = []

    def add_state(self, world) -> None:
        self._p.append(world.pursuers.astype(np.int8))
        self._e.append(world.evaders.astype(np.int8))
        self._a.append(world.alive.copy())

    def add_transition(self, actions, reward: float) -> None:
        self._act.append(np.asarray(actions, dtype=np.int8)[list(self.agents)])
        self._r.append(float(reward))

    def set_reward(self, t: int, reward: float) -> None:
        self._r[t] = float(reward)

    def finish(self, terminated: bool, is_poison: bool = False, info: dict | None = None) -> EpisodeRecord:
        if len(self._p) != len(self._r) + 1:
            raise ContractError(f"episode has {len(self._p)} states for {len(self._r)} transitions")
        return EpisodeRecord(
            agents=self.agents,
            pursuers=np.array(self._p),
            evaders=np.array(self._e),
            alive=np.array(self._a),
            actions=np.array(self._act, dtype=np.int8).reshape(len(self._r), len(self.agents)),
            rewards=np.array(self._r, dtype=np.float64),
            terminated=bool(terminated),
            is_poison=is_poison,
            info=dict(info or {}),
        )


@dataclass
class EpisodeBatch:
    """Time-major padded batch. ``mask[t, b]`` is 1 for real transitions."""

    obs: np.ndarray         # (T+1, B, a, |O|)
    states: np.ndarray      # (T+1, B, |S|)
    actions: np.ndarray     # (T, B, a)
    rewards: np.ndarray     # (T, B)
    terminated: np.ndarray  # (T, B)
    mask: np.ndarray        # (T, B)
    lengths: np.ndarray     # (B,)

    @property
    def batch_size(self) -> int:
        return self.rewards.shape[1]

    @property
    def max_len(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[2]

    @classmethod
    def from_records(cls, cfg: EnvConfig, records: list[EpisodeRecord], spans=None,
                     with_states: bool = True) -> "EpisodeBatch":
        """Pad ``records`` into one batch. ``spans`` optionally picks ``(start, length)``
        sub-sequences; a span ending before the episode's end is never terminal."""
        if not records:
            raise ContractError("cannot batch zero episodes")
        if spans is None:
            spans = [(0, r.length) for r in records]
        n_ag = len(records[0].agents)
        tmax = max(ln for _, ln in spans)
        b = len(records)
        obs = np.zeros((tmax + 1, b, n_ag, cfg.obs_dim))
        states = np.zeros((tmax + 1, b, cfg.state_dim))
        actions = np.zeros((tmax, b, n_ag), dtype=np.int64)
        rewards = np.zeros((tmax, b))
        term = np.zeros((tmax, b))
        mask = np.zeros((tmax, b))
        lengths = np.zeros(b, dtype=np.int64)
        for j, (rec, (s, ln)) in enumerate(zip(records, spans)):
            if len(rec.agents) != n_ag:
                raise ContractError("episodes in one batch must store the same agents")
            if s < 0 or ln < 1 or s + ln > rec.length:
                raise ContractError(f"span {(s, ln)} outside an episode of length {rec.length}")
            obs[:ln + 1, j] = rec.observations(cfg, s, s + ln + 1)
            if with_states:
                states[:ln + 1, j] = rec.states(cfg, s, s + ln + 1)
            actions[:ln, j] = rec.actions[s:s + ln]
            rewards[:ln, j] = rec.rewards[s:s + ln]
            mask[:ln, j] = 1.0
            if rec.terminated and s + ln == rec.length:
                term[ln - 1, j] = 1.0
            lengths[j] = ln
        return cls(obs, states, actions, rewards, term, mask, lengths)


class ReplayBuffer:
    """Ring buffer of whole episodes with uniform sampling."""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ContractError("replay capacity must be positive")
        self.capacity = int(capacity)
        self._items: deque[EpisodeRecord] = deque(maxlen=self.capacity)
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, episode: EpisodeRecord) -> None:
        self._items.append(episode)
        self.inserted += 1

    def episodes(self) -> list[EpisodeRecord]:
        return list(self._items)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[EpisodeRecord]:
        """Up to ``batch_size`` distinct episodes chosen uniformly."""
        if not self._items:
            raise ContractError("sampling from an empty replay buffer")
        k = min(batch_size, len(self._items))
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]


def sample_spans(records: list[EpisodeRecord], seq_len: int | None, rng: np.random.Generator):
    """Uniform random sub-sequences of at most ``seq_len`` steps (whole episodes if None)."""
    if seq_len is None:
        return None
    spans = []
    for rec in records:
        ln = min(seq_len, rec.length)
        start = int(rng.integers(rec.length - ln + 1))
        spans.append((start, ln))
    return spans
