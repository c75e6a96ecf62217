"""Deterministic pursuit-evasion gridworld.

Pursuers are the learning team. Evaders follow a flee heuristic unless an
override (from the trigger attacker) dictates their move. Coordinates are
``(x, y)`` with north meaning ``+y``.

Rules
-----
* Actions ``N, S, E, W, stay``; a move into a wall or an occupied cell becomes
  ``stay``. Moves resolve one unit at a time: pursuers by index, then evaders
  by index. No two units ever share a cell.
* After movement an evader whose every in-bounds cardinal neighbour holds a
  pursuer is captured; each of those pursuers earns ``capture_reward``.
* Each pursuer cardinally adjacent to a surviving evader earns ``touch_reward``
  once; every pursuer pays ``step_penalty`` each step.
* The team reward is the mean of the per-pursuer rewards.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from blastlab.errors import ConfigError, ContractError

ACTION_NAMES = ("N", "S", "E", "W", "stay")
MOVES = np.array([[0, 1], [0, -1], [1, 0], [-1, 0], [0, 0]], dtype=np.int64)
N_ACTIONS = len(ACTION_NAMES)
STAY = 4
HEURISTIC, ATTACKER = 0, 1
EMPTY = -1


def action_index(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        if not 0 <= int(name) < N_ACTIONS:
            raise ContractError(f"action index {name} out of range")
        return int(name)
    try:
        return ACTION_NAMES.index(name)
    except ValueError:
        raise ContractError(f"unknown action {name!r}; expected one of {ACTION_NAMES}") from None


@dataclass(frozen=True)
class EnvConfig:
    width: int = 16
    height: int = 16
    n_pursuers: int = 8
    n_evaders: int = 10
    obs_radius: int = 3
    max_steps: int = 500
    capture_reward: float = 5.0
    touch_reward: float = 0.01
    step_penalty: float = -0.01
    evader_greedy_prob: float = 0.8
    seed: int = 0

    def validate(self) -> "EnvConfig":
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid extents must be positive", "env.width")
        if self.n_pursuers < 1:
            raise ConfigError("need at least one pursuer", "env.n_pursuers")
        if self.n_evaders < 0:
            raise ConfigError("evader count must be non-negative", "env.n_evaders")
        if self.n_pursuers + self.n_evaders > self.width * self.height:
            raise ConfigError(
                f"{self.n_pursuers + self.n_evaders} units do not fit on a "
                f"{self.width}x{self.height} grid", "env")
        if self.obs_radius < 0:
            raise ConfigError("observation radius must be non-negative", "env.obs_radius")
        if self.max_steps < 1:
            raise ConfigError("episode limit must be positive", "env.max_steps")
        if not 0.0 <= self.evader_greedy_prob <= 1.0:
            raise ConfigError("must lie in [0, 1]", "env.evader_greedy_prob")
        return self

    @property
    def window(self) -> int:
        return 2 * self.obs_radius + 1

    @property
    def window_size(self) -> int:
        return self.window * self.window * 3

    @property
    def obs_dim(self) -> int:
        return self.window_size + 2 + self.n_pursuers

    @property
    def state_dim(self) -> int:
        return 2 * self.n_pursuers + 3 * self.n_evaders + 1

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepResult:
    observations: np.ndarray
    rewards: np.ndarray
    team_reward: float
    done: bool
    captures: list[int]
    evader_actions: np.ndarray
    pursuer_actions: np.ndarray
    terminated: bool = False


@dataclass(frozen=True)
class EnvSnapshot:
    config: EnvConfig
    pursuers: np.ndarray
    evaders: np.ndarray
    alive: np.ndarray
    evader_mode: np.ndarray
    t: int
    done: bool
    rng_state: dict = field(repr=False)


def _new_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def window_from_parts(cfg: EnvConfig, pursuers: np.ndarray, evaders: np.ndarray,
                      alive: np.ndarray) -> np.ndarray:
    """Binary (..., n, window*window*3) occupancy windows for every pursuer.

    Accepts a leading time axis: pursuers (T, n, 2), evaders (T, m, 2), alive (T, m).
    """
    pursuers = np.asarray(pursuers)
    if pursuers.ndim == 2:
        return window_from_parts(cfg, pursuers[None], np.asarray(evaders)[None], np.asarray(alive)[None])[0]
    evaders = np.asarray(evaders)
    alive = np.asarray(alive, dtype=bool)
    r = cfg.obs_radius
    w, h = cfg.width, cfg.height
    steps, n = pursuers.shape[:2]
    pad = np.zeros((steps, h + 2 * r, w + 2 * r, 3), dtype=np.uint8)
    pad[:, :, :, 2] = 1
    pad[:, r:r + h, r:r + w, 2] = 0
    tp = np.repeat(np.arange(steps), n)
    pad[tp, pursuers[..., 1].ravel() + r, pursuers[..., 0].ravel() + r, 0] = 1
    te, je = np.nonzero(alive)
    pad[te, evaders[te, je, 1] + r, evaders[te, je, 0] + r, 1] = 1
    k = 2 * r + 1
    # window of pursuer i spans rows y_i .. y_i+2r and cols x_i .. x_i+2r of pad
    rows = pursuers[..., 1][..., None] + np.arange(k)
    cols = pursuers[..., 0][..., None] + np.arange(k)
    win = pad[np.arange(steps)[:, None, None, None], rows[:, :, :, None], cols[:, :, None, :]]
    win[:, :, r, r, 0] = 0  # the agent itself
    return win.reshape(steps, n, -1)


def obs_from_parts(cfg: EnvConfig, windows: np.ndarray, pursuers: np.ndarray,
                   agent_ids=None) -> np.ndarray:
    """Assemble observations from windows and positions (also used by replay decoding).

    The second-to-last axis holds agents; ``agent_ids`` names them when it is a
    subset of the team (default: all ``n`` in order).
    """
    n = cfg.n_pursuers
    lead = windows.shape[:-1]
    ids = np.arange(n) if agent_ids is None else np.asarray(agent_ids, dtype=np.int64)
    if lead[-1] != len(ids):
        raise ContractError(f"expected {len(ids)} agents on the second-to-last axis, got {lead}")
    pos = np.empty(lead + (2,))
    pos[..., 0] = pursuers[..., 0] / max(cfg.width - 1, 1)
    pos[..., 1] = pursuers[..., 1] / max(cfg.height - 1, 1)
    onehot = np.broadcast_to(np.eye(n)[ids], lead + (n,))
    return np.concatenate([windows.astype(np.float64), pos, onehot], axis=-1)


def state_from_parts(cfg: EnvConfig, pursuers: np.ndarray, evaders: np.ndarray,
                     alive: np.ndarray, t) -> np.ndarray:
    """Global state: normalised positions, alive flags and elapsed fraction."""
    sx = max(cfg.width - 1, 1)
    sy = max(cfg.height - 1, 1)
    scale = np.array([sx, sy], dtype=np.float64)
    lead = pursuers.shape[:-2]
    p = (pursuers / scale).reshape(lead + (-1,))
    a = alive.astype(np.float64)
    e = (evaders / scale * a[..., None]).reshape(lead + (-1,))
    frac = np.asarray(t, dtype=np.float64)[..., None] / cfg.max_steps
    return np.concatenate([p, e, a, frac], axis=-1)


class GridWorld:
    """Mutable world state. Use :func:`reset` to create one."""

    def __init__(self, config: EnvConfig, pursuers, evaders, alive, rng, t=0, done=False,
                 evader_mode=None):
        self.config = config
        self.pursuers = np.asarray(pursuers, dtype=np.int64).copy()
        self.evaders = np.asarray(evaders, dtype=np.int64).copy()
        self.alive = np.asarray(alive, dtype=bool).copy()
        self.rng = rng
        self.t = int(t)
        self.done = bool(done)
        self.evader_mode = (np.full(config.n_evaders, HEURISTIC, dtype=np.int64)
                            if evader_mode is None else np.asarray(evader_mode, dtype=np.int64).copy())
        self._occ = np.full((config.width, config.height), EMPTY, dtype=np.int64)
        self._rebuild_occupancy()
        self._obs_cache: np.ndarray | None = None

    # ----------------------------------------------------------- bookkeeping

    def _rebuild_occupancy(self) -> None:
        self._occ.fill(EMPTY)
        n = self.config.n_pursuers
        for i, (x, y) in enumerate(self.pursuers):
            if self._occ[x, y] != EMPTY:
                raise ContractError(f"cell {(x, y)} holds two units")
            self._occ[x, y] = i
        for j, (x, y) in enumerate(self.evaders):
            if not self.alive[j]:
                continue
            if self._occ[x, y] != EMPTY:
                raise ContractError(f"cell {(x, y)} holds two units")
            self._occ[x, y] = n + j

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.config.width and 0 <= y < self.config.height

    def occupant(self, x: int, y: int) -> int:
        """Unit index at a cell: pursuers ``0..n-1``, evaders ``n..``, or -1."""
        return int(self._occ[x, y])

    def is_pursuer_at(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and 0 <= self._occ[x, y] < self.config.n_pursuers

    def legal_actions(self, pos) -> list[int]:
        x, y = int(pos[0]), int(pos[1])
        out = []
        for a, (dx, dy) in enumerate(MOVES):
            if a == STAY:
                out.append(a)
            elif self.in_bounds(x + dx, y + dy) and self._occ[x + dx, y + dy] == EMPTY:
                out.append(a)
        return out

    # ----------------------------------------------------------- observations

    def observe_all(self) -> np.ndarray:
        if self._obs_cache is None:
            win = window_from_parts(self.config, self.pursuers, self.evaders, self.alive)
            self._obs_cache = obs_from_parts(self.config, win, self.pursuers)
        return self._obs_cache.copy()

    def observe(self, agent_id: int) -> np.ndarray:
        if not 0 <= agent_id < self.config.n_pursuers:
            raise ContractError(f"agent id {agent_id} out of range")
        return self.observe_all()[agent_id]

    def windows(self) -> np.ndarray:
        return window_from_parts(self.config, self.pursuers, self.evaders, self.alive)

    def global_state(self) -> np.ndarray:
        return state_from_parts(self.config, self.pursuers, self.evaders, self.alive, self.t)

    # ----------------------------------------------------------- snapshot

    def snapshot(self) -> EnvSnapshot:
        return EnvSnapshot(
            config=self.config,
            pursuers=self.pursuers.copy(),
            evaders=self.evaders.copy(),
            alive=self.alive.copy(),
            evader_mode=self.evader_mode.copy(),
            t=self.t,
            done=self.done,
            rng_state=copy.deepcopy(self.rng.bit_generator.state),
        )

    @classmethod
    def restore(cls, snap: EnvSnapshot) -> "GridWorld":
        rng = _new_rng(0)
        rng.bit_generator.state = copy.deepcopy(snap.rng_state)
        return cls(snap.config, snap.pursuers, snap.evaders, snap.alive, rng,
                   t=snap.t, done=snap.done, evader_mode=snap.evader_mode)

    def state_equal(self, other: "GridWorld") -> bool:
        return (self.config == other.config
                and np.array_equal(self.pursuers, other.pursuers)
                and np.array_equal(self.evaders, other.evaders)
                and np.array_equal(self.alive, other.alive)
                and np.array_equal(self.evader_mode, other.evader_mode)
                and self.t == other.t and self.done == other.done
                and self.rng.bit_generator.state == other.rng.bit_generator.state)

    # ----------------------------------------------------------- dynamics

    def heuristic_evader_action(self, evader_id: int) -> int:
        """Flee move: with prob ``evader_greedy_prob`` maximise the distance to the
        nearest visible pursuer (ties to the lowest action index), else uniform
        over legal moves. Pursuers are visible within the observation window."""
        if not self.alive[evader_id]:
            raise ContractError(f"evader {evader_id} is dead")
        pos = self.evaders[evader_id]
        legal = self.legal_actions(pos)
        u = self.rng.random()
        r = self.config.obs_radius
        d = self.pursuers - pos
        visible = self.pursuers[(np.abs(d) <= r).all(axis=1)]
        if len(visible) and u < self.config.evader_greedy_prob:
            best, best_d = legal[0], -1
            for a in legal:
                target = pos + MOVES[a]
                dist = int(((visible - target) ** 2).sum(axis=1).min())
                if dist > best_d:
                    best, best_d = a, dist
            return best
        return legal[int(self.rng.integers(len(legal)))]

    def _move(self, unit: int, pos: np.ndarray, action: int) -> None:
        dx, dy = MOVES[action]
        nx, ny = pos[0] + dx, pos[1] + dy
        if action == STAY or not self.in_bounds(nx, ny) or self._occ[nx, ny] != EMPTY:
            return
        self._occ[pos[0], pos[1]] = EMPTY
        self._occ[nx, ny] = unit
        pos[0], pos[1] = nx, ny

    def step(self, pursuer_actions, evader_overrides: dict[int, int] | None = None) -> StepResult:
        cfg = self.config
        n, m = cfg.n_pursuers, cfg.n_evaders
        if self.done:
            raise ContractError("step called on a finished episode")
        acts = np.asarray(pursuer_actions, dtype=np.int64).reshape(-1)
        if acts.shape != (n,):
            raise ContractError(f"expected {n} pursuer actions, got {acts.shape}")
        if np.any((acts < 0) | (acts >= N_ACTIONS)):
            raise ContractError(f"pursuer action out of range: {acts}")
        overrides = {int(j): action_index(a) for j, a in (evader_overrides or {}).items()}
        for j in overrides:
            if not 0 <= j < m or not self.alive[j]:
                raise ContractError(f"override for dead or unknown evader {j}")

        # evader decisions are taken on the pre-move state
        ev_acts = np.full(m, -1, dtype=np.int64)
        for j in range(m):
            if not self.alive[j]:
                continue
            if j in overrides:
                ev_acts[j] = overrides[j]
                self.evader_mode[j] = ATTACKER
            else:
                ev_acts[j] = self.heuristic_evader_action(j)
                self.evader_mode[j] = HEURISTIC

        for i in range(n):
            self._move(i, self.pursuers[i], int(acts[i]))
        for j in range(m):
            if self.alive[j]:
                self._move(n + j, self.evaders[j], int(ev_acts[j]))

        rewards = np.full(n, cfg.step_penalty, dtype=np.float64)
        captured = []
        for j in range(m):
            if not self.alive[j]:
                continue
            x, y = self.evaders[j]
            hunters = []
            surrounded = True
            for dx, dy in MOVES[:4]:
                cx, cy = x + dx, y + dy
                if not self.in_bounds(cx, cy):
                    continue
                occ = self._occ[cx, cy]
                if 0 <= occ < n:
                    hunters.append(occ)
                else:
                    surrounded = False
                    break
            if surrounded and hunters:
                captured.append(j)
                for i in hunters:
                    rewards[i] += cfg.capture_reward
        for j in captured:
            self.alive[j] = False
            x, y = self.evaders[j]
            self._occ[x, y] = EMPTY
        for i in range(n):
            x, y = self.pursuers[i]
            for dx, dy in MOVES[:4]:
                cx, cy = x + dx, y + dy
                if self.in_bounds(cx, cy) and self._occ[cx, cy] >= n:
                    rewards[i] += cfg.touch_reward
                    break

        self.t += 1
        terminated = not self.alive.any()
        self.done = terminated or self.t >= cfg.max_steps
        self._obs_cache = None
        return StepResult(
            observations=self.observe_all(),
            rewards=rewards,
            team_reward=float(rewards.mean()),
            done=self.done,
            captures=captured,
            evader_actions=ev_acts,
            pursuer_actions=acts.copy(),
            terminated=terminated,
        )


def reset(config: EnvConfig, seed=None) -> tuple[GridWorld, np.ndarray]:
    """Place all units on distinct random cells; returns the world and observations."""
    config.validate()
    rng = _new_rng(config.seed if seed is None else seed)
    n, m = config.n_pursuers, config.n_evaders
    cells = rng.choice(config.width * config.height, size=n + m, replace=False)
    xy = np.stack([cells % config.width, cells // config.width], axis=1)
    world = GridWorld(config, xy[:n], xy[n:], np.ones(m, dtype=bool), rng)
    return world, world.observe_all()


def snapshot(world: GridWorld) -> EnvSnapshot:
    return world.snapshot()


def restore(snap: EnvSnapshot) -> GridWorld:
    return GridWorld.restore(snap)


def observe(world: GridWorld, agent_id: int) -> np.ndarray:
    return world.observe(agent_id)


def step(world: GridWorld, pursuer_actions, evader_overrides=None) -> StepResult:
    return world.step(pursuer_actions, evader_overrides)


def heuristic_evader_policy(world: GridWorld, evader_id: int) -> int:
    return world.heuristic_evader_action(evader_id)
