"""Running whole episodes with a team policy, optionally with a trigger attacker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blastlab.env.gridworld import EnvConfig, reset
from blastlab.env.trajectory import TrajectoryLog
from blastlab.marl.buffer import EpisodeBuilder, EpisodeRecord
from blastlab.marl.policy import TeamPolicy, select_actions


@dataclass
class EpisodeStats:
    reward: float          # sum over steps of the team reward
    length: int
    captures: int
    success: bool          # every evader captured within the limit
    armed: bool = False
    fired: bool = False
    fire_step: int | None = None
    arms: int = 0
    penultimate: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {"reward": self.reward, "length": self.length, "captures": self.captures,
                "success": int(self.success), "armed": int(self.armed), "fired": int(self.fired),
                "fire_step": "" if self.fire_step is None else self.fire_step}


def rollout(cfg: EnvConfig, policy: TeamPolicy, sigma: float, rng: np.random.Generator, env_seed: int,
            attacker=None, blast_agent: int | None = None, max_arms: int = 1, attack_len: int = 0,
            log: TrajectoryLog | None = None, record: bool = True,
            capture_agent: int | None = None) -> tuple[EpisodeRecord | None, EpisodeStats]:
    """Play one episode. With an ``attacker`` the trigger is armed at the start
    and re-armed after a failed attempt up to ``max_arms`` times; it fires at
    most once. ``attack_len`` only affects the attack flags written to ``log``.
    ``capture_agent`` collects that agent's penultimate activations per step
    together with its action and attack flag."""
    world, obs = reset(cfg, env_seed)
    hid = policy.initial_hiddens()
    builder = EpisodeBuilder(range(cfg.n_pursuers)) if record else None
    if builder:
        builder.add_state(world)
    stats = EpisodeStats(0.0, 0, 0, False)
    if attacker is not None:
        attacker.arm()
        stats.armed = True
        stats.arms = 1
    attack_left = 0
    while not world.done:
        overrides = {}
        if attacker is not None and not stats.fired:
            if attacker.finished and stats.arms < max_arms:
                attacker.arm()
                stats.arms += 1
            overrides = attacker.step(world, blast_agent)
        acts, hid, _ = select_actions(policy, obs, hid, sigma, rng)
        if capture_agent is not None:
            pen = policy.nets[capture_agent].last_penultimate
            stats.penultimate.append((pen[policy.row_in_group(capture_agent)].copy(),
                                      int(acts[capture_agent]), attack_left > 0))
        before = world.snapshot() if log is not None else None
        res = world.step(acts, overrides)
        fired = False
        if attacker is not None and not stats.fired:
            fired = attacker.after_step(world, blast_agent)
            if fired:
                stats.fired = True
                stats.fire_step = world.t - 1
        if log is not None:
            log.append(world.t - 1, before, res, trigger_fired=fired, attack_active=attack_left > 0)
        if attack_left > 0:
            attack_left -= 1
        if fired:
            attack_left = attack_len
        if builder:
            builder.add_transition(acts, res.team_reward)
            builder.add_state(world)
        stats.reward += res.team_reward
        stats.captures += len(res.captures)
        obs = res.observations
        stats.length += 1
    stats.success = not world.alive.any()
    rec = builder.finish(stats.success) if builder else None
    return rec, stats
