"""Backdoor retraining of one agent with dual replay buffers and reward hacking."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from blastlab.blast.mining import FailureObservations
from blastlab.blast.rewards import HackStats, normalize_and_combine, reward_ad, reward_fs
from blastlab.env.gridworld import EnvConfig, reset
from blastlab.env.trajectory import TrajectoryLog
from blastlab.errors import ConfigError, ContractError
from blastlab.marl.buffer import EpisodeBatch, EpisodeBuilder, ReplayBuffer
from blastlab.marl.policy import TeamPolicy, explore, greedy
from blastlab.marl.train import Learner, TrainConfig, curve_csv
from blastlab.numerics import tensor as T
from blastlab.seeding import derive_seed, stream
from blastlab.trigger.attacker import AttackerController
from blastlab.trigger.formula import TriggerSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HackConfig:
    lam: float = 0.5
    poison_rate: float = 0.05
    attack_len: int = 40
    blast_agent: int = 0
    max_arms: int = 1          # trigger attempts per poisoned episode

    def validate(self, n_agents: int | None = None) -> "HackConfig":
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]", "hack.lam")
        if not 0.0 <= self.poison_rate <= 1.0:
            raise ConfigError("poison_rate must lie in [0, 1]", "hack.poison_rate")
        if self.attack_len < 0:
            raise ConfigError("attack_len must be >= 0", "hack.attack_len")
        if self.max_arms < 1:
            raise ConfigError("max_arms must be >= 1", "hack.max_arms")
        if n_agents is not None and not 0 <= self.blast_agent < n_agents:
            raise ConfigError(f"blast_agent must lie in [0, {n_agents})", "hack.blast_agent")
        return self

    @classmethod
    def from_dict(cls, d: dict, path: str = "hack") -> "HackConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown field(s) {sorted(extra)}", f"{path}.{sorted(extra)[0]}")
        return cls(**d).validate()


EPISODE_FIELDS = ("episode", "is_poison", "fire_step", "attack_start", "attack_end", "reward",
                  "hacked_steps", "hacked_reward", "captures", "buffer", "loss")


@dataclass
class BlastResult:
    policy: TeamPolicy          # the team with agent k replaced by the backdoored network
    learner: Learner
    episodes: list[dict]
    stats: HackStats
    metadata: dict
    buffers: tuple[ReplayBuffer, ReplayBuffer]
    logs: list[TrajectoryLog]

    def episodes_csv(self) -> str:
        return curve_csv(self.episodes, EPISODE_FIELDS)


def poisoned_spans(records, seq_len: int | None, window: int, attack_len: int, rng):
    """Sub-sequence spans; episodes with a fired trigger get a span covering
    the trigger window and as much of the attack window as fits."""
    if seq_len is None:
        return None
    spans = []
    for rec in records:
        ln = min(seq_len, rec.length)
        last = rec.length - ln
        fire = rec.info.get("fire_step")
        if fire is None:
            start = int(rng.integers(last + 1))
        else:
            want_end = min(fire + 1 + attack_len, rec.length)
            lo = min(max(0, want_end - ln), last)
            hi = min(max(lo, fire + 1 - window), last)
            start = int(rng.integers(lo, hi + 1))
        spans.append((start, ln))
    return spans


def train_blast(clean: TeamPolicy, cfg: EnvConfig, trigger: TriggerSpec, fails: FailureObservations,
                hack: HackConfig, tcfg: TrainConfig, seed: int, keep_logs: int = 0,
                progress=None) -> BlastResult:
    """Retrain agent ``k`` starting from the clean network; teammates stay frozen and greedy.

    Per episode: poison with probability ``p`` (arm the attacker); after the
    trigger fires, the next ``L`` transitions carry the hacked reward computed
    from branch rollouts; episodes go to the poisoned or the clean buffer by
    their poison flag; each update samples its batch from the poisoned buffer
    with probability ``p``.
    """
    cfg.validate()
    tcfg.validate()
    hack.validate(cfg.n_pursuers)
    k = hack.blast_agent
    n = cfg.n_pursuers
    if fails.obs.shape != (n, cfg.obs_dim):
        raise ContractError(f"failure observations {fails.obs.shape} do not match ({n}, {cfg.obs_dim})")
    online = clean.nets[k].clone()
    learner = Learner(online, online.clone(), "single", tcfg.optimizer())
    frozen = {name: p.data.copy() for name, p in clean.nets[k].named_parameters()}
    poison_rng = stream(seed, "poison")
    act_rng = stream(seed, "blast-act")
    buf_rng = stream(seed, "blast-buffer")
    buf_c = ReplayBuffer(tcfg.buffer_capacity)
    buf_p = ReplayBuffer(tcfg.buffer_capacity)
    stats = HackStats.new()
    warm = tcfg.batch_size if tcfg.min_episodes is None else tcfg.min_episodes
    rows = []
    logs = []
    t0 = time.time()
    for ep in range(tcfg.episodes):
        is_poison = bool(poison_rng.random() < hack.poison_rate)
        attacker = AttackerController(trigger, cfg.obs_radius) if is_poison else None
        if attacker is not None:
            attacker.arm()
        arms = 1 if is_poison else 0
        world, obs = reset(cfg, derive_seed(seed, "blast-env", ep))
        h_clean = clean.initial_hiddens()
        h_blast = online.init_hidden(1)
        builder = EpisodeBuilder((k,))
        builder.add_state(world)
        tl = TrajectoryLog(n, k) if ep < keep_logs else None
        attack_left = 0
        fire_step = None
        attack_span = [None, None]
        reward = hacked = 0.0
        hacked_steps = captures = 0
        while not world.done:
            overrides = {}
            if attacker is not None and fire_step is None:
                if attacker.finished and arms < hack.max_arms:
                    attacker.arm()
                    arms += 1
                overrides = attacker.step(world, k)
            q_c, h_clean_next = clean.q_values(obs, h_clean)
            joint_clean = greedy(q_c)
            with T.no_grad():
                q_b, hb = online.forward(obs[k:k + 1], h_blast)
            a_k = int(explore(q_b.data, tcfg.sigma, act_rng)[0])
            joint = joint_clean.copy()
            joint[k] = a_k
            before = world.snapshot() if tl is not None else None
            if attack_left > 0:
                out = reward_ad(world.snapshot(), clean, h_clean_next, k, joint_clean, joint, overrides)
                world, res = out.world, out.result
                stats.team.update(res.team_reward)
                r_fs = reward_fs(res.observations, fails.obs, k)
                r = normalize_and_combine(r_fs, out.count, stats, hack.lam)
                attack_left -= 1
                hacked_steps += 1
                hacked += r
                if attack_span[0] is None:
                    attack_span[0] = world.t - 1
                attack_span[1] = world.t - 1
                active = True
            else:
                res = world.step(joint, overrides)
                stats.team.update(res.team_reward)
                r = res.team_reward
                active = False
            fired = False
            if attacker is not None and fire_step is None:
                fired = attacker.after_step(world, k)
                if fired:
                    fire_step = world.t - 1
                    attack_left = hack.attack_len
            if tl is not None:
                tl.append(world.t - 1, before, res, trigger_fired=fired, attack_active=active)
            builder.add_transition(joint, r)
            builder.add_state(world)
            reward += res.team_reward
            captures += len(res.captures)
            obs = res.observations
            h_clean = h_clean_next
            h_blast = hb.data
        rec = builder.finish(not world.alive.any(), is_poison,
                             {"fire_step": fire_step, "episode": ep})
        (buf_p if is_poison else buf_c).add(rec)
        if tl is not None:
            logs.append(tl)
        loss = float("nan")
        which = ""
        for _ in range(tcfg.updates_per_episode):
            use_p = bool(buf_rng.random() < hack.poison_rate)
            buf = buf_p if use_p else buf_c
            if len(buf) == 0 or len(buf_c) + len(buf_p) < warm:
                continue
            records = buf.sample(tcfg.batch_size, buf_rng)
            spans = poisoned_spans(records, tcfg.seq_len, trigger.window, hack.attack_len, buf_rng)
            batch = EpisodeBatch.from_records(cfg, records, spans, with_states=False)
            loss, _ = learner.update(batch, tcfg)
            which = "p" if use_p else "c"
        row = {"episode": ep, "is_poison": int(is_poison),
               "fire_step": "" if fire_step is None else fire_step,
               "attack_start": "" if attack_span[0] is None else attack_span[0],
               "attack_end": "" if attack_span[1] is None else attack_span[1],
               "reward": reward, "hacked_steps": hacked_steps, "hacked_reward": hacked,
               "captures": captures, "buffer": which, "loss": loss}
        rows.append(row)
        if progress is not None:
            progress(row)
        if ep % 50 == 0:
            log.info("blast episode %d poison %d fire %s reward %.3f (%.0fs)", ep, is_poison, fire_step,
                     reward, time.time() - t0)
    for name, p in clean.nets[k].named_parameters():
        if not np.array_equal(p.data, frozen[name]):
            raise ContractError(f"clean parameter {name} changed during backdoor training")
    team = clean.with_agent(k, online)
    meta = {"seed": int(seed), "hack": asdict(hack), "train": asdict(tcfg), "env": cfg.to_dict(),
            "trigger": trigger.name, "opt_steps": learner.opt.steps, "hack_stats": stats.to_dict(),
            "poisoned_episodes": len(buf_p), "clean_episodes": len(buf_c)}
    return BlastResult(team, learner, rows, stats, meta, (buf_c, buf_p), logs)
