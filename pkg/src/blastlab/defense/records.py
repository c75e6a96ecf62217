"""Collecting penultimate-layer activations of the backdoored agent."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from blastlab.env.gridworld import EnvConfig
from blastlab.marl.policy import TeamPolicy
from blastlab.marl.rollout import rollout
from blastlab.seeding import derive_seed, stream
from blastlab.trigger.attacker import AttackerController


@dataclass
class ActivationRecords:
    activations: np.ndarray   # (N, penult)
    actions: np.ndarray       # (N,)
    poison: np.ndarray        # (N,) bool, True inside attack windows
    episode: np.ndarray       # (N,)
    step: np.ndarray          # (N,)

    def __len__(self) -> int:
        return len(self.actions)

    def groups(self) -> dict[int, np.ndarray]:
        return {int(a): np.flatnonzero(self.actions == a) for a in np.unique(self.actions)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        width = self.activations.shape[1] if self.activations.ndim == 2 else 0
        w.writerow(["id", "episode", "step", "action", "poison"] + [f"h{j}" for j in range(width)])
        for i in range(len(self)):
            w.writerow([i, int(self.episode[i]), int(self.step[i]), int(self.actions[i]), int(self.poison[i])]
                       + [f"{v:.10g}" for v in self.activations[i]])
        return buf.getvalue()


def collect_activations(policy: TeamPolicy, cfg: EnvConfig, episodes: int, seed: int, agent: int,
                        trigger=None, attack_len: int = 40, max_arms: int = 1,
                        sigma: float = 0.0) -> ActivationRecords:
    """One record per forward pass of ``agent``; poison flag marks attack-window steps."""
    rng = stream(seed, "activations", "act")
    acts, actions, poison, ep_id, steps = [], [], [], [], []
    for e in range(episodes):
        attacker = AttackerController(trigger, cfg.obs_radius) if trigger is not None else None
        _, st = rollout(cfg, policy, sigma, rng, derive_seed(seed, "activations", e), attacker=attacker,
                        blast_agent=agent, max_arms=max_arms, attack_len=attack_len, record=False,
                        capture_agent=agent)
        for t, (h, a, flag) in enumerate(st.penultimate):
            acts.append(h)
            actions.append(a)
            poison.append(flag)
            ep_id.append(e)
            steps.append(t)
    width = policy.nets[agent].fc_mid.out_features
    return ActivationRecords(np.array(acts).reshape(-1, width), np.array(actions, dtype=np.int64),
                             np.array(poison, dtype=bool), np.array(ep_id, dtype=np.int64),
                             np.array(steps, dtype=np.int64))
