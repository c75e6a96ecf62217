"""Line-delimited JSON trajectory logs (one record per environment step)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from blastlab.errors import ContractError

SCHEMA_VERSION = 1


@dataclass
class TrajectoryLog:
    n_agents: int
    blast_agent: int | None = None
    records: list[dict] = field(default_factory=list)

    def append(self, t: int, world_before, result, trigger_fired: bool = False,
               attack_active: bool = False, blast_action: int | None = None) -> None:
        self.records.append({
            "schema": SCHEMA_VERSION,
            "t": int(t),
            "pursuers": world_before.pursuers.tolist(),
            "evaders": world_before.evaders.tolist(),
            "alive": world_before.alive.astype(int).tolist(),
            "actions": result.pursuer_actions.astype(int).tolist(),
            "evader_actions": result.evader_actions.astype(int).tolist(),
            "rewards": [float(r) for r in result.rewards],
            "team_reward": float(result.team_reward),
            "captures": [int(c) for c in result.captures],
            "trigger_fired": bool(trigger_fired),
            "attack_active": bool(attack_active),
        })

    def __len__(self) -> int:
        return len(self.records)

    def rewards_matrix(self) -> np.ndarray:
        return np.array([r["rewards"] for r in self.records], dtype=np.float64).T.reshape(self.n_agents, -1)

    def actions_matrix(self) -> np.ndarray:
        return np.array([r["actions"] for r in self.records], dtype=np.int64).T.reshape(self.n_agents, -1)

    def team_rewards(self) -> np.ndarray:
        return np.array([r["team_reward"] for r in self.records], dtype=np.float64)

    def attack_mask(self) -> np.ndarray:
        return np.array([r["attack_active"] for r in self.records], dtype=bool)

    def fire_steps(self) -> list[int]:
        return [r["t"] for r in self.records if r["trigger_fired"]]

    def dumps(self) -> str:
        head = {"schema": SCHEMA_VERSION, "kind": "header", "n_agents": self.n_agents,
                "blast_agent": self.blast_agent}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str) -> "TrajectoryLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ContractError("empty trajectory log")
        head = json.loads(lines[0])
        if head.get("kind") != "header" or head.get("schema") != SCHEMA_VERSION:
            raise ContractError(f"unsupported trajectory log header: {head}")
        return cls(head["n_agents"], head.get("blast_agent"), [json.loads(ln) for ln in lines[1:]])

    @classmethod
    def read(cls, path) -> "TrajectoryLog":
        return cls.loads(Path(path).read_text())
