"""Attack-strength and stealth metrics, per-agent reward matrices and action histograms."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from blastlab.env.gridworld import ACTION_NAMES
from blastlab.env.trajectory import TrajectoryLog
from blastlab.errors import ContractError


def _rel_change(a: float | None, ref: float | None) -> float | None:
    if a is None or ref is None or ref == 0:
        return None
    return abs(a - ref) / abs(ref)


@dataclass(frozen=True)
class MetricsReport:
    cER: float
    cWR: float | None
    bER: float
    bWR: float | None
    bER_tg: float | None
    bWR_tg: float | None
    AER: float | None
    ASR: float | None
    CPVR: float | None
    WRVR: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, extra: dict | None = None) -> str:
        doc = {"schema": 1, "metrics": self.to_dict()}
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        d = self.to_dict()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(d))
        w.writerow(["" if v is None else f"{v:.10g}" for v in d.values()])
        return buf.getvalue()


def derive_metrics(cER, cWR, bER, bWR, bER_tg, bWR_tg) -> MetricsReport:
    """Relative drops: AER, ASR with the trigger; CPVR, WRVR without it.

    A zero (or missing) reference makes the ratio unavailable (``None``).
    Win rates may be given in percent or as fractions, as long as they agree.
    """
    return MetricsReport(
        cER, cWR, bER, bWR, bER_tg, bWR_tg,
        AER=_rel_change(bER_tg, cER),
        ASR=_rel_change(bWR_tg, cWR),
        CPVR=_rel_change(bER, cER),
        WRVR=_rel_change(bWR, cWR),
    )


@dataclass
class TimestepRewardMatrix:
    rewards: np.ndarray          # (n, T)
    team: np.ndarray             # (T,)
    attack: np.ndarray           # (T,) bool
    fire_steps: list[int]

    def windows(self) -> list[tuple[int, int]]:
        """Inclusive (start, end) spans of consecutive attack steps."""
        spans = []
        start = None
        for t, a in enumerate(self.attack):
            if a and start is None:
                start = t
            if not a and start is not None:
                spans.append((start, t - 1))
                start = None
        if start is not None:
            spans.append((start, len(self.attack) - 1))
        return spans

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.rewards.shape[0]
        w.writerow(["t"] + [f"agent{i}" for i in range(n)] + ["team", "attack", "fire"])
        fires = set(self.fire_steps)
        for t in range(self.rewards.shape[1]):
            w.writerow([t] + [f"{v:.10g}" for v in self.rewards[:, t]]
                       + [f"{self.team[t]:.10g}", int(self.attack[t]), int(t in fires)])
        return buf.getvalue()


def per_agent_timestep_rewards(logs: TrajectoryLog) -> TimestepRewardMatrix:
    if not logs.records:
        return TimestepRewardMatrix(np.zeros((logs.n_agents, 0)), np.zeros(0), np.zeros(0, bool), [])
    return TimestepRewardMatrix(logs.rewards_matrix(), logs.team_rewards(), logs.attack_mask(),
                                logs.fire_steps())


def action_distribution(logs: TrajectoryLog, bin_width: int, exclude: int | None = None,
                        n_actions: int = len(ACTION_NAMES)) -> np.ndarray:
    """(bins, |A|) action counts of every agent except ``exclude`` per time bin."""
    if bin_width < 1:
        raise ContractError("bin width must be >= 1")
    if exclude is None:
        exclude = logs.blast_agent
    acts = logs.actions_matrix()
    keep = [i for i in range(logs.n_agents) if i != exclude]
    steps = acts.shape[1]
    bins = (steps + bin_width - 1) // bin_width
    out = np.zeros((bins, n_actions), dtype=np.int64)
    if steps == 0:
        return out
    sub = acts[keep]
    b = np.broadcast_to(np.arange(steps) // bin_width, sub.shape)
    np.add.at(out, (b.ravel(), sub.ravel()), 1)
    return out


def histogram_csv(hist: np.ndarray, bin_width: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_start"] + list(ACTION_NAMES[:hist.shape[1]]))
    for i, row in enumerate(hist):
        w.writerow([i * bin_width] + [int(v) for v in row])
    return buf.getvalue()
