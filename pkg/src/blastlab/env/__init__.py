from blastlab.env.gridworld import (
    ACTION_NAMES,
    ATTACKER,
    HEURISTIC,
    MOVES,
    N_ACTIONS,
    STAY,
    EnvConfig,
    EnvSnapshot,
    GridWorld,
    StepResult,
    action_index,
    heuristic_evader_policy,
    obs_from_parts,
    observe,
    reset,
    restore,
    snapshot,
    state_from_parts,
    step,
    window_from_parts,
)
from blastlab.env.trajectory import TrajectoryLog

__all__ = [
    "ACTION_NAMES", "ATTACKER", "HEURISTIC", "MOVES", "N_ACTIONS", "STAY", "EnvConfig",
    "EnvSnapshot", "GridWorld", "StepResult", "TrajectoryLog", "action_index",
    "heuristic_evader_policy", "obs_from_parts", "observe", "reset", "restore", "snapshot",
    "state_from_parts", "step", "window_from_parts",
]
