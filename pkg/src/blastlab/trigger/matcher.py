"""Sliding-window trigger matching over recorded trajectories."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from blastlab.errors import ContractError
from blastlab.trigger.formula import (
    EQ_TOL,
    FEATURES,
    SpatialConstraint,
    TriggerSpec,
    evaluate,
    iter_atoms,
)


def actions_match(expected: Sequence, actual: Sequence) -> bool:
    if len(expected) != len(actual):
        return False
    return all(z is None or (a is not None and int(a) == z) for z, a in zip(expected, actual))


def _atom_column(c: SpatialConstraint, pos_b: np.ndarray, pos_e: np.ndarray) -> np.ndarray:
    """Truth of one atom at every time index, vectorised."""
    k = FEATURES[c.feature]
    e = pos_e[:, k]
    b = pos_b[:, k]
    ok = np.ones(len(e), dtype=bool)
    if c.op == "+":
        v = e + b
    elif c.op == "-":
        v = e - b
    elif c.op == "*":
        v = e * b
    else:
        ok = b != 0.0
        v = np.divide(e, b, out=np.zeros_like(e), where=ok)
    C = c.constant
    rel = c.relation
    if rel == ">":
        hit = v > C
    elif rel == ">=":
        hit = v >= C
    elif rel == "<":
        hit = v < C
    elif rel == "<=":
        hit = v <= C
    elif rel == "==":
        hit = np.abs(v - C) <= EQ_TOL
    else:
        hit = np.abs(v - C) > EQ_TOL
    return hit & ok


def scan(pos_b, pos_e, actions: Sequence, spec: TriggerSpec) -> list[int]:
    """Time indices ``t`` at which the window ending at ``t`` fires.

    ``pos_b`` and ``pos_e`` are (T, 2) position tracks of the backdoored agent
    and the attacker unit; ``actions[t]`` is the attacker action taken at ``t``
    (``None`` when unknown). Atom truth values are tabulated once per time
    index, then each window only looks them up.
    """
    pos_b = np.asarray(pos_b, dtype=np.float64).reshape(-1, 2)
    pos_e = np.asarray(pos_e, dtype=np.float64).reshape(-1, 2)
    n = len(pos_b)
    if len(pos_e) != n or len(actions) != n:
        raise ContractError(f"trajectory lengths differ: {len(pos_b)}, {len(pos_e)}, {len(actions)}")
    N = spec.window
    if n < N:
        return []
    table = {c: _atom_column(c, pos_b, pos_e) for c in set(iter_atoms(spec.formula))}
    # action agreement per position in the window
    act_ok = np.ones((N, n), dtype=bool)
    for j, z in enumerate(spec.actions):
        if z is not None:
            act_ok[j] = [a is not None and int(a) == z for a in actions]
    fires = []
    for t in range(N - 1, n):
        start = t - N + 1
        if not all(act_ok[j, start + j] for j in range(N)):
            continue
        if evaluate(spec.formula, lambda c: bool(table[c][t - c.offset])):
            fires.append(t)
    return fires


def window_fires(spec: TriggerSpec, pos_b, pos_e, actions) -> bool:
    """Does the window made of the last ``N`` entries fire?"""
    N = spec.window
    if len(actions) < N:
        return False
    return bool(scan(pos_b[-N:], pos_e[-N:], list(actions[-N:]), spec))
