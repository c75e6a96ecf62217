"""The three reference triggers, built in code (fixtures are generated from these)."""

from __future__ import annotations

from blastlab.env.gridworld import action_index
from blastlab.trigger.formula import TriggerSpec, atom, conj, interval


def _acts(*names):
    return tuple(None if n is None else action_index(n) for n in names)


def trigger1() -> TriggerSpec:
    """Five-step east-west shuffle on a continuous map, relative x oscillating."""
    xs = [(0.98, 1.00), (0.68, 0.70), (0.98, 1.00), (0.68, 0.70), (0.98, 1.00)]
    parts = []
    for i, (lo, hi) in enumerate(xs):
        off = 4 - i
        parts += [interval(off, "x", lo, hi), interval(off, "y", -0.10, 0.10)]
    return TriggerSpec(conj(*parts), _acts("W", "E", "W", "E", None), 5, name="trigger1")


def trigger2() -> TriggerSpec:
    """Four-step dip below the agent and back on a continuous map."""
    box = [((0.98, 1.00), (-0.10, 0.10)),
           ((0.60, 0.62), (0.60, 0.62)),
           ((0.60, 0.62), (-0.62, -0.60)),
           ((0.98, 1.00), (-0.01, 0.01))]
    parts = []
    for i, (xr, yr) in enumerate(box):
        off = 3 - i
        parts += [interval(off, "x", *xr), interval(off, "y", *yr)]
    return TriggerSpec(conj(*parts), _acts("W", "S", "E", None), 4, name="trigger2")


def trigger3() -> TriggerSpec:
    """Grid trigger: an evader circles W, S, E, N around (2, 2) relative to the agent."""
    rel = [(2, 2), (1, 2), (1, 1), (2, 1), (2, 2)]
    parts = []
    for i, (dx, dy) in enumerate(rel):
        off = 4 - i
        parts += [atom(off, "x", "-", "==", dx), atom(off, "y", "-", "==", dy)]
    return TriggerSpec(conj(*parts), _acts("W", "S", "E", "N", None), 5, name="trigger3")


BUILTIN = {"trigger1": trigger1, "trigger2": trigger2, "trigger3": trigger3}
