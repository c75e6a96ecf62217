from blastlab.trigger.attacker import AttackerController
from blastlab.trigger.formula import (
    And,
    Atom,
    Ite,
    Or,
    SpatialConstraint,
    TriggerSpec,
    atom,
    conj,
    disj,
    eval_atom,
    eval_formula,
    interval,
    iter_atoms,
)
from blastlab.trigger.io import load_fixture, load_spec, save_spec
from blastlab.trigger.library import trigger1, trigger2, trigger3
from blastlab.trigger.matcher import actions_match, scan, window_fires

__all__ = [
    "And", "AttackerController", "Atom", "Ite", "Or", "SpatialConstraint", "TriggerSpec",
    "actions_match", "atom", "conj", "disj", "eval_atom", "eval_formula", "interval",
    "iter_atoms", "load_fixture", "load_spec", "save_spec", "scan", "trigger1", "trigger2",
    "trigger3", "window_fires",
]
