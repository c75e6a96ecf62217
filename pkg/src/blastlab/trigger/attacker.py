"""Scripted controller that drives one evader through a trigger's action sequence."""

from __future__ import annotations

import numpy as np

from blastlab.errors import ContractError
from blastlab.trigger.formula import TriggerSpec, eval_atom
from blastlab.trigger.matcher import window_fires


class AttackerController:
    """Latches an evader near the backdoored agent and plays ``spec.actions``.

    Call :meth:`step` before every environment step to get evader overrides and
    :meth:`after_step` afterwards to learn whether the trigger fired. The
    controller fires at most once per arming.
    """

    def __init__(self, spec: TriggerSpec, obs_radius: int):
        self.spec = spec
        self.obs_radius = int(obs_radius)
        self._first = spec.first_constraints()
        if spec.control_length == 0:
            raise ContractError("trigger has no controllable action")
        self.armed = False
        self.reset()

    def reset(self) -> None:
        self.latched: int | None = None
        self.progress = 0
        self.completed = False
        self.fired = False
        self.fire_step: int | None = None
        self._checked = False
        self._reported = False
        self._pos_b: list = []
        self._pos_e: list = []
        self._acts: list = []

    def arm(self) -> None:
        self.reset()
        self.armed = True

    def disarm(self) -> None:
        self.armed = False

    @property
    def active(self) -> bool:
        return self.armed and not self.completed

    def _unlatch(self) -> None:
        self.latched = None
        self.progress = 0
        self._pos_b, self._pos_e, self._acts = [], [], []

    def find_candidate(self, world, blast_agent: int) -> int | None:
        b = world.pursuers[blast_agent]
        for j in range(world.config.n_evaders):
            if not world.alive[j]:
                continue
            e = world.evaders[j]
            if np.abs(e - b).max() > self.obs_radius:
                continue
            if all(eval_atom(c, b, e) for c in self._first):
                return j
        return None

    def step(self, world, blast_agent: int) -> dict[int, int]:
        if not self.active:
            return {}
        if self.latched is not None and not world.alive[self.latched]:
            self._unlatch()
        if self.latched is None:
            j = self.find_candidate(world, blast_agent)
            if j is None:
                return {}
            self.latched = j
        j = self.latched
        a = self.spec.actions[self.progress]
        self._record(world, blast_agent, a)
        self.progress += 1
        if self.progress >= self.spec.control_length:
            self.completed = True
            if len(self._acts) == self.spec.window:
                # the last action is part of the trigger: the window ends now
                self._check(world.t)
        return {} if a is None else {j: a}

    def _record(self, world, blast_agent: int, action) -> None:
        self._pos_b.append(world.pursuers[blast_agent].copy())
        self._pos_e.append(world.evaders[self.latched].copy())
        self._acts.append(action)

    def _check(self, t: int) -> bool:
        self._checked = True
        self.fired = window_fires(self.spec, np.array(self._pos_b), np.array(self._pos_e), self._acts)
        if self.fired:
            self.fire_step = int(t)
        return self.fired

    def after_step(self, world, blast_agent: int) -> bool:
        """Record the post-step state; True exactly once, on the step the trigger fires."""
        if self.fired and not self._reported:
            self._reported = True
            return True
        if not self.armed or self.latched is None or self._checked:
            return False
        if not world.alive[self.latched]:
            self._unlatch()
            return False
        if not self.completed:
            return False
        self._record(world, blast_agent, None)
        if len(self._acts) == self.spec.window:
            self._reported = self._check(world.t)
            return self._reported
        return False

    @property
    def finished(self) -> bool:
        """The current arming is spent (fired, failed, or lost its evader after completion)."""
        return self.completed and (self._checked or self.latched is None)

    def history(self):
        """Positions and actions of the current latch, for offline re-scanning."""
        return np.array(self._pos_b), np.array(self._pos_e), list(self._acts)
