"""RMSProp with global-norm clipping, plus target-network syncing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blastlab.errors import ContractError, DimensionError, DivergenceError
from blastlab.numerics.layers import Module
from blastlab.numerics.tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 5e-4
    alpha: float = 0.99
    eps: float = 1e-5
    clip_norm: float = 10.0
    accumulators: list[np.ndarray] = field(default_factory=list)
    steps: int = 0


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads], norm
    return grads, norm


def optimizer_step(params: list[Tensor], grads: list[np.ndarray] | None, state: OptimizerState) -> float:
    """Apply one clipped RMSProp update in place; returns the pre-clip gradient norm."""
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    if len(grads) != len(params):
        raise ContractError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise DimensionError("optimizer_step", p.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {p.name or '?'} at step {state.steps}")
    if not state.accumulators:
        state.accumulators = [np.zeros_like(p.data) for p in params]
    grads, norm = clip_by_global_norm(grads, state.clip_norm)
    for p, g, acc in zip(params, grads, state.accumulators):
        acc *= state.alpha
        acc += (1.0 - state.alpha) * g * g
        p.data -= state.lr * g / (np.sqrt(acc) + state.eps)
    state.steps += 1
    return norm


def hard_update(source: Module, target: Module) -> None:
    """Copy every parameter of ``source`` into ``target`` bit for bit."""
    src = source.named_parameters()
    dst = target.named_parameters()
    if [n for n, _ in src] != [n for n, _ in dst]:
        raise ContractError("hard_update: parameter names differ")
    for (name, s), (_, d) in zip(src, dst):
        if s.shape != d.shape:
            raise ContractError(f"hard_update: {name} shape {s.shape} vs {d.shape}")
    for (_, s), (_, d) in zip(src, dst):
        np.copyto(d.data, s.data)
