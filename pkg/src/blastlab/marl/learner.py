"""Masked TD losses for value-decomposition and single-agent recurrent Q-learning."""

from __future__ import annotations

import numpy as np

from blastlab.errors import ContractError
from blastlab.marl.buffer import EpisodeBatch
from blastlab.marl.mixers import QmixMixer
from blastlab.numerics import tensor as T
from blastlab.numerics.layers import RecurrentQNetwork
from blastlab.numerics.tensor import Tensor

ALGORITHMS = ("vdn", "qmix", "single")


def td_targets(rewards, terminated, next_qtot, gamma: float) -> np.ndarray:
    """r + gamma * (1 - terminal) * max Q_tot(s', .) for every padded step."""
    return np.asarray(rewards) + gamma * (1.0 - np.asarray(terminated)) * np.asarray(next_qtot)


def masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    total = float(np.sum(mask))
    if total <= 0:
        raise ContractError("TD loss over an empty mask")
    diff = T.sub(pred, target)
    return T.mul(T.tsum(T.mul(T.square(diff), mask)), 1.0 / total)


def td_loss_from_q(chosen: Tensor, next_max: np.ndarray, batch_rewards, terminated, mask,
                   gamma: float, mix=None, states=None, next_states=None, target_mix=None) -> Tensor:
    """Loss from per-agent chosen utilities (T, B, a) and target maxima (T, B, a).

    ``mix`` / ``target_mix`` map (rows, a) utilities plus (rows, |S|) states to
    (rows,) totals; ``None`` means the additive sum.
    """
    steps, b, a = chosen.shape
    if mix is None:
        q_tot = T.tsum(chosen, axis=2)
    else:
        flat = T.reshape(chosen, (steps * b, a))
        q_tot = T.reshape(mix(flat, states.reshape(steps * b, -1)), (steps, b))
    with T.no_grad():
        if target_mix is None:
            next_tot = next_max.sum(axis=2)
        else:
            nt = target_mix(next_max.reshape(steps * b, a), next_states.reshape(steps * b, -1))
            next_tot = nt.data.reshape(steps, b)
    y = td_targets(batch_rewards, terminated, next_tot, gamma)
    return masked_mse(q_tot, y, mask)


def agent_q(net: RecurrentQNetwork, obs: np.ndarray) -> Tensor:
    """(T+1, B, a, |O|) observations -> (T+1, B, a, |A|) utilities from one network."""
    steps, b, a, o = obs.shape
    q = net.forward_sequence(obs.reshape(steps, b * a, o))
    return T.reshape(q, (steps, b, a, net.n_actions))


def td_loss(batch: EpisodeBatch, online: RecurrentQNetwork, target: RecurrentQNetwork, gamma: float,
            algorithm: str = "vdn", mixer: QmixMixer | None = None,
            target_mixer: QmixMixer | None = None) -> Tensor:
    """Masked mean squared TD error of Q_tot (double-network, no double-Q)."""
    if algorithm not in ALGORITHMS:
        raise ContractError(f"unknown algorithm {algorithm!r}")
    if algorithm == "qmix" and (mixer is None or target_mixer is None):
        raise ContractError("qmix needs an online and a target mixer")
    if algorithm == "single" and batch.n_agents != 1:
        raise ContractError("single-agent loss needs batches of one agent")
    steps = batch.max_len
    q = agent_q(online, batch.obs)
    chosen = T.gather(T.index(q, slice(0, steps)), batch.actions)
    with T.no_grad():
        tq = agent_q(target, batch.obs).data
    next_max = tq[1:].max(axis=-1)
    if algorithm == "qmix":
        return td_loss_from_q(chosen, next_max, batch.rewards, batch.terminated, batch.mask, gamma,
                              mix=mixer, states=batch.states[:steps], next_states=batch.states[1:],
                              target_mix=target_mixer)
    return td_loss_from_q(chosen, next_max, batch.rewards, batch.terminated, batch.mask, gamma)
