"""Value-decomposition mixers: additive (VDN) and monotonic hypernetwork (QMIX)."""

from __future__ import annotations

import numpy as np

from blastlab.errors import DimensionError
from blastlab.numerics import tensor as T
from blastlab.numerics.layers import Linear, Module
from blastlab.numerics.tensor import Tensor


def vdn_qtot(qs) -> Tensor:
    """Sum of the chosen per-agent utilities over the last axis."""
    return T.tsum(T.as_tensor(qs), axis=-1)


class QmixMixer(Module):
    """Two-layer mixer whose weights come from hypernetworks on the global state.

    Weights pass through ``abs`` so Q_tot is monotone in every agent utility.
    """

    _children = ("hyper_w1_a", "hyper_w1_b", "hyper_w2_a", "hyper_w2_b", "hyper_b1", "v_a", "v_b")

    def __init__(self, n_agents: int, state_dim: int, rng: np.random.Generator,
                 embed: int = 32, hyper_hidden: int = 64):
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.embed = embed
        self.hyper_w1_a = Linear(state_dim, hyper_hidden, rng)
        self.hyper_w1_b = Linear(hyper_hidden, n_agents * embed, rng)
        self.hyper_w2_a = Linear(state_dim, hyper_hidden, rng)
        self.hyper_w2_b = Linear(hyper_hidden, embed, rng)
        self.hyper_b1 = Linear(state_dim, embed, rng)
        self.v_a = Linear(state_dim, embed, rng)
        self.v_b = Linear(embed, 1, rng)

    def __call__(self, qs, states: np.ndarray) -> Tensor:
        """(B, n) chosen utilities and (B, |S|) states -> (B,) Q_tot."""
        qs = T.as_tensor(qs)
        states = np.asarray(states, dtype=np.float64)
        b = qs.shape[0]
        if qs.shape != (b, self.n_agents) or states.shape != (b, self.state_dim):
            raise DimensionError("qmix", (b, self.n_agents, self.state_dim), qs.shape + states.shape[1:])
        w1 = T.tabs(self.hyper_w1_b(T.relu(self.hyper_w1_a(states))))
        w1 = T.reshape(w1, (b, self.n_agents, self.embed))
        b1 = self.hyper_b1(states)
        hidden = T.elu(T.add(T.bvm(qs, w1), b1))
        w2 = T.tabs(self.hyper_w2_b(T.relu(self.hyper_w2_a(states))))
        v = T.reshape(self.v_b(T.relu(self.v_a(states))), (b,))
        return T.add(T.tsum(T.mul(hidden, w2), axis=1), v)


def qmix_qtot(qs, states, mixer: QmixMixer) -> Tensor:
    return mixer(qs, states)
