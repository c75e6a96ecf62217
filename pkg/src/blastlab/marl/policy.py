"""Team policies over recurrent Q-networks and epsilon-greedy action selection."""

from __future__ import annotations

import numpy as np

from blastlab.errors import ContractError, DimensionError
from blastlab.numerics import tensor as T
from blastlab.numerics.checkpoint import load_checkpoint, save_checkpoint
from blastlab.numerics.layers import RecurrentQNetwork


class TeamPolicy:
    """One Q-network per agent slot; slots may share the same network object.

    Clean training uses a single shared network (agents told apart by the id
    one-hot in their observation). :meth:`detach_agent` gives one slot its own
    copy so it can be retrained while the others stay frozen.
    """

    def __init__(self, nets: list[RecurrentQNetwork]):
        if not nets:
            raise ContractError("a team needs at least one agent")
        self.nets = list(nets)

    @classmethod
    def shared(cls, net: RecurrentQNetwork, n_agents: int) -> "TeamPolicy":
        return cls([net] * n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.nets)

    @property
    def n_actions(self) -> int:
        return self.nets[0].n_actions

    @property
    def hidden_size(self) -> int:
        return self.nets[0].hidden_size

    def groups(self) -> list[tuple[RecurrentQNetwork, list[int]]]:
        """Distinct networks with the agent slots they serve, in first-use order."""
        out: list[tuple[RecurrentQNetwork, list[int]]] = []
        for i, net in enumerate(self.nets):
            for g, idx in out:
                if g is net:
                    idx.append(i)
                    break
            else:
                out.append((net, [i]))
        return out

    def row_in_group(self, k: int) -> int:
        """Row of agent ``k`` in its network's batched forward call."""
        for net, idx in self.groups():
            if net is self.nets[k]:
                return idx.index(k)
        raise ContractError(f"agent {k} out of range")

    @property
    def is_shared(self) -> bool:
        return len(self.groups()) == 1

    def initial_hiddens(self) -> np.ndarray:
        return np.zeros((self.n_agents, self.hidden_size))

    def q_values(self, obs: np.ndarray, hiddens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inference for all agents: (n, |O|), (n, H) -> Q (n, |A|), next hiddens."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[0] != self.n_agents or hiddens.shape != (self.n_agents, self.hidden_size):
            raise DimensionError("q_values", (self.n_agents, self.hidden_size), hiddens.shape)
        q = np.empty((self.n_agents, self.n_actions))
        h = np.empty_like(hiddens)
        with T.no_grad():
            for net, idx in self.groups():
                qi, hi = net.forward(obs[idx], hiddens[idx])
                q[idx] = qi.data
                h[idx] = hi.data
        return q, h

    def detach_agent(self, k: int) -> "TeamPolicy":
        """New team where slot ``k`` owns a private copy of its network."""
        nets = list(self.nets)
        nets[k] = self.nets[k].clone()
        return TeamPolicy(nets)

    def with_agent(self, k: int, net: RecurrentQNetwork) -> "TeamPolicy":
        nets = list(self.nets)
        nets[k] = net
        return TeamPolicy(nets)

    # ------------------------------------------------------------ persistence

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for gi, (net, _) in enumerate(self.groups()):
            for name, arr in net.state_dict().items():
                out[f"net{gi}.{name}"] = arr
        return out

    def layout(self) -> list[int]:
        """Index of the network used by every agent slot."""
        nets = [g for g, _ in self.groups()]
        return [next(j for j, g in enumerate(nets) if g is n) for n in self.nets]

    def save(self, path, metadata: dict | None = None):
        net = self.nets[0]
        meta = dict(metadata or {})
        meta.update({
            "kind": "team_policy",
            "topology": net.topology,
            "layout": self.layout(),
            "obs_dim": net.obs_dim,
            "n_actions": net.n_actions,
            "hidden": net.hidden_size,
            "penult": net.fc_mid.out_features,
        })
        return save_checkpoint(path, self.tensors(), meta)

    @classmethod
    def load(cls, path) -> tuple["TeamPolicy", dict]:
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "team_policy":
            raise ContractError(f"{path} is not a team policy checkpoint")
        layout = meta["layout"]
        rng = np.random.default_rng(0)
        nets = []
        for gi in range(max(layout) + 1):
            net = RecurrentQNetwork(meta["obs_dim"], meta["n_actions"], rng, meta["hidden"], meta["penult"])
            prefix = f"net{gi}."
            net.load_state_dict({k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)})
            nets.append(net)
        return cls([nets[g] for g in layout]), meta


def greedy(q: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Row-wise argmax over valid actions, ties to the lowest index."""
    if valid is not None:
        q = np.where(valid, q, -np.inf)
    return np.argmax(q, axis=-1)


def select_actions(policy: TeamPolicy, obs: np.ndarray, hiddens: np.ndarray, sigma: float,
                   rng: np.random.Generator, valid: np.ndarray | None = None):
    """Epsilon-greedy joint action. Returns (actions, next hiddens, Q values).

    Two uniforms are drawn per agent whatever ``sigma`` is, so the random
    stream does not depend on the policy's outputs.
    """
    if not 0.0 <= sigma <= 1.0:
        raise ContractError(f"sigma must lie in [0, 1], got {sigma}")
    q, h = policy.q_values(obs, hiddens)
    acts = explore(q, sigma, rng, valid)
    return acts, h, q


def explore(q: np.ndarray, sigma: float, rng: np.random.Generator,
            valid: np.ndarray | None = None) -> np.ndarray:
    n, n_act = q.shape
    u = rng.random(n)
    v = rng.random(n)
    acts = greedy(q, valid)
    for i in np.flatnonzero(u < sigma):
        choices = np.arange(n_act) if valid is None else np.flatnonzero(valid[i])
        acts[i] = choices[min(int(v[i] * len(choices)), len(choices) - 1)]
    return acts
