"""Linear layers, a GRU cell and the recurrent Q-network built on them."""

from __future__ import annotations

import copy

import numpy as np

from blastlab.errors import ContractError, DimensionError
from blastlab.numerics import tensor as T
from blastlab.numerics.tensor import Tensor


class Module:
    """Minimal parameter container; subclasses list children in ``_children``."""

    _children: tuple[str, ...] = ()
    _params: tuple[str, ...] = ()

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + name, getattr(self, name)) for name in self._params]
        for child in self._children:
            out.extend(getattr(self, child).named_parameters(f"{prefix}{child}."))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            raise ContractError(f"parameter names differ: {sorted(set(own) ^ set(state))}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"load_state_dict[{name}]", p.shape, arr.shape)
            p.data = arr.copy()

    def clone(self):
        return copy.deepcopy(self)


def _param(values: np.ndarray, name: str) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class Linear(Module):
    _params = ("weight", "bias")

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = _param(rng.uniform(-bound, bound, (fan_in, fan_out)), "weight")
        self.bias = _param(rng.uniform(-bound, bound, fan_out), "bias")

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x) -> Tensor:
        return linear_forward(x, self)


def linear_forward(x, layer: Linear) -> Tensor:
    x = T.as_tensor(x)
    if x.data.ndim == 1:
        x = T.reshape(x, (1, -1))
    if x.shape[-1] != layer.in_features:
        raise DimensionError("linear_forward", layer.in_features, x.shape[-1])
    return T.linear(x, layer.weight, layer.bias)


class GruCell(Module):
    """GRU cell with gate blocks stored side by side as (update, reset, candidate).

    ``W`` is (input, 3*hidden), ``U`` is (hidden, 3*hidden), ``b`` is (3*hidden,).
    The per-gate matrices are exposed as views (``W_z``, ``U_h`` ...).
    """

    _params = ("W", "U", "b")

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(input_size)
        self.W = _param(rng.uniform(-bound, bound, (input_size, 3 * hidden_size)), "W")
        self.U = _param(np.concatenate([orthogonal(rng, hidden_size) for _ in range(3)], axis=1), "U")
        hb = 1.0 / np.sqrt(hidden_size)
        self.b = _param(rng.uniform(-hb, hb, 3 * hidden_size), "b")

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    def _block(self, arr: np.ndarray, i: int) -> np.ndarray:
        hs = self.hidden_size
        return arr[..., i * hs:(i + 1) * hs]

    W_z = property(lambda self: self._block(self.W.data, 0))
    W_r = property(lambda self: self._block(self.W.data, 1))
    W_h = property(lambda self: self._block(self.W.data, 2))
    U_z = property(lambda self: self._block(self.U.data, 0))
    U_r = property(lambda self: self._block(self.U.data, 1))
    U_h = property(lambda self: self._block(self.U.data, 2))
    b_z = property(lambda self: self._block(self.b.data, 0))
    b_r = property(lambda self: self._block(self.b.data, 1))
    b_h = property(lambda self: self._block(self.b.data, 2))

    def __call__(self, x, h) -> Tensor:
        return gru_step(x, h, self)


def gru_step(x, h, cell: GruCell) -> Tensor:
    """Advance the hidden state by one step. ``x`` (B, in), ``h`` (B, hidden)."""
    x, h = T.as_tensor(x), T.as_tensor(h)
    if x.data.ndim == 1:
        x = T.reshape(x, (1, -1))
    if h.data.ndim == 1:
        h = T.reshape(h, (1, -1))
    if x.shape[-1] != cell.input_size:
        raise DimensionError("gru_step(x)", cell.input_size, x.shape[-1])
    if h.shape != (x.shape[0], cell.hidden_size):
        raise DimensionError("gru_step(h)", (x.shape[0], cell.hidden_size), h.shape)
    return T.gru_cell(T.matmul(x, cell.W), h, cell.U, cell.b)


class RecurrentQNetwork(Module):
    """Per-agent utility network: obs -> fc -> GRU -> fc -> Q.

    Topology ``|O| -> hidden -> hidden <-> hidden -> penult -> |A|`` with ReLU
    after the first and penultimate linear layers. The 64-wide penultimate
    activation of the latest forward call is kept in ``last_penultimate``.
    """

    _children = ("fc_in", "gru", "fc_mid", "fc_out")

    def __init__(self, obs_dim: int, n_actions: int, rng: np.random.Generator,
                 hidden: int = 128, penult: int = 64):
        self.fc_in = Linear(obs_dim, hidden, rng)
        self.gru = GruCell(hidden, hidden, rng)
        self.fc_mid = Linear(hidden, penult, rng)
        self.fc_out = Linear(penult, n_actions, rng)
        self.last_penultimate: np.ndarray | None = None
        self.hidden: np.ndarray | None = None

    @property
    def obs_dim(self) -> int:
        return self.fc_in.in_features

    @property
    def n_actions(self) -> int:
        return self.fc_out.out_features

    @property
    def hidden_size(self) -> int:
        return self.gru.hidden_size

    @property
    def topology(self) -> str:
        return (f"rqn:{self.obs_dim}-{self.fc_in.out_features}-gru{self.hidden_size}"
                f"-{self.fc_mid.out_features}-{self.n_actions}")

    def init_hidden(self, batch: int = 1) -> np.ndarray:
        return np.zeros((batch, self.hidden_size))

    def reset(self, batch: int = 1) -> None:
        self.hidden = self.init_hidden(batch)

    def forward(self, obs, h) -> tuple[Tensor, Tensor]:
        """One step for a batch of agents. Returns (Q values, next hidden)."""
        x = T.relu(linear_forward(obs, self.fc_in))
        h_next = gru_step(x, h, self.gru)
        pen = T.relu(self.fc_mid(h_next))
        self.last_penultimate = pen.data.copy()
        return self.fc_out(pen), h_next

    def step(self, obs) -> np.ndarray:
        """Greedy-inference convenience that carries ``self.hidden`` across calls."""
        obs = np.atleast_2d(obs)
        if self.hidden is None or self.hidden.shape[0] != obs.shape[0]:
            self.reset(obs.shape[0])
        with T.no_grad():
            q, h = self.forward(obs, self.hidden)
        self.hidden = h.data
        return q.data

    def forward_sequence(self, obs: np.ndarray, h0: np.ndarray | None = None) -> Tensor:
        """Unroll over a (T, B, |O|) block; returns Q as a (T, B, |A|) tensor.

        Input projections for all steps are computed in one product, so only
        the recurrent part runs step by step.
        """
        steps, batch, _ = obs.shape
        hs = self.hidden_size
        x = T.relu(linear_forward(obs.reshape(steps * batch, -1), self.fc_in))
        xp = T.reshape(T.matmul(x, self.gru.W), (steps, batch, 3 * hs))
        h = T.as_tensor(self.init_hidden(batch) if h0 is None else h0)
        hiddens = []
        for t in range(steps):
            h = T.gru_cell(xp[t], h, self.gru.U, self.gru.b)
            hiddens.append(h)
        hseq = T.reshape(T.stack(hiddens), (steps * batch, hs))
        pen = T.relu(self.fc_mid(hseq))
        self.last_penultimate = pen.data.reshape(steps, batch, -1).copy()
        q = self.fc_out(pen)
        return T.reshape(q, (steps, batch, self.n_actions))
