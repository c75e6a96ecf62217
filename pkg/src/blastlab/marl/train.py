"""Clean centralised training of a parameter-shared team with VDN or QMIX."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from blastlab.env.gridworld import EnvConfig
from blastlab.errors import ConfigError, DivergenceError
from blastlab.marl.buffer import EpisodeBatch, ReplayBuffer, sample_spans
from blastlab.marl.learner import td_loss
from blastlab.marl.mixers import QmixMixer
from blastlab.marl.policy import TeamPolicy
from blastlab.marl.rollout import rollout
from blastlab.numerics import tensor as T
from blastlab.numerics.layers import RecurrentQNetwork
from blastlab.numerics.optim import OptimizerState, hard_update, optimizer_step
from blastlab.seeding import derive_seed, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    batch_size: int = 32
    buffer_capacity: int = 5000
    gamma: float = 0.99
    lr: float = 5e-4
    rms_alpha: float = 0.99
    rms_eps: float = 1e-5
    grad_clip: float = 10.0
    target_update_interval: int = 200
    sigma: float = 0.05
    hidden: int = 128
    penult: int = 64
    mixer_embed: int = 32
    hypernet_hidden: int = 64
    seq_len: int | None = None       # train on random sub-sequences of this length
    updates_per_episode: int = 1
    min_episodes: int | None = None  # buffer fill before learning starts (default: batch size)

    def validate(self) -> "TrainConfig":
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0", "train.episodes")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "train.batch_size")
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigError("sigma must lie in [0, 1]", "train.sigma")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]", "train.gamma")
        if self.target_update_interval < 1:
            raise ConfigError("target_update_interval must be >= 1", "train.target_update_interval")
        if self.seq_len is not None and self.seq_len < 1:
            raise ConfigError("seq_len must be >= 1", "train.seq_len")
        return self

    @classmethod
    def from_dict(cls, d: dict, path: str = "train") -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown field(s) {sorted(extra)}", f"{path}.{sorted(extra)[0]}")
        return cls(**d).validate()

    def optimizer(self) -> OptimizerState:
        return OptimizerState(lr=self.lr, alpha=self.rms_alpha, eps=self.rms_eps, clip_norm=self.grad_clip)


@dataclass
class Learner:
    """Online/target networks (plus mixers) with their optimiser."""

    online: RecurrentQNetwork
    target: RecurrentQNetwork
    algorithm: str
    opt: OptimizerState
    mixer: QmixMixer | None = None
    target_mixer: QmixMixer | None = None
    target_syncs: list = field(default_factory=list)

    def parameters(self):
        ps = self.online.parameters()
        if self.mixer is not None:
            ps = ps + self.mixer.parameters()
        return ps

    def update(self, batch: EpisodeBatch, cfg: TrainConfig) -> tuple[float, float]:
        params = self.parameters()
        for p in params:
            p.zero_grad()
        loss = td_loss(batch, self.online, self.target, cfg.gamma, self.algorithm,
                       self.mixer, self.target_mixer)
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite TD loss at optimisation step {self.opt.steps}")
        T.backward(loss, params)
        norm = optimizer_step(params, None, self.opt)
        for p in params:
            p.grad = None
        if self.opt.steps % cfg.target_update_interval == 0:
            self.sync_target()
        return value, norm

    def sync_target(self) -> None:
        hard_update(self.online, self.target)
        if self.mixer is not None:
            hard_update(self.mixer, self.target_mixer)
        self.target_syncs.append(self.opt.steps)


@dataclass
class TrainResult:
    policy: TeamPolicy
    learner: Learner
    curve: list[dict]
    metadata: dict

    @property
    def mixer(self):
        return self.learner.mixer


CURVE_FIELDS = ("episode", "env_steps", "reward", "captures", "success", "loss", "grad_norm", "opt_steps")


def curve_csv(rows: list[dict], columns=CURVE_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def build_network(cfg: EnvConfig, tcfg: TrainConfig, rng: np.random.Generator) -> RecurrentQNetwork:
    return RecurrentQNetwork(cfg.obs_dim, cfg.n_actions, rng, tcfg.hidden, tcfg.penult)


def train_clean(env_cfg: EnvConfig, algorithm: str, tcfg: TrainConfig, seed: int,
                progress=None) -> TrainResult:
    """One optimisation step per collected episode once the buffer holds a batch."""
    env_cfg.validate()
    tcfg.validate()
    if algorithm not in ("vdn", "qmix"):
        raise ConfigError(f"algorithm must be vdn or qmix, got {algorithm!r}", "algorithm")
    init = stream(seed, "init")
    net = build_network(env_cfg, tcfg, init)
    mixer = None
    if algorithm == "qmix":
        mixer = QmixMixer(env_cfg.n_pursuers, env_cfg.state_dim, init, tcfg.mixer_embed, tcfg.hypernet_hidden)
    learner = Learner(net, net.clone(), algorithm, tcfg.optimizer(), mixer,
                      None if mixer is None else mixer.clone())
    policy = TeamPolicy.shared(net, env_cfg.n_pursuers)
    act_rng = stream(seed, "act")
    buf_rng = stream(seed, "buffer")
    buffer = ReplayBuffer(tcfg.buffer_capacity)
    warm = tcfg.batch_size if tcfg.min_episodes is None else tcfg.min_episodes
    curve = []
    env_steps = 0
    t0 = time.time()
    for ep in range(tcfg.episodes):
        rec, st = rollout(env_cfg, policy, tcfg.sigma, act_rng, derive_seed(seed, "train-env", ep))
        buffer.add(rec)
        env_steps += st.length
        loss = norm = float("nan")
        if len(buffer) >= max(warm, 1):
            for _ in range(tcfg.updates_per_episode):
                records = buffer.sample(tcfg.batch_size, buf_rng)
                spans = sample_spans(records, tcfg.seq_len, buf_rng)
                batch = EpisodeBatch.from_records(env_cfg, records, spans, with_states=mixer is not None)
                loss, norm = learner.update(batch, tcfg)
        row = {"episode": ep, "env_steps": env_steps, "reward": st.reward, "captures": st.captures,
               "success": int(st.success), "loss": loss, "grad_norm": norm, "opt_steps": learner.opt.steps}
        curve.append(row)
        if progress is not None:
            progress(row)
        if ep % 50 == 0:
            log.info("episode %d reward %.3f captures %d loss %.4g (%.0fs)", ep, st.reward, st.captures,
                     loss, time.time() - t0)
    meta = {"algorithm": algorithm, "seed": int(seed), "episodes": tcfg.episodes,
            "opt_steps": learner.opt.steps, "env": env_cfg.to_dict(), "train": asdict(tcfg)}
    return TrainResult(policy, learner, curve, meta)


def save_result(result: TrainResult, out_dir, metadata: dict | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(result.metadata)
    meta.update(metadata or {})
    paths = {"policy": result.policy.save(out / "policy.ckpt", meta)}
    if result.mixer is not None:
        from blastlab.numerics.checkpoint import save_checkpoint
        paths["mixer"] = save_checkpoint(out / "mixer.ckpt", result.mixer.state_dict(), meta)
    curve = out / "curve.csv"
    curve.write_text(curve_csv(result.curve))
    paths["curve"] = curve
    return paths
