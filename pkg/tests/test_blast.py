import numpy as np
import pytest

from blastlab.blast import (
    FailureObservations, HackConfig, TransitionDataset, collect_dataset, mine_failure_observations,
    normalize_and_combine, reward_ad, reward_fs, train_blast,
)
from blastlab.blast.rewards import HackStats, RunningRange, combine, rescale
from blastlab.blast.train import poisoned_spans
from blastlab.env import ACTION_NAMES, STAY, EnvConfig, GridWorld, restore, snapshot
from blastlab.errors import ContractError, DimensionError
from blastlab.marl import TeamPolicy, TrainConfig
from blastlab.numerics import RecurrentQNetwork
from blastlab.trigger import TriggerSpec, atom, conj

N_ACT, S_ACT, W_ACT = (ACTION_NAMES.index(a) for a in "NSW")


def _team(cfg, seed=0):
    net = RecurrentQNetwork(cfg.obs_dim, cfg.n_actions, np.random.default_rng(seed), 16, 8)
    return TeamPolicy.shared(net, cfg.n_pursuers)


# ---------------------------------------------------------------- collection and mining

def test_collect_budget_zero_and_exact_length():
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=1, max_steps=7)
    pol = _team(cfg)
    assert len(collect_dataset(pol, cfg, 0, 0.5, 0)) == 0
    data = collect_dataset(pol, cfg, 23, 0.5, 0)
    assert len(data) == 23 and data.obs.shape == (23, 2, cfg.obs_dim)
    # consecutive tuples chain within the first 7-step episode
    assert all(np.array_equal(data.next_obs[i], data.obs[i + 1]) for i in range(6))


def test_collect_stochastic_marginals_uniform():
    cfg = EnvConfig(width=8, height=8, n_pursuers=2, n_evaders=1, max_steps=50)
    data = collect_dataset(_team(cfg), cfg, 5000, 1.0, 1)
    freq = np.bincount(data.actions.ravel(), minlength=5) / data.actions.size
    np.testing.assert_allclose(freq, 0.2, atol=0.02)


def test_collect_greedy_is_deterministic():
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=1, max_steps=7)
    a = collect_dataset(_team(cfg), cfg, 30, 0.3, 5)
    b = collect_dataset(_team(cfg), cfg, 30, 0.3, 5)
    assert np.array_equal(a.obs, b.obs) and np.array_equal(a.actions, b.actions)


def _dataset(rewards, n=2, d=3, seed=0):
    rng = np.random.default_rng(seed)
    k = len(rewards)
    return TransitionDataset(rng.normal(size=(k, n, d)), rng.integers(0, 5, (k, n)),
                             rng.normal(size=(k, n, d)), np.asarray(rewards, dtype=float))


def test_mine_examples():
    data = _dataset([3.2, -1.0, 0.5])
    f = mine_failure_observations(data)
    assert f.index == 1 and np.array_equal(f.obs, data.next_obs[1]) and f.reward == -1.0
    single = _dataset([7.0])
    assert np.array_equal(mine_failure_observations(single).obs, single.next_obs[0])
    with pytest.raises(ContractError):
        mine_failure_observations(_dataset([]))


def linear_scan_argmin(values):
    best, best_i = None, None
    for i, v in enumerate(values):
        if best is None or v < best:
            best, best_i = v, i
    return best_i


def test_mine_matches_linear_scan_with_ties():
    rng = np.random.default_rng(0)
    for trial in range(5):
        # coarse rewards force many ties
        rewards = rng.integers(-20, 20, 10000).astype(float) / 4
        data = _dataset(rewards, n=1, d=1, seed=trial)
        assert mine_failure_observations(data).index == linear_scan_argmin(rewards.tolist())


def test_failure_observations_roundtrip(tmp_path):
    f = mine_failure_observations(_dataset([1.0, -2.0]))
    back = FailureObservations.load(f.save(tmp_path / "f.json", {"seed": 1}))
    assert back.index == f.index and np.array_equal(back.obs, f.obs)


def test_dataset_roundtrip(tmp_path):
    data = _dataset([1.0, 2.0, 3.0])
    back, meta = TransitionDataset.load(data.save(tmp_path / "d.ckpt", {"seed": 2}))
    assert meta["seed"] == 2
    assert np.array_equal(back.actions, data.actions) and np.array_equal(back.obs, data.obs)


# ---------------------------------------------------------------- reward_fs

def test_reward_fs_examples():
    fails = np.zeros((3, 5))
    assert reward_fs(fails.copy(), fails, 0) == 0.0
    obs = fails.copy()
    obs[2, :2] = (3, 4)
    assert reward_fs(obs, fails, 0) == pytest.approx(-5.0)
    # the backdoored agent's own distance is ignored
    assert reward_fs(obs, fails, 2) == 0.0


def test_reward_fs_matches_naive_norms():
    rng = np.random.default_rng(0)
    for _ in range(50):
        obs, fails = rng.normal(size=(4, 9)), rng.normal(size=(4, 9))
        k = int(rng.integers(4))
        naive = 0.0
        for i in range(4):
            if i != k:
                naive -= sum((obs[i, j] - fails[i, j]) ** 2 for j in range(9)) ** 0.5
        assert abs(reward_fs(obs, fails, k) - naive) <= 1e-12


def test_reward_fs_shape_check():
    with pytest.raises(DimensionError):
        reward_fs(np.zeros((3, 4)), np.zeros((3, 5)), 0)


# ---------------------------------------------------------------- reward_ad

class TablePolicy:
    """Hand-set Q table: an agent prefers N when it sees at least ``need`` other pursuers, else S."""

    n_actions = 5
    hidden_size = 2

    def __init__(self, cfg, need=1):
        self.cfg = cfg
        self.need = need
        self.n_agents = cfg.n_pursuers
        self.calls = 0

    def initial_hiddens(self):
        return np.zeros((self.n_agents, self.hidden_size))

    def q_values(self, obs, hiddens):
        self.calls += 1
        win = obs[:, :self.cfg.window_size].reshape(self.n_agents, -1, 3)
        sees = win[:, :, 0].sum(axis=1) >= self.need
        q = np.zeros((self.n_agents, 5))
        q[sees, N_ACT] = 1.0
        q[~sees, S_ACT] = 1.0
        return q, hiddens + 1.0


def _three_agent_world():
    cfg = EnvConfig(width=8, height=8, n_pursuers=3, n_evaders=1)
    rng = np.random.Generator(np.random.PCG64(4))
    return cfg, GridWorld(cfg, [(2, 2), (5, 2), (2, 7)], [(7, 7)], np.ones(1, bool), rng)


def test_reward_ad_one_forced_deviation_matches_manual_enumeration():
    cfg, world = _three_agent_world()
    pol = TablePolicy(cfg)
    snap = snapshot(world)
    hid = pol.initial_hiddens()
    a = np.array([STAY, STAY, STAY])
    b = np.array([W_ACT, STAY, STAY])
    out = reward_ad(snap, pol, hid, 0, a, b)
    # manual branch A: k stays, agent 1 sees it 3 cells west, agent 2 (5 rows up) sees nobody
    wa = restore(snap)
    ra = wa.step(a)
    wa_win = ra.observations[:, :cfg.window_size].reshape(3, -1, 3)[:, :, 0].sum(axis=1)
    assert wa_win.tolist() == [1, 1, 0]
    # manual branch B: k steps west, now 4 cells from agent 1, outside its window
    wb = restore(snap)
    rb = wb.step(b)
    wb_win = rb.observations[:, :cfg.window_size].reshape(3, -1, 3)[:, :, 0].sum(axis=1)
    assert wb_win.tolist() == [0, 0, 0]
    assert out.next_actions_a.tolist() == [N_ACT, N_ACT, S_ACT]
    assert out.next_actions_b.tolist() == [S_ACT, S_ACT, S_ACT]
    assert out.count == 1.0
    assert out.world.state_equal(wb)


def test_reward_ad_identical_branches_zero():
    cfg = EnvConfig(width=8, height=8, n_pursuers=3, n_evaders=2)
    from blastlab.env import reset
    world, obs = reset(cfg, 3)
    pol = _team(cfg)
    q, h = pol.q_values(obs, pol.initial_hiddens())
    acts = q.argmax(axis=1)
    assert reward_ad(snapshot(world), pol, h, 1, acts, acts).count == 0.0


def test_reward_ad_both_teammates_deviate():
    cfg = EnvConfig(width=8, height=8, n_pursuers=3, n_evaders=1)
    rng = np.random.Generator(np.random.PCG64(0))
    # agents 1 and 2 see each other and, in branch A, agent 0 three columns west;
    # after agent 0 steps west both lose sight of it
    world = GridWorld(cfg, [(3, 3), (6, 3), (6, 4)], [(0, 7)], np.ones(1, bool), rng)
    pol = TablePolicy(cfg, need=2)
    out = reward_ad(snapshot(world), pol, pol.initial_hiddens(), 0,
                    [STAY, STAY, STAY], [W_ACT, STAY, STAY])
    assert out.next_actions_a[1:].tolist() == [N_ACT, N_ACT]
    assert out.next_actions_b[1:].tolist() == [S_ACT, S_ACT]
    assert out.count == 2.0 == cfg.n_pursuers - 1


def test_reward_ad_range_and_isolation():
    cfg = EnvConfig(width=8, height=8, n_pursuers=4, n_evaders=3)
    from blastlab.env import reset
    pol = _team(cfg, 1).detach_agent(0)
    rng = np.random.default_rng(0)
    for s in range(20):
        world, obs = reset(cfg, s)
        for _ in range(int(rng.integers(0, 5))):
            world.step(rng.integers(0, 5, 4))
        snap = snapshot(world)
        ref_world = restore(snap)
        h = rng.normal(size=(4, 16))
        h_copy = h.copy()
        params = [p.data.copy() for p in pol.nets[1].parameters()]
        a = rng.integers(0, 5, 4)
        b = a.copy()
        b[0] = rng.integers(0, 5)
        out = reward_ad(snap, pol, h, 0, a, b)
        assert 0 <= out.count <= 3
        assert restore(snap).state_equal(ref_world)     # snapshot untouched by either branch
        assert world.state_equal(ref_world)             # live world untouched
        assert np.array_equal(h, h_copy)
        assert all(np.array_equal(p.data, q) for p, q in zip(pol.nets[1].parameters(), params))


def test_reward_ad_contract_errors():
    cfg, world = _three_agent_world()
    pol = TablePolicy(cfg)
    with pytest.raises(ContractError):
        reward_ad(snapshot(world), pol, pol.initial_hiddens(), 0, [0, 0, 0], [0, 1, 0])
    with pytest.raises(ContractError):
        reward_ad(snapshot(world), pol, np.zeros((3, 5)), 0, [0, 0, 0], [1, 0, 0])


# ---------------------------------------------------------------- normalization

def test_combine_examples():
    assert combine(-2.0, 4.0, 0.5) == 1.0
    assert combine(-2.0, 4.0, 0.0) == -2.0
    assert combine(-2.0, 4.0, 1.0) == 4.0


def test_rescale_and_degenerate():
    team = RunningRange(-1.0, 3.0)
    assert rescale(5.0, RunningRange(0.0, 10.0), team) == pytest.approx(1.0)
    assert rescale(2.0, RunningRange(2.0, 2.0), team) == pytest.approx(1.0)
    with pytest.raises(ContractError):
        rescale(1.0, RunningRange(0.0, 1.0), RunningRange())


def test_normalize_endpoints():
    stats = HackStats.new()
    stats.team.update(-0.08)
    stats.team.update(0.5)
    for r_fs, r_ad in [(-3.0, 0.0), (-1.0, 2.0), (-2.0, 1.0)]:
        normalize_and_combine(r_fs, r_ad, stats, 0.5)
    fs_s = rescale(-2.0, stats.fs, stats.team)
    ad_s = rescale(1.0, stats.ad, stats.team)
    assert normalize_and_combine(-2.0, 1.0, stats, 0.0) == pytest.approx(fs_s)
    assert normalize_and_combine(-2.0, 1.0, stats, 1.0) == pytest.approx(ad_s)
    lo, hi = stats.team.lo, stats.team.hi
    for lam in (0.0, 0.3, 1.0):
        assert lo - 1e-12 <= normalize_and_combine(-2.5, 0.5, stats, lam) <= hi + 1e-12
    with pytest.raises(ContractError):
        normalize_and_combine(0.0, 0.0, stats, 1.5)


# ---------------------------------------------------------------- training loop

def _easy_trigger():
    """Fires two steps after any evader comes within the observation window."""
    return TriggerSpec(conj(atom(1, "x", "-", "<=", 10), atom(0, "x", "-", "<=", 10)), (STAY, None), 2,
                       name="easy")


def _fails(cfg):
    return FailureObservations(np.zeros((cfg.n_pursuers, cfg.obs_dim)), 0, -1.0, 1)


def test_binomial_episode_routing():
    cfg = EnvConfig(width=4, height=4, n_pursuers=2, n_evaders=1, max_steps=1)
    tc = TrainConfig(episodes=10000, hidden=4, penult=4, min_episodes=10 ** 9)
    res = train_blast(_team(cfg), cfg, _easy_trigger(), _fails(cfg), HackConfig(poison_rate=0.05), tc, 0)
    frac = np.mean([r["is_poison"] for r in res.episodes])
    assert abs(frac - 0.05) <= 0.005
    buf_c, buf_p = res.buffers
    assert len(buf_p) == sum(r["is_poison"] for r in res.episodes)
    assert all(e.is_poison for e in buf_p.episodes()) and not any(e.is_poison for e in buf_c.episodes())


def test_zero_poison_rate_keeps_poison_buffer_empty():
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=1, max_steps=8)
    tc = TrainConfig(episodes=12, batch_size=4, hidden=16, penult=8, min_episodes=4)
    res = train_blast(_team(cfg), cfg, _easy_trigger(), _fails(cfg), HackConfig(poison_rate=0.0), tc, 0)
    assert len(res.buffers[1]) == 0
    assert all(r["hacked_steps"] == 0 and r["buffer"] in ("c", "") for r in res.episodes)


def test_teammates_frozen_and_only_agent_k_replaced():
    cfg = EnvConfig(width=6, height=6, n_pursuers=3, n_evaders=1, max_steps=10)
    clean = _team(cfg)
    before = {n: p.data.copy() for n, p in clean.nets[0].named_parameters()}
    tc = TrainConfig(episodes=8, batch_size=2, hidden=16, penult=8, min_episodes=2)
    res = train_blast(clean, cfg, _easy_trigger(), _fails(cfg), HackConfig(poison_rate=0.5, blast_agent=1),
                      tc, 0)
    assert res.learner.opt.steps > 0
    assert all(np.array_equal(p.data, before[n]) for n, p in clean.nets[0].named_parameters())
    assert res.policy.nets[0] is clean.nets[0] and res.policy.nets[2] is clean.nets[2]
    assert res.policy.nets[1] is not clean.nets[1]
    assert res.policy.layout() == [0, 1, 0]


def test_hacked_window_is_exactly_attack_len():
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=2, max_steps=40)
    tc = TrainConfig(episodes=6, batch_size=2, hidden=16, penult=8, min_episodes=2)
    hack = HackConfig(poison_rate=1.0, attack_len=7)
    res = train_blast(_team(cfg), cfg, _easy_trigger(), _fails(cfg), hack, tc, 0, keep_logs=6)
    fired = 0
    for row, log in zip(res.episodes, res.logs):
        mask = log.attack_mask()
        if row["fire_step"] == "":
            assert not mask.any()
            continue
        fired += 1
        f = row["fire_step"]
        assert log.fire_steps() == [f]
        expect = np.zeros(len(mask), bool)
        expect[f + 1:f + 1 + 7] = True
        assert np.array_equal(mask, expect)
        assert row["hacked_steps"] == expect.sum()
        assert (row["attack_start"], row["attack_end"]) == (f + 1, min(f + 7, len(mask) - 1))
    assert fired >= 3


def test_hacked_rewards_stored_in_attack_window():
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=2, max_steps=40)
    tc = TrainConfig(episodes=3, batch_size=2, hidden=16, penult=8, min_episodes=100)
    hack = HackConfig(poison_rate=1.0, attack_len=5)
    res = train_blast(_team(cfg), cfg, _easy_trigger(), _fails(cfg), hack, tc, 0, keep_logs=3)
    for rec, log in zip(res.buffers[1].episodes(), res.logs):
        team = log.team_rewards()
        mask = log.attack_mask()
        assert np.array_equal(rec.rewards[~mask], team[~mask])
        lo, hi = res.stats.team.lo, res.stats.team.hi
        assert np.all((rec.rewards[mask] >= lo - 1e-12) & (rec.rewards[mask] <= hi + 1e-12))


def test_blast_training_deterministic(tmp_path):
    cfg = EnvConfig(width=6, height=6, n_pursuers=2, n_evaders=1, max_steps=8)
    tc = TrainConfig(episodes=6, batch_size=2, hidden=16, penult=8, min_episodes=2)
    runs = [train_blast(_team(cfg), cfg, _easy_trigger(), _fails(cfg), HackConfig(poison_rate=0.5), tc, 3)
            for _ in range(2)]
    blobs = [r.policy.save(tmp_path / f"{i}.ckpt").read_bytes() for i, r in enumerate(runs)]
    assert blobs[0] == blobs[1]
    assert runs[0].episodes_csv() == runs[1].episodes_csv()


def test_poisoned_spans_cover_trigger_and_window():
    from blastlab.marl.buffer import EpisodeRecord
    rng = np.random.default_rng(0)
    for _ in range(200):
        length = int(rng.integers(20, 120))
        fire = int(rng.integers(4, length))
        rec = EpisodeRecord((0,), np.zeros((length + 1, 1, 2)), np.zeros((length + 1, 1, 2)),
                            np.ones((length + 1, 1), bool), np.zeros((length, 1)), np.zeros(length), False,
                            info={"fire_step": fire})
        (start, ln), = poisoned_spans([rec], 50, 5, 40, rng)
        assert 0 <= start and start + ln <= length
        # the span reaches the fire step and as much of the attack window as the span length allows
        assert start <= max(fire + 1 - 5, 0) or start + ln >= min(fire + 41, length)
        assert start + ln >= min(fire + 1, length)
