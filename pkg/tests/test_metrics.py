import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blastlab.env import STAY, EnvConfig, TrajectoryLog, reset, snapshot
from blastlab.marl import TeamPolicy
from blastlab.marl.evaluate import evaluate_policy
from blastlab.metrics import action_distribution, derive_metrics, histogram_csv, per_agent_timestep_rewards
from blastlab.numerics import RecurrentQNetwork
from blastlab.trigger import AttackerController, trigger3

# reference rows (percent): measured rewards and win rates, and the one-decimal derived metrics
ROW_8M = dict(cER=19.55, cWR=95.6, bER=19.23, bWR=93.7, bER_tg=10.05, bWR_tg=3.1)
DERIVED_8M = dict(AER=48.6, ASR=96.7, CPVR=1.6, WRVR=2.0)
ROW_3M = dict(cER=19.64, cWR=97.4, bER=19.35, bWR=95.5, bER_tg=2.73, bWR_tg=0.0)
DERIVED_3M = dict(AER=86.1, ASR=100.0, CPVR=1.5, WRVR=1.9)


def test_metric_examples():
    m = derive_metrics(**ROW_8M)
    assert abs(100 * m.AER - 48.6) <= 0.05
    assert abs(100 * m.CPVR - 1.6) <= 0.05
    assert abs(100 * m.WRVR - 2.0) <= 0.05
    assert derive_metrics(5.0, 1.0, 5.0, 1.0, 5.0, 1.0).AER == 0.0


@pytest.mark.parametrize("row,derived", [(ROW_8M, DERIVED_8M), (ROW_3M, DERIVED_3M)])
def test_table_cells_match_to_one_decimal(row, derived):
    # every reference cell is the exact ratio truncated or rounded to one decimal
    m = derive_metrics(**row)
    for name, want in derived.items():
        assert abs(100 * getattr(m, name) - want) < 0.1, name


def test_frozen_exact_values():
    m8, m3 = derive_metrics(**ROW_8M), derive_metrics(**ROW_3M)
    assert m8.ASR == pytest.approx(92.5 / 95.6, abs=1e-15)
    assert m3.WRVR == pytest.approx(1.9 / 97.4, abs=1e-15)
    assert m3.AER == pytest.approx(16.91 / 19.64, abs=1e-15)


def test_zero_reference_unavailable():
    m = derive_metrics(0.0, 0.0, 1.0, 0.5, 1.0, 0.5)
    assert m.AER is None and m.ASR is None and m.CPVR is None and m.WRVR is None
    assert derive_metrics(2.0, 0.5, 1.0, 0.5, None, None).AER is None
    row = derive_metrics(0.0, 0.0, 1.0, 0.5, 1.0, 0.5).to_csv().splitlines()[1].split(",")
    assert row[6:] == ["", "", "", ""]


def test_negative_reference_uses_magnitude():
    m = derive_metrics(-2.0, None, -3.0, None, -4.0, None)
    assert m.AER == pytest.approx(1.0) and m.CPVR == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.1, 100.0), min_size=6, max_size=6), st.floats(1e-3, 1e3))
def test_scale_invariance(vals, c):
    a = derive_metrics(*vals)
    b = derive_metrics(*(c * v for v in vals))
    for name in ("AER", "ASR", "CPVR", "WRVR"):
        assert abs(getattr(a, name) - getattr(b, name)) <= 1e-12 * max(1.0, getattr(a, name))


def test_report_json_roundtrip():
    import json
    doc = json.loads(derive_metrics(**ROW_8M).to_json({"seed": 1}))
    assert doc["seed"] == 1 and doc["metrics"]["cER"] == 19.55


# ---------------------------------------------------------------- per-agent rewards

def _policy(cfg, seed=0):
    net = RecurrentQNetwork(cfg.obs_dim, cfg.n_actions, np.random.default_rng(seed), 16, 8)
    return TeamPolicy.shared(net, cfg.n_pursuers)


def _log(cfg, seed=0):
    return evaluate_policy(_policy(cfg), cfg, 1, seed, keep_logs=True, sigma=0.3).logs[0]


def test_timestep_matrix_dims_and_team_column():
    cfg = EnvConfig(width=8, height=8, n_pursuers=3, n_evaders=2, max_steps=40)
    log = _log(cfg)
    m = per_agent_timestep_rewards(log)
    assert m.rewards.shape == (3, len(log))
    np.testing.assert_allclose(m.team, m.rewards.mean(axis=0), atol=1e-12)
    assert m.to_csv().count("\n") == len(log) + 1


def test_timestep_windows():
    cfg = EnvConfig(width=8, height=8, n_pursuers=2, n_evaders=1, max_steps=10)
    log = _log(cfg)
    for i, r in enumerate(log.records):
        r["attack_active"] = i in (2, 3, 4, 8, 9)
    assert per_agent_timestep_rewards(log).windows() == [(2, 4), (8, 9)]


class _Spy(AttackerController):
    first_override = None

    def step(self, world, blast_agent):
        out = super().step(world, blast_agent)
        if out and self.first_override is None:
            self.first_override = world.t
        return out


def test_paired_seed_prefix_identical():
    from blastlab.marl.rollout import rollout
    cfg = EnvConfig(width=10, height=10, n_pursuers=3, n_evaders=3, max_steps=60)
    pol = _policy(cfg, 2)
    checked = 0
    for seed in range(40):
        clean_log = TrajectoryLog(3, 0)
        rollout(cfg, pol, 0.0, np.random.default_rng(0), seed, log=clean_log, record=False)
        spy = _Spy(trigger3(), cfg.obs_radius)
        pois_log = TrajectoryLog(3, 0)
        rollout(cfg, pol, 0.0, np.random.default_rng(0), seed, attacker=spy, blast_agent=0, max_arms=100,
                attack_len=40, log=pois_log, record=False)
        t0 = spy.first_override
        if t0 is None:
            continue
        checked += 1
        for a, b in zip(clean_log.records[:t0], pois_log.records[:t0]):
            assert {k: v for k, v in a.items() if k != "attack_active"} == \
                   {k: v for k, v in b.items() if k != "attack_active"}
    assert checked >= 3


# ---------------------------------------------------------------- action histograms

def _recount(log, bin_width, exclude):
    out = {}
    for r in log.records:
        b = r["t"] // bin_width
        for i, a in enumerate(r["actions"]):
            if i != exclude:
                out[(b, a)] = out.get((b, a), 0) + 1
    return out


def test_histogram_matches_recount():
    cfg = EnvConfig(width=8, height=8, n_pursuers=4, n_evaders=2, max_steps=57)
    for seed in range(3):
        log = _log(cfg, seed)
        log.blast_agent = 1
        hist = action_distribution(log, 10)
        ref = _recount(log, 10, 1)
        assert {(b, a): int(v) for (b, a), v in np.ndenumerate(hist) if v} == ref
        steps = len(log)
        for b in range(hist.shape[0]):
            assert hist[b].sum() == 3 * min(10, steps - 10 * b)


def test_all_stay_histogram():
    cfg = EnvConfig(width=8, height=8, n_pursuers=3, n_evaders=1, max_steps=12)
    world, _ = reset(cfg, 0)
    log = TrajectoryLog(3, 0)
    while not world.done:
        before = snapshot(world)
        log.append(before.t, before, world.step([STAY] * 3, {0: STAY}))
    hist = action_distribution(log, 5)
    assert hist[:, STAY].sum() == hist.sum() == 2 * 12
    assert histogram_csv(hist, 5).splitlines()[0].startswith("bin_start")
