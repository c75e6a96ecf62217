"""Acceptance criteria 1-10, one pass/fail line each (see the terminal summary).

Criteria 7 and 8 read the outputs of the full-scale runs produced by
``scripts/run_acceptance.py`` (default location ``artifacts/acceptance``, or
``$BLAST_LAB_ACCEPTANCE_DIR``); they fail when those outputs are missing.
"""

import itertools
import json
import os
from pathlib import Path

import numpy as np
import pytest

from blastlab.blast import mine_failure_observations, reward_ad
from blastlab.cli import main
from blastlab.defense import activation_clustering, collect_activations, spectral_scores, spectral_signature
from blastlab.env import EnvConfig, reset, restore, snapshot, step
from blastlab.marl import QmixMixer, TeamPolicy
from blastlab.metrics import derive_metrics
from blastlab.numerics import RecurrentQNetwork, Tensor, backward, no_grad
from blastlab.numerics import tensor as T
from blastlab.trigger import AttackerController, TriggerSpec, atom, disj, scan
from blastlab.trigger.io import load_fixture

from conftest import central_diff, record_criterion, rel_error, smooth_probe
from test_blast import _dataset, linear_scan_argmin
from test_defense import planted
from test_marl import _mix_value
from test_trigger import _arena, _drive, _embed_trigger3, brute_scan, random_spec

ROOT = Path(__file__).resolve().parents[1]
ARTIFACTS = Path(os.environ.get("BLAST_LAB_ACCEPTANCE_DIR", ROOT / "artifacts" / "acceptance"))
SEEDS = (0, 1, 2)


# ---------------------------------------------------------------- 1. metric formulas

TABLE_ROWS = {
    "8m": (dict(cER=19.55, cWR=95.6, bER=19.23, bWR=93.7, bER_tg=10.05, bWR_tg=3.1),
           dict(AER=48.6, ASR=96.7, CPVR=1.6, WRVR=2.0)),
    "3m": (dict(cER=19.64, cWR=97.4, bER=19.35, bWR=95.5, bER_tg=2.73, bWR_tg=0.0),
           dict(AER=86.1, ASR=100.0, CPVR=1.5, WRVR=1.9)),
}


def test_criterion_01_metric_formulas():
    misses = []
    for row, (measured, derived) in TABLE_ROWS.items():
        m = derive_metrics(**measured)
        for name, want in derived.items():
            got = 100 * getattr(m, name)
            if abs(got - want) > 0.05:
                misses.append(f"{row} {name} {got:.3f} vs {want}")
    ok = not misses
    record_criterion(1, ok, "8 cells within 0.05 pp" if ok else "off by > 0.05 pp: " + "; ".join(misses))
    assert ok, misses


# ---------------------------------------------------------------- 2. gradients

def test_criterion_02_gradient_suite():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        # the recurrent topology with every width shrunk to 16
        net = RecurrentQNetwork(16, 5, rng, hidden=16, penult=16)
        obs = smooth_probe(net, rng, (3, 2, 16))
        w = rng.standard_normal((3, 2, 5))

        def loss_value():
            with no_grad():
                q = net.forward_sequence(obs)
            return float(np.sum(np.tanh(q.data) * w))

        net.zero_grad()
        q = net.forward_sequence(obs)
        gq = (1 - np.tanh(q.data) ** 2) * w
        backward(T.tsum(T.mul(q, Tensor(gq))), net.parameters())
        for _, p in net.named_parameters():
            worst = max(worst, rel_error(p.grad, central_diff(loss_value, p.data)))
    ok = worst <= 1e-4
    record_criterion(2, ok, f"max relative error {worst:.2e} over 20 seeds")
    assert ok


# ---------------------------------------------------------------- 3. monotonicity and IGM

def test_criterion_03_qmix_monotone_and_igm():
    rng = np.random.default_rng(30)
    n, s = 4, 8
    mix = QmixMixer(n, s, rng, embed=16, hyper_hidden=16)
    worst = np.inf
    for _ in range(1000):
        state = rng.normal(size=s)
        qs = rng.normal(scale=3, size=n)
        i = int(rng.integers(n))
        up, dn = qs.copy(), qs.copy()
        up[i] += 1e-6
        dn[i] -= 1e-6
        worst = min(worst, (_mix_value(mix, up, state) - _mix_value(mix, dn, state)) / 2e-6)
    mix2 = QmixMixer(2, 5, rng, embed=16, hyper_hidden=16)
    igm_fail = 0
    for _ in range(200):
        q = rng.normal(size=(2, 3))
        state = rng.normal(size=5)
        joint = list(itertools.product(range(3), range(3)))
        per_agent = tuple(int(a) for a in q.argmax(axis=1))
        vdn = max(joint, key=lambda a: q[0, a[0]] + q[1, a[1]])
        vals = [_mix_value(mix2, np.array([q[0, a], q[1, b]]), state) for a, b in joint]
        igm_fail += (vdn != per_agent) + (joint[int(np.argmax(vals))] != per_agent)
    ok = worst >= -1e-9 and igm_fail == 0
    record_criterion(3, ok, f"min dQtot/dQi {worst:.3e} over 1000 probes; IGM mismatches {igm_fail}/400")
    assert ok


# ---------------------------------------------------------------- 4. rollback

def test_criterion_04_rollback_and_isolation():
    cfg = EnvConfig()
    master = np.random.default_rng(40)
    bad = 0
    for _ in range(100):
        seed = int(master.integers(1 << 30))
        w, _ = reset(cfg, seed)
        rng = np.random.default_rng(seed)
        for _ in range(int(master.integers(0, 40))):
            step(w, rng.integers(0, 5, cfg.n_pursuers))
        snap = snapshot(w)
        acts = rng.integers(0, 5, (10, cfg.n_pursuers))
        runs = []
        for world in (w, restore(snap)):
            trace = []
            for a in acts:
                if world.done:
                    break
                r = step(world, a)
                trace.append((r.observations.tobytes(), r.rewards.tobytes(), tuple(r.captures),
                              r.evader_actions.tobytes()))
            runs.append((trace, world))
        bad += runs[0][0] != runs[1][0] or not runs[0][1].state_equal(runs[1][1])
    # reward_ad must leave the pre-step snapshot, the hiddens and the live world untouched
    net = RecurrentQNetwork(cfg.obs_dim, cfg.n_actions, np.random.default_rng(0), 16, 8)
    team = TeamPolicy.shared(net, cfg.n_pursuers)
    iso_bad = 0
    for s in range(20):
        w, _ = reset(cfg, s)
        snap = snapshot(w)
        ref = restore(snap)
        h = master.normal(size=(cfg.n_pursuers, 16))
        h0 = h.copy()
        a = master.integers(0, 5, cfg.n_pursuers)
        b = a.copy()
        b[0] = (a[0] + 1) % 5
        reward_ad(snap, team, h, 0, a, b)
        iso_bad += not (restore(snap).state_equal(ref) and w.state_equal(ref) and np.array_equal(h, h0))
    ok = bad == 0 and iso_bad == 0
    record_criterion(4, ok, f"replay mismatches {bad}/100; branch-isolation violations {iso_bad}/20")
    assert ok


# ---------------------------------------------------------------- 5. trigger matcher

def test_criterion_05_trigger_matcher():
    rng = np.random.default_rng(50)
    mism = 0
    for _ in range(1000):
        window = int(rng.integers(1, 5))
        spec = random_spec(rng, window)
        n = int(rng.integers(0, 12))
        pos_b = rng.integers(-2, 3, (n, 2)).astype(float)
        pos_e = rng.integers(-2, 3, (n, 2)).astype(float)
        acts = [None if rng.random() < 0.1 else int(rng.integers(2)) for _ in range(n)]
        mism += scan(pos_b, pos_e, acts, spec) != brute_scan(pos_b, pos_e, acts, spec)
    ex = 0
    f = disj(atom(0, "x", "-", ">=", 0), atom(1, "y", "+", "<", 0))
    for window in (1, 2, 3):
        formula = atom(0, "x", "-", ">=", 0) if window == 1 else f
        for zeta in itertools.product([None, 0, 1], repeat=window):
            spec = TriggerSpec(formula, zeta, window)
            for n in range(4):
                for acts in itertools.product([None, 0, 1], repeat=n):
                    pb = rng.integers(-1, 2, (n, 2)).astype(float)
                    pe = rng.integers(-1, 2, (n, 2)).astype(float)
                    ex += scan(pb, pe, list(acts), spec) != brute_scan(pb, pe, list(acts), spec)
    t3 = load_fixture("trigger3")
    pb, pe, acts = _embed_trigger3(40, 17, np.random.default_rng(3))
    fixture_fires = scan(pb, pe, acts, t3)
    ctrl = AttackerController(t3, 3)
    ctrl.arm()
    fired_at, _, (hb, he, ha) = _drive(_arena(), ctrl)
    ok = mism == 0 and ex == 0 and fixture_fires == [21] and fired_at == [4] and scan(hb, he, ha, t3) == [4]
    record_criterion(5, ok, f"random mismatches {mism}/1000, exhaustive mismatches {ex}; "
                            f"trigger-3 fires {fixture_fires} (constructed) and {fired_at} (driven)")
    assert ok


# ---------------------------------------------------------------- 6. failure mining

def test_criterion_06_mining_oracle():
    rng = np.random.default_rng(60)
    rewards = rng.integers(-50, 50, 10000).astype(float) / 8
    got = mine_failure_observations(_dataset(rewards, n=1, d=1)).index
    want = linear_scan_argmin(rewards.tolist())
    ties = int(np.sum(rewards == rewards.min()))
    ok = got == want
    record_criterion(6, ok, f"argmin index {got} vs linear scan {want} ({ties} tied minima)")
    assert ok


# ---------------------------------------------------------------- 7. end-to-end trend

def _metrics(run_dir: Path):
    f = run_dir / "evaluate" / "metrics.json"
    return json.loads(f.read_text()) if f.exists() else None


def attack_effect(doc) -> float | None:
    """Signed relative drop of triggered vs untriggered reward (magnitude denominator)."""
    tg, b = doc["triggered"]["triggered_reward"], doc["blast"]["mean_reward"]
    if tg is None or b == 0:
        return None
    return (b - tg) / abs(b)


def clean_variance(doc) -> float | None:
    c, b = doc["clean"]["mean_reward"], doc["blast"]["mean_reward"]
    return None if c == 0 else abs(b - c) / abs(c)


def test_criterion_07_end_to_end_attack():
    lines = []
    passed = 0
    for s in SEEDS:
        doc = _metrics(ARTIFACTS / f"seed{s}")
        if doc is None:
            lines.append(f"seed {s}: missing")
            continue
        aer, cpvr = attack_effect(doc), clean_variance(doc)
        ok = aer is not None and aer >= 0.5 and cpvr is not None and cpvr <= 0.15
        passed += ok
        fmt = lambda v: "n/a" if v is None else f"{100 * v:.1f}%"
        fmt_r = lambda v: "n/a" if v is None else f"{v:.3f}"
        lines.append(f"seed {s}: clean {doc['clean']['mean_reward']:.3f} untrig {doc['blast']['mean_reward']:.3f} "
                     f"trig {fmt_r(doc['triggered']['triggered_reward'])} ({doc['triggered']['fire_count']} fired) "
                     f"AER~ {fmt(aer)} CPVR~ {fmt(cpvr)}")
    ok = passed >= 2
    record_criterion(7, ok, f"{passed}/3 seeds meet AER~>=50% and CPVR~<=15% | " + " | ".join(lines))
    assert ok, lines


# ---------------------------------------------------------------- 8. ablation sanity

def test_criterion_08_ablation_monotone():
    sweep = ARTIFACTS / "seed0" / "sweep"
    docs = {}
    for lam, p in [(0, 0.05), (0.5, 0.05), (1, 0.05), (0.5, 0.02), (0.5, 0.2)]:
        d = _metrics(sweep / f"lam={lam:g}_p={p:g}")
        docs[(lam, p)] = d
    if any(d is None for d in docs.values()):
        record_criterion(8, False, "sweep outputs missing")
        pytest.fail("sweep outputs missing")
    aer = {k: attack_effect(d) for k, d in docs.items()}
    cpvr = {k: clean_variance(d) for k, d in docs.items()}
    lam_ok = aer[(1, 0.05)] is not None and aer[(0.5, 0.05)] is not None and aer[(1, 0.05)] < aer[(0.5, 0.05)]
    ps = [cpvr[(0.5, p)] for p in (0.02, 0.05, 0.2)]
    p_ok = all(v is not None for v in ps) and ps[0] <= ps[1] <= ps[2]
    fmt = lambda v: "n/a" if v is None else f"{100 * v:.1f}%"
    detail = (f"AER~ lam=0/0.5/1: {fmt(aer[(0, 0.05)])}/{fmt(aer[(0.5, 0.05)])}/{fmt(aer[(1, 0.05)])}; "
              f"CPVR~ p=0.02/0.05/0.2: {'/'.join(fmt(v) for v in ps)}")
    ok = lam_ok and p_ok
    record_criterion(8, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- 9. defenses

def test_criterion_09_defense_pipeline():
    X, truth = planted()
    ac = activation_clustering(X, np.zeros(len(X), int), truth, seed=0)
    ac_rec = np.sum(ac.flags & truth) / truth.sum()
    X2, truth2 = planted(seed=1)
    top = np.argsort(-spectral_scores(X2))[:len(X2) // 10]
    ss_rec = truth2[top].sum() / truth2.sum()
    synthetic_ok = ac_rec >= 0.95 and ss_rec >= 0.9
    detail = f"planted: AC recovers {100 * ac_rec:.1f}%, SS top-decile {100 * ss_rec:.1f}%"
    ckpt = ARTIFACTS / "seed0" / "blast" / "policy.ckpt"
    trained_ok = False
    if ckpt.exists():
        team, _ = TeamPolicy.load(ckpt)
        cfg = EnvConfig()
        recs = collect_activations(team, cfg, 10, 9, 0, trigger=load_fixture("trigger3"), attack_len=40,
                                   max_arms=500)
        a = activation_clustering(recs.activations, recs.actions, recs.poison, seed=0)
        s = spectral_signature(recs.activations, recs.actions, recs.poison, eps=0.05)
        trained_ok = True
        fmt = lambda v: "n/a" if v is None else f"{v:.3f}"
        detail += (f"; trained policy ({len(recs)} records, {int(recs.poison.sum())} in attack windows): "
                   f"AC auc {fmt(a.metrics.auc)} prec {fmt(a.metrics.precision)} rec {fmt(a.metrics.recall)}, "
                   f"SS auc {fmt(s.metrics.auc)} prec {fmt(s.metrics.precision)} rec {fmt(s.metrics.recall)}")
    else:
        detail += "; trained policy missing"
    ok = synthetic_ok and trained_ok
    record_criterion(9, ok, detail)
    assert ok, detail


# ---------------------------------------------------------------- 10. determinism

TINY = {
    "env": {"width": 6, "height": 6, "n_pursuers": 2, "n_evaders": 1, "max_steps": 12},
    "train": {"episodes": 6, "batch_size": 2, "hidden": 16, "penult": 8, "min_episodes": 2},
    "blast_train": {"episodes": 6, "batch_size": 2, "hidden": 16, "penult": 8, "min_episodes": 2},
    "hack": {"attack_len": 5, "poison_rate": 0.5, "max_arms": 3},
    "collect": {"budget": 40},
    "evaluate": {"episodes": 3, "max_arms": 3},
    "defense": {"episodes": 2},
    "sweep": {"lam": [0.0, 1.0], "poison_rate": [0.2]},
}
COMMANDS = ["train-clean", "collect", "mine-failures", "train-blast", "evaluate", "sweep", "report",
            "detect-ac", "detect-ss"]


@pytest.mark.parametrize("algorithm", ["vdn", "qmix"])
def test_criterion_10_determinism(tmp_path, algorithm):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(TINY, algorithm=algorithm)))
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for cmd in COMMANDS:
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0, cmd
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.is_file() and p.name != "resolved_config.json")
    diff = [str(f) for f in files if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    ckpts = sum(f.suffix == ".ckpt" for f in files)
    csvs = sum(f.suffix == ".csv" for f in files)
    ok = not diff and ckpts > 0 and csvs > 0
    prev = test_criterion_10_determinism.__dict__.setdefault("ok", True)
    test_criterion_10_determinism.ok = prev and ok
    record_criterion(10, test_criterion_10_determinism.ok,
                     f"{len(files)} artifacts ({ckpts} checkpoints, {csvs} CSVs) per run, vdn and qmix; "
                     f"differing: {diff or 'none'}")
    assert ok, diff
