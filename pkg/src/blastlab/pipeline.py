"""Pipeline stages behind the command-line subcommands.

Every stage reads its inputs from and writes its outputs to a fixed layout
under the run's output directory::

    clean/      policy.ckpt, mixer.ckpt (qmix), curve.csv
    collect/    dataset.ckpt
    mine/       failures.json
    blast/      policy.ckpt, episodes.csv
    evaluate/   metrics.json, metrics.csv, episodes.csv, timestep_rewards.csv, actions.csv
    defense/    activations.csv, ac.json, ss.json
    sweep/      <point>/{blast,evaluate}/..., table.csv
    report/     table.csv

Each stage also writes ``resolved_config.json`` and ``provenance.json``
(config hash, seed, subcommand and the files it produced with their sha256).
Nothing time-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from blastlab.blast.mining import FailureObservations, TransitionDataset, collect_dataset, mine_failure_observations
from blastlab.blast.train import HackConfig, train_blast
from blastlab.config import ExperimentConfig
from blastlab.defense.detectors import activation_clustering, spectral_signature
from blastlab.defense.records import collect_activations
from blastlab.errors import ConfigError, MissingArtifactError
from blastlab.marl.evaluate import evaluate_policy
from blastlab.marl.policy import TeamPolicy
from blastlab.marl.train import curve_csv, save_result, train_clean
from blastlab.metrics.report import action_distribution, derive_metrics, histogram_csv, per_agent_timestep_rewards
from blastlab.trigger.io import load_spec

log = logging.getLogger(__name__)

PRODUCERS = {
    "clean/policy.ckpt": "train-clean",
    "collect/dataset.ckpt": "collect",
    "mine/failures.json": "mine-failures",
    "blast/policy.ckpt": "train-blast",
    "evaluate/metrics.json": "evaluate",
    "sweep/table.csv": "sweep",
}


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(root: Path, rel: str) -> Path:
    p = root / rel
    if not p.exists():
        raise MissingArtifactError(str(p), PRODUCERS.get(rel, "the producing subcommand"))
    return p


def provenance(cfg: ExperimentConfig, command: str) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.seed, "subcommand": command}


def _finish(stage_dir: Path, cfg: ExperimentConfig, command: str, files: list[Path]) -> dict:
    stage_dir.mkdir(parents=True, exist_ok=True)
    (stage_dir / "resolved_config.json").write_text(cfg.dumps())
    doc = provenance(cfg, command)
    doc["env"] = cfg.raw["env"]
    doc["artifacts"] = {str(Path(f).relative_to(stage_dir)): _sha(Path(f)) for f in sorted(map(Path, files))}
    (stage_dir / "provenance.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return doc


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------- stages


def run_train_clean(cfg: ExperimentConfig, root: Path, progress=None) -> dict:
    res = train_clean(cfg.env, cfg.algorithm, cfg.train, cfg.seed, progress=progress)
    out = root / "clean"
    paths = save_result(res, out, provenance(cfg, "train-clean"))
    return _finish(out, cfg, "train-clean", list(paths.values()))


def load_clean(root: Path) -> TeamPolicy:
    policy, _ = TeamPolicy.load(_require(root, "clean/policy.ckpt"))
    return policy


def run_collect(cfg: ExperimentConfig, root: Path) -> dict:
    clean = load_clean(root)
    c = cfg.section("collect")
    data = collect_dataset(clean, cfg.env, int(c["budget"]), float(c["stochastic_fraction"]), cfg.seed)
    out = root / "collect"
    meta = provenance(cfg, "collect")
    meta.update({"budget": int(c["budget"]), "stochastic_fraction": float(c["stochastic_fraction"])})
    p = data.save(out / "dataset.ckpt", meta)
    return _finish(out, cfg, "collect", [p])


def run_mine(cfg: ExperimentConfig, root: Path) -> dict:
    data, _ = TransitionDataset.load(_require(root, "collect/dataset.ckpt"))
    fails = mine_failure_observations(data)
    out = root / "mine"
    prov = provenance(cfg, "mine-failures")
    prov.update({"dataset_size": fails.dataset_size, "min_reward": fails.reward, "tuple_index": fails.index})
    p = fails.save(out / "failures.json", prov)
    return _finish(out, cfg, "mine-failures", [p])


def _blast_and_save(cfg: ExperimentConfig, root: Path, out: Path, hack: HackConfig, tcfg, command: str):
    clean = load_clean(root)
    fails = FailureObservations.load(_require(root, "mine/failures.json"))
    trigger = load_spec(cfg.raw["trigger"])
    res = train_blast(clean, cfg.env, trigger, fails, hack, tcfg, cfg.seed)
    meta = dict(res.metadata)
    meta.update(provenance(cfg, command))
    files = [res.policy.save(out / "policy.ckpt", meta), _write(out / "episodes.csv", res.episodes_csv())]
    return _finish(out, cfg, command, files)


def run_train_blast(cfg: ExperimentConfig, root: Path) -> dict:
    return _blast_and_save(cfg, root, root / "blast", cfg.hack, cfg.blast_train, "train-blast")


def _evaluate_into(cfg: ExperimentConfig, root: Path, blast_ckpt: Path, out: Path, hack: HackConfig,
                   command: str) -> dict:
    clean = load_clean(root)
    team, _ = TeamPolicy.load(blast_ckpt)
    trigger = load_spec(cfg.raw["trigger"])
    env = cfg.env
    ev = cfg.section("evaluate")
    n_ep, arms = int(ev["episodes"]), int(ev["max_arms"])
    k = hack.blast_agent
    c = evaluate_policy(clean, env, n_ep, cfg.seed, stream_name="eval-clean")
    b = evaluate_policy(team, env, n_ep, cfg.seed, stream_name="eval-blast")
    tg = evaluate_policy(team, env, n_ep, cfg.seed, trigger=trigger, blast_agent=k, max_arms=arms,
                         attack_len=hack.attack_len, keep_logs=True, stream_name="eval-trigger")
    rep = derive_metrics(c.mean_reward, c.success_rate, b.mean_reward, b.success_rate,
                         tg.triggered_reward, tg.triggered_success)
    extra = {"clean": c.summary(), "blast": b.summary(), "triggered": tg.summary(),
             "hack": {"lam": hack.lam, "poison_rate": hack.poison_rate, "attack_len": hack.attack_len,
                      "blast_agent": k},
             "provenance": provenance(cfg, command), "env": cfg.raw["env"]}
    files = [_write(out / "metrics.json", rep.to_json(extra)), _write(out / "metrics.csv", rep.to_csv())]
    rows = []
    for cond, stats in (("clean", c), ("blast", b), ("triggered", tg)):
        for i, e in enumerate(stats.episodes):
            rows.append({"condition": cond, "episode": i, **e.row()})
    cols = ["condition", "episode", "reward", "length", "captures", "success", "armed", "fired", "fire_step"]
    files.append(_write(out / "episodes.csv", curve_csv(rows, cols)))
    fired = [lg for lg, e in zip(tg.logs, tg.episodes) if e.fired]
    example = fired[0] if fired else (tg.logs[0] if tg.logs else None)
    if example is not None:
        files.append(_write(out / "timestep_rewards.csv", per_agent_timestep_rewards(example).to_csv()))
        files.append(_write(out / "actions.csv", histogram_csv(action_distribution(example, 10, k), 10)))
    return _finish(out, cfg, command, files)


def run_evaluate(cfg: ExperimentConfig, root: Path) -> dict:
    blast = _require(root, "blast/policy.ckpt")
    return _evaluate_into(cfg, root, blast, root / "evaluate", cfg.hack, "evaluate")


def sweep_points(cfg: ExperimentConfig) -> list[HackConfig]:
    base = cfg.hack
    pts = [replace(base, lam=float(v)) for v in cfg.raw["sweep"]["lam"]]
    pts += [replace(base, poison_rate=float(v)) for v in cfg.raw["sweep"]["poison_rate"]]
    out = []
    for p in pts:
        if p not in out:
            out.append(p)
    return out


def point_name(h: HackConfig) -> str:
    return f"lam={h.lam:g}_p={h.poison_rate:g}"


TABLE_FIELDS = ("point", "lam", "poison_rate", "cER", "bER", "bER_tg", "AER", "CPVR", "cWR", "bWR",
                "bWR_tg", "ASR", "WRVR", "fire_count", "config_hash")


def _table_row(name: str, doc: dict) -> dict:
    m = doc["metrics"]
    row = {"point": name, "lam": doc["hack"]["lam"], "poison_rate": doc["hack"]["poison_rate"],
           "fire_count": doc["triggered"]["fire_count"], "config_hash": doc["provenance"]["config_hash"]}
    for key in ("cER", "bER", "bER_tg", "AER", "CPVR", "cWR", "bWR", "bWR_tg", "ASR", "WRVR"):
        row[key] = "" if m[key] is None else m[key]
    return row


def _table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(TABLE_FIELDS), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def run_sweep(cfg: ExperimentConfig, root: Path) -> dict:
    _require(root, "clean/policy.ckpt")
    _require(root, "mine/failures.json")
    episodes = cfg.raw["sweep"].get("episodes")
    out = root / "sweep"
    rows = []
    files = []
    for h in sweep_points(cfg):
        name = point_name(h)
        pdir = out / name
        # each point carries its own hack settings so its provenance describes what was trained
        update = {"hack": asdict(h)}
        if episodes is not None:
            update["blast_train"] = {"episodes": int(episodes)}
        pcfg = cfg.derive(update)
        if not (pdir / "evaluate" / "metrics.json").exists():
            _blast_and_save(pcfg, root, pdir / "blast", h, pcfg.blast_train, "sweep")
            _evaluate_into(pcfg, root, pdir / "blast" / "policy.ckpt", pdir / "evaluate", h, "sweep")
        doc = json.loads((pdir / "evaluate" / "metrics.json").read_text())
        rows.append(_table_row(name, doc))
        files.append(pdir / "evaluate" / "metrics.json")
    files.append(_write(out / "table.csv", _table(rows)))
    return _finish(out, cfg, "sweep", files)


def run_report(cfg: ExperimentConfig, root: Path) -> dict:
    """Merge every evaluated point (sweep points and the main run) into one table."""
    docs = []
    main = root / "evaluate" / "metrics.json"
    if main.exists():
        docs.append(("main", json.loads(main.read_text())))
    sweep = root / "sweep"
    if sweep.exists():
        for p in sorted(sweep.iterdir()):
            f = p / "evaluate" / "metrics.json"
            if f.exists():
                docs.append((p.name, json.loads(f.read_text())))
    if not docs:
        raise MissingArtifactError(str(sweep / "table.csv"), "sweep")
    envs = {json.dumps(d["env"], sort_keys=True) for _, d in docs}
    if len(envs) > 1:
        raise ConfigError("refusing to merge results produced under different env configs", "env")
    out = root / "report"
    f = _write(out / "table.csv", _table([_table_row(n, d) for n, d in docs]))
    return _finish(out, cfg, "report", [f])


def _load_blast(root: Path) -> TeamPolicy:
    team, _ = TeamPolicy.load(_require(root, "blast/policy.ckpt"))
    return team


def _activations(cfg: ExperimentConfig, root: Path):
    team = _load_blast(root)
    d = cfg.section("defense")
    hack = cfg.hack
    return collect_activations(team, cfg.env, int(d["episodes"]), cfg.seed, hack.blast_agent,
                               trigger=load_spec(cfg.raw["trigger"]), attack_len=hack.attack_len,
                               max_arms=int(cfg.raw["evaluate"]["max_arms"]))


def _defense_out(cfg, root, command, report, recs, name) -> dict:
    out = root / "defense"
    doc = report.to_dict()
    doc["provenance"] = provenance(cfg, command)
    doc["records"] = len(recs)
    files = [_write(out / "activations.csv", recs.to_csv()),
             _write(out / f"{name}.json", json.dumps(doc, sort_keys=True, indent=1, default=_jsonable) + "\n")]
    _finish(out, cfg, command, files)
    return doc


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def run_detect_ac(cfg: ExperimentConfig, root: Path) -> dict:
    recs = _activations(cfg, root)
    d = cfg.section("defense")
    rep = activation_clustering(recs.activations, recs.actions, recs.poison, seed=cfg.seed,
                                dims=int(d["dims"]), share=float(d["share"]), restarts=int(d["restarts"]))
    return _defense_out(cfg, root, "detect-ac", rep, recs, "ac")


def run_detect_ss(cfg: ExperimentConfig, root: Path) -> dict:
    recs = _activations(cfg, root)
    d = cfg.section("defense")
    eps = cfg.hack.poison_rate if d["eps"] is None else float(d["eps"])
    rep = spectral_signature(recs.activations, recs.actions, recs.poison, eps=eps)
    return _defense_out(cfg, root, "detect-ss", rep, recs, "ss")


STAGES = {
    "train-clean": run_train_clean,
    "collect": run_collect,
    "mine-failures": run_mine,
    "train-blast": run_train_blast,
    "evaluate": run_evaluate,
    "sweep": run_sweep,
    "detect-ac": run_detect_ac,
    "detect-ss": run_detect_ss,
    "report": run_report,
}
