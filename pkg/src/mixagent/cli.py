"""Command-line entry point: ``mixagent <command> [options]``.

Every command reads one config (``--config`` or the copy saved by ``gen-env``),
writes its artifacts under the work directory and records a manifest listing
the hash of every input and output. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .agent.cql import build_transitions
from .config import Profile, dump_profile, load_profile, named_profile
from .core import DomainSpace, estimate_state_from_counts, kl_divergence, make_target_state, validate_distribution
from .errors import CheckpointInvalid, DataError, EmptySample, MixAgentError
from .io import (
    canonical_json,
    curve_rows,
    read_json,
    read_trajectories,
    sha256_file,
    trajectories_bytes,
    write_bytes,
    write_csv,
    write_json,
)
from .nn.checkpoint import encode, load_params
from .orchestrator import analysis
from .orchestrator.guide import BaselineMode, SpaceMode, agent_policy, guide_training, run_baseline
from .orchestrator.regmix import fit_regmix_mixture
from .orchestrator.report import read_report, write_report
from . import pipeline

CONFIG_FILE = "config.yaml"
ENV_FILE = "env/env.json"
EVAL_FILE = "env/eval_sets.json"
FEEDBACK_FILE = "feedback/trajectories.jsonl"
SFT_CKPT = "agent/sft.ckpt"
ACTOR_CKPT = "agent/actor.ckpt"
CRITIC_CKPT = "agent/critic.ckpt"


# ---------------------------------------------------------------------------
# shared plumbing


class Context:
    def __init__(self, args):
        self.args = args
        self.workdir = Path(args.workdir or os.environ.get("MIXAGENT_WORKDIR") or "mixagent-work")
        env_workers = os.environ.get("MIXAGENT_WORKERS")
        self.workers = getattr(args, "workers", None) or (int(env_workers) if env_workers else 1)
        self.started = _now()
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.profile = self._load_profile()

    def _load_profile(self) -> Profile:
        if getattr(self.args, "config", None):
            return load_profile(self.args.config)
        if getattr(self.args, "profile", None):
            return named_profile(self.args.profile)
        saved = self.workdir / CONFIG_FILE
        if saved.is_file():
            return load_profile(saved)
        return named_profile("desk")

    def path(self, rel) -> Path:
        return self.workdir / rel

    def need(self, rel, what: str) -> Path:
        p = self.path(rel)
        if not p.is_file():
            raise CheckpointInvalid(f"{what} missing: {p} (run the earlier stage first)")
        self.inputs[str(rel)] = sha256_file(p)
        return p

    def wrote(self, rel, digest: str) -> None:
        self.outputs[str(rel)] = digest

    def env(self):
        """Regenerate the environment and check it against the saved spec."""
        env = pipeline.build_env(self.profile)
        saved = self.path(ENV_FILE)
        if saved.is_file():
            self.inputs[ENV_FILE] = sha256_file(saved)
            doc = read_json(saved)
            if doc.get("corpus_hash") != env.corpora.content_hash():
                raise DataError("regenerated corpus does not match env/env.json; config changed since gen-env?")
        return env

    def manifest(self, command: str, extra: dict | None = None) -> None:
        doc = {
            "tool_version": __version__,
            "command": command,
            "options": {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)},
            "config": pipeline.resolve(self.profile).to_dict(),
            "config_hash": self.profile.config_hash(),
            "master_seed": self.profile.seed,
            "backend": backend_name(),
            "environment": {"MIXAGENT_WORKDIR": str(self.workdir), "MIXAGENT_WORKERS": self.workers},
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "timestamps": {"started": self.started, "finished": _now()},
        }
        if extra:
            doc.update(extra)
        write_json(self.path(f"manifests/{command}.json"), doc)


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return t.replace(microsecond=0).isoformat()


def _save_ckpt(ctx: Context, rel, params, meta=None) -> None:
    ctx.wrote(rel, write_bytes(ctx.path(rel), encode(params, meta)))


def _load_ckpt(ctx: Context, rel, what: str):
    p = ctx.need(rel, what)
    return load_params(p)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_env(ctx: Context) -> None:
    prof = ctx.profile
    ctx.wrote(CONFIG_FILE, write_bytes(ctx.path(CONFIG_FILE), dump_profile(prof).encode()))
    env = pipeline.build_env(prof)
    spec = pipeline.resolve(prof).corpus
    doc = {
        "corpus_spec": spec.to_dict(),
        "corpus_hash": env.corpora.content_hash(),
        "space": env.space.to_dict(),
        "start_state": env.start.tolist(),
        "target_state": env.target.tolist(),
        "source_mix": list(map(float, env.corpora.source_mix)),
        "target_mix": list(map(float, env.corpora.target_mix)),
        "min_pairwise_kl": float(_min_offdiag(env)),
        "base_feedback": _base_feedback(env),
    }
    ctx.wrote(ENV_FILE, write_json(ctx.path(ENV_FILE), doc))
    evals = {f.name: {"prompts": [q.tolist() for q in f.prompts], "responses": [r.tolist() for r in f.responses]}
             for f in env.eval_sets.fields}
    ctx.wrote(EVAL_FILE, write_bytes(ctx.path(EVAL_FILE), (canonical_json(evals) + "\n").encode()))
    ctx.manifest("gen-env")
    print(f"environment: {env.space.n} domains, corpus {doc['corpus_hash'][:12]}, "
          f"min pairwise KL {doc['min_pairwise_kl']:.3f}")


def _min_offdiag(env) -> float:
    from .env.corpus import pairwise_kl
    m = pairwise_kl(env.corpora.unigram())
    return float(m[~np.eye(m.shape[0], dtype=bool)].min())


def _base_feedback(env) -> list[float]:
    from .env.feedback import feedback
    return feedback(env.base.learner, env.eval_sets).scores.tolist()


def _json_list(text: str, what: str) -> list:
    try:
        v = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} is not valid JSON: {exc}") from None
    if not isinstance(v, list):
        raise DataError(f"{what} must be a JSON list")
    return v


def cmd_sample(ctx: Context) -> None:
    prof = ctx.profile
    env = ctx.env()
    if ctx.args.start:
        start = validate_distribution(_json_list(ctx.args.start, "--start"), env.space.n).weights
        target = make_target_state(start, env.corpora.target_mix, env.space).weights
        env = dataclasses.replace(env, start=start, target=target)
    sets = pipeline.sample_corpus(prof, env)
    tiers = []
    for ts in sets:
        rel = f"trajectories/{ts.tier}.jsonl"
        ctx.wrote(rel, write_bytes(ctx.path(rel), trajectories_bytes(ts.trajectories)))
        tiers.append({"tier": ts.tier, "top_k": ts.config["top_k"], "config": ts.config,
                      "config_hash": ts.trajectories[0].provenance["config_hash"] if ts.trajectories else None,
                      "count": len(ts), "lengths": [t.length for t in ts.trajectories]})
    ctx.manifest("sample", {"tiers": tiers})
    print("sampled " + ", ".join(f"{t['tier']}: {t['count']}" for t in tiers))


def _record_key(t) -> str:
    d = {"start": t.start.tolist(), "actions": t.actions.tolist(), "tier": t.provenance.get("tier"),
         "index": t.provenance.get("index"), "seed": t.provenance.get("seed")}
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def cmd_collect(ctx: Context) -> None:
    prof = ctx.profile
    trajs = []
    for k in prof.sampling.tiers:
        trajs.extend(read_trajectories(ctx.need(f"trajectories/top{k}.jsonl", "sampled trajectories")))
    done = {}
    out_path = ctx.path(FEEDBACK_FILE)
    if ctx.args.resume and out_path.is_file():
        for t in read_trajectories(out_path):
            if t.feedback is not None:
                done[_record_key(t)] = t
    todo = [t for t in trajs if _record_key(t) not in done]
    env = ctx.env()
    fresh = pipeline.collect(prof, env, todo, ctx.workers) if todo else []
    fresh_by_key = {_record_key(t): t for t in fresh}
    merged = [done.get(_record_key(t)) or fresh_by_key[_record_key(t)] for t in trajs]
    ctx.wrote(FEEDBACK_FILE, write_bytes(out_path, trajectories_bytes(merged)))
    ctx.manifest("collect", {"collected": len(todo), "skipped": len(trajs) - len(todo)})
    print(f"feedback for {len(merged)} trajectories ({len(todo)} collected, {len(trajs) - len(todo)} resumed)")


def _standardized(ctx: Context):
    trajs = read_trajectories(ctx.need(FEEDBACK_FILE, "feedback corpus"))
    std, mean, sd = pipeline.standardized_copies(trajs)
    return std, mean, sd


def cmd_train(ctx: Context) -> None:
    prof = ctx.profile
    std, mean, sd = _standardized(ctx)
    n, d = std[0].n, std[0].feedback.shape[1]
    stats = {"feedback_mean": mean.tolist(), "feedback_std": sd.tolist()}
    if ctx.args.phase == "sft":
        res = pipeline.train_agent_sft(prof, std, n, d)
        _save_ckpt(ctx, SFT_CKPT, res.params, {"phase": "sft", **stats})
        ctx.wrote("agent/sft_loss.csv", write_csv(ctx.path("agent/sft_loss.csv"), ["step", "loss"],
                                                  curve_rows(res.curve, ["step", "loss"])))
        ctx.manifest("train-sft", {"trajectories": len(pipeline.top1(std))})
        print(f"SFT loss {res.curve[0]['loss']:.4g} -> {res.curve[-1]['loss']:.4g}")
        return
    actor, _ = _load_ckpt(ctx, SFT_CKPT, "SFT checkpoint (run 'train --phase sft' first)")
    res = pipeline.train_agent_cql(prof, std, actor, n)
    rmap = {"low": res.reward_map.low, "scale": res.reward_map.scale}
    _save_ckpt(ctx, ACTOR_CKPT, res.actor, {"phase": "cql", "reward_map": rmap, **stats})
    _save_ckpt(ctx, CRITIC_CKPT, res.critic, {"phase": "cql", "reward_map": rmap})
    keys = ["step", "loss", "mean_q", "penalty", "actor_q"]
    ctx.wrote("agent/cql_loss.csv", write_csv(ctx.path("agent/cql_loss.csv"), keys, curve_rows(res.curve, keys)))
    ctx.manifest("train-cql", {"transitions": len(build_transitions(std)), "reward_map": rmap})
    print(f"CQL loss {res.curve[0]['loss']:.4g} -> {res.curve[-1]['loss']:.4g}")


def _guide_config(ctx: Context):
    cfg = pipeline.resolve(ctx.profile).guide
    return dataclasses.replace(cfg, space=SpaceMode(ctx.args.space))


def _write_run(ctx: Context, name: str, report, env) -> dict:
    rel = f"reports/{name}"
    hashes = write_report(ctx.path(rel), report, env.eval_sets.names, seed=ctx.profile.seed)
    for k, v in hashes.items():
        ctx.wrote(f"{rel}/{k}", v)
    return report.summary()


def cmd_guide(ctx: Context) -> None:
    rel = {"rl": ACTOR_CKPT, "sft": SFT_CKPT}[ctx.args.agent] if not ctx.args.checkpoint else None
    if ctx.args.checkpoint:
        p = Path(ctx.args.checkpoint)
        if not p.is_file():
            raise CheckpointInvalid(f"agent checkpoint not found: {p}")
        ctx.inputs[str(p)] = sha256_file(p)
        actor, _ = load_params(p)
    else:
        actor, _ = _load_ckpt(ctx, rel, "agent checkpoint")
    env = ctx.env()
    cfg = _guide_config(ctx)
    report = guide_training(agent_policy(actor), env.corpora, env.eval_sets, env.base, cfg,
                            label=f"agent-{ctx.args.agent}")
    name = f"guide-{ctx.args.agent}-{cfg.space.value}"
    summary = _write_run(ctx, name, report, env)
    ctx.manifest(f"guide-{ctx.args.agent}-{cfg.space.value}", {"summary": summary})
    _print_summary(summary, env.eval_sets.names)


def cmd_baseline(ctx: Context) -> None:
    env = ctx.env()
    cfg = _guide_config(ctx)
    prof = pipeline.resolve(ctx.profile)
    modes = [m.value for m in BaselineMode] if ctx.args.mode == "all" else [ctx.args.mode]
    summaries = {}
    for m in modes:
        mode = BaselineMode(m)
        mixture = None
        extra = {}
        if mode is BaselineMode.STATIC:
            mixture = pipeline.static_mixture(prof, env)
        elif mode is BaselineMode.REGMIX:
            mixture, fit = fit_regmix_mixture(env.corpora, env.eval_sets, env.base, prof.regmix.mixtures,
                                              prof.regmix.steps, cfg.samples_per_step,
                                              pipeline.derive_seed(prof.seed, "regmix"),
                                              cfg.space is SpaceMode.FIELDS)
            extra = {"coefficients": fit.coef.tolist(), "fitted_mixture": fit.mixture.tolist()}
        report = run_baseline(mode, env.corpora, env.eval_sets, env.base, cfg, mixture)
        summaries[m] = {**_write_run(ctx, f"baseline-{m}-{cfg.space.value}", report, env), **extra}
        _print_summary(summaries[m], env.eval_sets.names)
    ctx.manifest(f"baseline-{ctx.args.mode}-{cfg.space.value}", {"summaries": summaries})


def _print_summary(s: dict, names) -> None:
    fin = ", ".join(f"{n} {v:.4f}" for n, v in zip(names, s["final_feedback"]))
    stop = f"early stop at {s['early_stop']}" if s["early_stop"] else "budget exhausted"
    print(f"{s['label']}: {s['steps']} steps ({stop}); final {fin}; source samples {s['source_samples']}")


def _domain_names(ctx: Context, n: int) -> list[str]:
    env_doc = ctx.path(ENV_FILE)
    if env_doc.is_file():
        names = DomainSpace.from_dict(read_json(env_doc)["space"]).names
        if len(names) == n:
            return list(names)
    return [f"d{i}" for i in range(n)]


def cmd_analyze(ctx: Context) -> None:
    src = Path(ctx.args.path)
    if src.is_dir():
        trajs = [read_report(src)["trajectory"]]
        names = list(DomainSpace.from_dict(read_json(src / "summary.json")["space"]).names)
    elif src.is_file():
        trajs = read_trajectories(src)
        names = None
    else:
        raise DataError(f"no such corpus or report: {src}")
    ctx.inputs[str(src)] = sha256_file(src) if src.is_file() else "directory"
    if not trajs:
        raise DataError("corpus is empty")
    n = trajs[0].n
    if names is None:
        names = _domain_names(ctx, n)
    res = analysis.analyze_trajectories(trajs, ctx.args.field)
    rows = []
    for side in ("increase", "decrease"):
        mean = getattr(res, side)
        count = getattr(res, f"n_{side}")
        for i, name in enumerate(names):
            rows.append([name, side, None if mean is None else float(mean[i]), count, int(mean is None)])
    out = Path(ctx.args.out) if ctx.args.out else ctx.path(f"analysis/field{ctx.args.field}.csv")
    ctx.wrote(str(out), write_csv(out, ["domain", "side", "mean_weight", "steps", "empty"], rows))
    ctx.manifest(f"analyze-field{ctx.args.field}", {"n_increase": res.n_increase, "n_decrease": res.n_decrease,
                                                    "n_zero": res.n_zero})
    for side in ("increase", "decrease"):
        if getattr(res, side) is None:
            print(f"warning: empty {side} partition", file=sys.stderr)
    print(f"field {ctx.args.field}: {res.n_increase} increasing, {res.n_decrease} decreasing, "
          f"{res.n_zero} unchanged steps -> {out}")


def _read_numbers(path) -> list[float]:
    text = Path(path).read_text().strip()
    if not text:
        return []
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_estimate_start(ctx: Context) -> None:
    src = Path(ctx.args.path)
    if not src.is_file():
        raise DataError(f"no such file: {src}")
    ctx.inputs[str(src)] = sha256_file(src)
    values = _read_numbers(src)
    if ctx.args.labels:
        n = ctx.args.domains or (int(max(values)) + 1 if values else 0)
        if n == 0:
            raise EmptySample("no samples")
        counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=n)
    else:
        counts = np.asarray(values)
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise DataError("counts must be non-negative integers")
    est = estimate_state_from_counts(counts.astype(np.int64))
    out_dir = Path(ctx.args.out) if ctx.args.out else ctx.path("start")
    result = {"counts": counts.astype(int).tolist(), "estimate": est.to_list()}
    if ctx.args.truth:
        truth = validate_distribution(_json_list(ctx.args.truth, "--truth"), est.n).weights
        result["kl_to_truth"] = kl_divergence(est.weights, truth)
        grid, med = kl_curve(truth, ctx.args.grid, ctx.args.trials, ctx.profile.seed)
        ctx.wrote(str(out_dir / "kl_curve.csv"),
                  write_csv(out_dir / "kl_curve.csv", ["samples", "median_kl"], zip(grid, med)))
    ctx.wrote(str(out_dir / "start.json"), write_json(out_dir / "start.json", result))
    ctx.manifest("estimate-start")
    print("start state: [" + ", ".join(f"{w:.6f}" for w in est.weights) + "]")


def kl_curve(truth: np.ndarray, grid, trials: int, seed: int):
    """Median KL(estimate || truth) over ``trials`` multinomial draws per sample size."""
    rng = np.random.default_rng(pipeline.derive_seed(seed, "estimate-start"))
    med = []
    for n in grid:
        kls = [kl_divergence(estimate_state_from_counts(rng.multinomial(n, truth)).weights, truth)
               for _ in range(trials)]
        med.append(float(np.median(kls)))
    return list(grid), med


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixagent", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"mixagent {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML config (default: the one saved by gen-env, else the desk profile)")
        p.add_argument("--profile", choices=["desk", "full"], help="named profile when no config is given")
        p.add_argument("--workdir", help="artifact directory (env MIXAGENT_WORKDIR)")
        p.set_defaults(func=func)
        return p

    add("gen-env", cmd_gen_env, "write the seeded environment spec and evaluation sets")
    p = add("sample", cmd_sample, "sample the four top-K trajectory tiers")
    p.add_argument("--start", help="override start state as a JSON list")
    p = add("collect", cmd_collect, "attach proxy feedback to every sampled trajectory")
    p.add_argument("--workers", type=int, help="parallel rollouts (env MIXAGENT_WORKERS)")
    p.add_argument("--resume", action="store_true", help="keep trajectories already collected")
    p = add("train", cmd_train, "train the agent")
    p.add_argument("--phase", choices=["sft", "cql"], required=True)
    for name, func, help_ in (("guide", cmd_guide, "agent-guided continual training"),
                              ("baseline", cmd_baseline, "fixed-mixture baselines")):
        p = add(name, func, help_)
        p.add_argument("--space", choices=[m.value for m in SpaceMode], default="native")
        if name == "guide":
            p.add_argument("--agent", choices=["rl", "sft"], default="rl")
            p.add_argument("--checkpoint", help="explicit actor checkpoint")
        else:
            p.add_argument("--mode", choices=[m.value for m in BaselineMode] + ["all"], default="all")
    p = add("analyze", cmd_analyze, "mean mixtures of score-raising vs score-lowering steps")
    p.add_argument("path", help="trajectory JSONL or report directory")
    p.add_argument("--field", type=int, default=0)
    p.add_argument("--out")
    p = add("estimate-start", cmd_estimate_start, "start state from per-domain counts")
    p.add_argument("path", help="counts (JSON list or whitespace separated) or domain labels with --labels")
    p.add_argument("--labels", action="store_true", help="file holds one domain index per sample")
    p.add_argument("--domains", type=int, help="number of domains for --labels input")
    p.add_argument("--truth", help="known generator mixture as a JSON list; adds a KL curve")
    p.add_argument("--grid", type=lambda s: [int(v) for v in s.split(",")], default=[500, 1000, 2000, 3000, 5000])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        args.func(ctx)
    except MixAgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, OverflowError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
