"""End-to-end stages shared by the command line and the acceptance suite."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .agent.actor import TrainResult, train_sft
from .agent.cql import CqlResult, build_transitions, train_cql
from .config import NetConfig, Profile
from .core import DomainSpace, TrajectoryRecord, make_target_state
from .env.corpus import DomainCorpora, generate_corpus
from .env.feedback import BaseModel, CollectConfig, EvalSet, collect_feedback, make_eval_sets, pretrain_base, \
    standardize_corpus
from .nn.decoder import ArchDescriptor, NetworkParams
from .orchestrator.guide import (
    BaselineMode,
    RunReport,
    SpaceMode,
    agent_policy,
    field_balanced,
    guide_training,
    run_baseline,
)
from .orchestrator.regmix import RegMixFit, fit_regmix_mixture
from .sampler import TrajectorySet, sample_trajectories


def derive_seed(master: int, *keys) -> int:
    """Named sub-stream seed: a hash of the master seed and a key path."""
    tag = "/".join([str(int(master))] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little") >> 1


def resolve(profile: Profile) -> Profile:
    """Fill every per-stage seed from the master seed."""
    m = profile.seed
    return dataclasses.replace(
        profile,
        corpus=dataclasses.replace(profile.corpus, seed=derive_seed(m, "env")),
        sft=dataclasses.replace(profile.sft, seed=derive_seed(m, "agent", "sft")),
        cql=dataclasses.replace(profile.cql, seed=derive_seed(m, "agent", "cql")),
        guide=dataclasses.replace(profile.guide, seed=derive_seed(m, "guide")),
    )


@dataclass
class Env:
    corpora: DomainCorpora
    eval_sets: EvalSet
    base: BaseModel
    start: np.ndarray
    target: np.ndarray

    @property
    def space(self) -> DomainSpace:
        return self.corpora.space


def build_env(profile: Profile) -> Env:
    p = resolve(profile)
    corpora = generate_corpus(p.corpus)
    evals = make_eval_sets(corpora, p.eval.pairs, p.eval.prompt_len, seed=derive_seed(p.seed, "eval"))
    start = corpora.start_state()
    target = make_target_state(start, corpora.target_mix, corpora.space).weights
    base = pretrain_base(corpora, start, p.proxy, p.base.steps, p.base.samples, derive_seed(p.seed, "proxy", "base"))
    return Env(corpora, evals, base, start, target)


def sample_corpus(profile: Profile, env: Env) -> list[TrajectorySet]:
    """One sampling run per top-K tier."""
    s = profile.sampling
    sets: list[TrajectorySet] = []
    shared: list[TrajectoryRecord] = []
    for k in s.tiers:
        cfg = s.sampler(k, derive_seed(profile.seed, "sampler", k))
        ts = sample_trajectories(cfg, env.start, env.target, env.space, prior=shared if s.share_across_runs else ())
        ts.tier = f"top{k}"
        for t in ts.trajectories:
            t.provenance["tier"] = ts.tier
        shared.extend(ts.trajectories)
        sets.append(ts)
    return sets


def collect_config(profile: Profile) -> CollectConfig:
    return CollectConfig(samples_per_step=profile.sampling.samples_per_step, proxy=profile.proxy,
                         base_steps=profile.base.steps, base_samples=profile.base.samples,
                         proxy_seed=derive_seed(profile.seed, "proxy"))


def collect(profile: Profile, env: Env, trajectories: Sequence[TrajectoryRecord], workers: int = 1):
    return collect_feedback(trajectories, env.corpora, env.eval_sets, collect_config(profile), workers, env.base)


def standardized_copies(trajectories: Sequence[TrajectoryRecord]):
    """Trajectories whose feedback is z-scored over the whole corpus, plus the statistics."""
    rows, mean, std = standardize_corpus(trajectories)
    return [t.with_feedback(r) for t, r in zip(trajectories, rows)], mean, std


def _desc(net: NetConfig, d_in: int, d_out: int, head: str) -> ArchDescriptor:
    return ArchDescriptor(layers=net.layers, d_model=net.d_model, heads=net.heads, d_in=d_in, d_out=d_out,
                          max_len=net.max_len, ff_mult=net.ff_mult, head=head)


def actor_descriptor(profile: Profile, n: int, n_fields: int) -> ArchDescriptor:
    return _desc(profile.actor, n + n_fields, n, "softmax")


def critic_descriptor(profile: Profile, n: int) -> ArchDescriptor:
    return _desc(profile.critic, n, 1, "sigmoid")


def top1(trajectories: Sequence[TrajectoryRecord]) -> list[TrajectoryRecord]:
    return [t for t in trajectories if t.provenance.get("tier") == "top1"]


def train_agent_sft(profile: Profile, standardized: Sequence[TrajectoryRecord], n: int, n_fields: int) -> TrainResult:
    p = resolve(profile)
    return train_sft(top1(standardized), actor_descriptor(p, n, n_fields), p.sft)


def train_agent_cql(profile: Profile, standardized: Sequence[TrajectoryRecord], actor: NetworkParams,
                    n: int) -> CqlResult:
    p = resolve(profile)
    return train_cql(actor, build_transitions(standardized), p.cql, critic_descriptor(p, n))


@dataclass
class Comparison:
    reports: dict[str, RunReport]
    regmix: RegMixFit

    def final(self, label: str) -> np.ndarray:
        return self.reports[label].final

    def combined(self, label: str) -> float:
        return self.reports[label].combined()


def static_mixture(profile: Profile, env: Env) -> np.ndarray:
    return field_balanced(env.corpora, profile.baselines.static_target_share)


def compare(profile: Profile, env: Env, actors: dict[str, object], space: SpaceMode | str | None = None,
            baselines: Sequence[str] = ("naive", "static", "regmix")) -> Comparison:
    """Guided runs for each actor plus the fixed-mixture baselines, on one shared base learner."""
    p = resolve(profile)
    cfg = p.guide if space is None else dataclasses.replace(p.guide, space=SpaceMode(space))
    fields = cfg.space is SpaceMode.FIELDS
    reports: dict[str, RunReport] = {}
    for label, actor in actors.items():
        reports[label] = guide_training(agent_policy(actor), env.corpora, env.eval_sets, env.base, cfg, label=label)
    fit = None
    for b in baselines:
        mode = BaselineMode(b)
        mixture = None
        if mode is BaselineMode.STATIC:
            mixture = static_mixture(p, env)
        elif mode is BaselineMode.REGMIX:
            mixture, fit = fit_regmix_mixture(env.corpora, env.eval_sets, env.base, p.regmix.mixtures,
                                              p.regmix.steps, cfg.samples_per_step,
                                              derive_seed(p.seed, "regmix"), fields)
        reports[mode.value] = run_baseline(mode, env.corpora, env.eval_sets, env.base, cfg, mixture)
    return Comparison(reports, fit)


@dataclass
class PipelineResult:
    env: Env
    trajectories: list[TrajectoryRecord]  # raw feedback
    standardized: list[TrajectoryRecord]
    sft: TrainResult
    cql: CqlResult
    comparison: Comparison | None


def run_pipeline(profile: Profile, workers: int = 1, evaluate: bool = True) -> PipelineResult:
    env = build_env(profile)
    sets = sample_corpus(profile, env)
    trajs = collect(profile, env, [t for s in sets for t in s.trajectories], workers)
    std, _, _ = standardized_copies(trajs)
    n, d = env.space.n, len(env.eval_sets)
    sft = train_agent_sft(profile, std, n, d)
    cql = train_agent_cql(profile, std, sft.params, n)
    comp = compare(profile, env, {"agent_rl": cql.actor, "agent_sft": sft.params}) if evaluate else None
    return PipelineResult(env, trajs, std, sft, cql, comp)
