"""Evaluation sets, per-field scoring, standardization and feedback collection."""
from __future__ import annotations

import enum
import hashlib
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import FeedbackVector, TrajectoryRecord
from ..errors import DimensionMismatch, EmptyEvalSet, EmptyHistory
from .corpus import DomainCorpora, PoolCursor, sample_batch
from .proxy import ProxyConfig, ProxyLearner, init_learner, train_step

STD_FLOOR = 1e-12


@dataclass
class EvalField:
    """Prompt/response pairs of one evaluation field."""

    name: str
    prompts: list[np.ndarray]
    responses: list[np.ndarray]
    _index: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.prompts) != len(self.responses):
            raise DimensionMismatch("prompts and responses differ in count")
        for q, r in zip(self.prompts, self.responses):
            if len(q) < 1 or len(r) < 1:
                raise EmptyEvalSet("every pair needs a non-empty prompt and response")

    def __len__(self):
        return len(self.prompts)

    def flat_index(self):
        """(context tokens, next tokens, pair id, response lengths) for vectorized scoring."""
        if self._index is None:
            ctx, nxt, pid = [], [], []
            for j, (q, r) in enumerate(zip(self.prompts, self.responses)):
                seq = np.concatenate([np.asarray(q)[-1:], np.asarray(r)]).astype(np.int64)
                ctx.append(seq[:-1])
                nxt.append(seq[1:])
                pid.append(np.full(len(r), j))
            lengths = np.array([len(r) for r in self.responses], dtype=np.float64)
            self._index = (np.concatenate(ctx), np.concatenate(nxt), np.concatenate(pid), lengths)
        return self._index


@dataclass
class EvalSet:
    fields: list[EvalField]

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def __len__(self):
        return len(self.fields)


def make_eval_sets(corpora: DomainCorpora, pairs: int = 128, prompt_len: int = 4, seed: int = 0) -> EvalSet:
    """General field from source domains (source mix), target field from target domains."""
    space = corpora.space
    rng = np.random.default_rng(seed)
    out = []
    for name, idx, mix in (("general", space.source_index, corpora.source_mix),
                           ("target", space.target_index, corpora.target_mix)):
        doms = rng.choice(idx, size=pairs, p=np.asarray(mix) / np.sum(mix))
        prompts, responses = [], []
        used = {int(d): 0 for d in idx}
        for d in doms:
            seq = corpora.heldout[int(d)][used[int(d)]]
            used[int(d)] += 1
            prompts.append(seq[:prompt_len].astype(np.int64))
            responses.append(seq[prompt_len:].astype(np.int64))
        out.append(EvalField(name, prompts, responses))
    return EvalSet(out)


def score(learner: ProxyLearner, eval_field: EvalField, log_probs: np.ndarray | None = None) -> float:
    """Mean over pairs of the length-normalized response log-probability (nats)."""
    if len(eval_field) == 0:
        raise EmptyEvalSet(f"field {eval_field.name!r} has no pairs")
    lp = learner.log_probs() if log_probs is None else log_probs
    ctx, nxt, pid, lengths = eval_field.flat_index()
    per_pair = np.bincount(pid, weights=lp[ctx, nxt], minlength=len(lengths)) / lengths
    return float(np.mean(per_pair))


def feedback(learner: ProxyLearner, eval_sets: EvalSet) -> FeedbackVector:
    lp = learner.log_probs()
    return FeedbackVector(np.array([score(learner, f, lp) for f in eval_sets.fields]))


class StandardizeMode(str, enum.Enum):
    CORPUS_WIDE = "corpus_wide"
    RUNNING_LIST = "running_list"


def feedback_stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-field mean and population std with the unit fallback for flat fields."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyHistory("need at least one feedback row")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def standardize_rows(rows: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (np.asarray(rows, dtype=np.float64) - mean) / std


def standardize_feedback(history: Sequence[FeedbackVector] | np.ndarray,
                         mode: StandardizeMode = StandardizeMode.CORPUS_WIDE) -> list[FeedbackVector]:
    """Z-score every field over ``history``.

    Both modes apply the same arithmetic; they differ in what the caller
    passes: every step of every trajectory (corpus-wide) or the feedback
    seen so far in one run (running list).
    """
    StandardizeMode(mode)
    if len(history) == 0:
        raise EmptyHistory("cannot standardize an empty history")
    rows = np.array([np.asarray(h.scores if isinstance(h, FeedbackVector) else h) for h in history])
    mean, std = feedback_stats(rows)
    return [FeedbackVector(r, standardized=True) for r in standardize_rows(rows, mean, std)]


def standardize_corpus(trajectories: Sequence[TrajectoryRecord]) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Corpus-wide standardized feedback arrays, plus the statistics used."""
    rows = np.vstack([t.require_feedback() for t in trajectories])
    mean, std = feedback_stats(rows)
    return [standardize_rows(t.feedback, mean, std) for t in trajectories], mean, std


# ---------------------------------------------------------------------------
# feedback collection


@dataclass(frozen=True)
class CollectConfig:
    samples_per_step: int = 1024  # R
    proxy: ProxyConfig = ProxyConfig()
    base_steps: int = 30  # pre-training steps of the base proxy on the start state
    base_samples: int = 1024
    proxy_seed: int = 0


@dataclass
class BaseModel:
    learner: ProxyLearner
    cursor_pos: np.ndarray  # pool positions consumed by base pre-training


def pretrain_base(corpora: DomainCorpora, start, proxy: ProxyConfig, steps: int, samples: int,
                  seed: int) -> BaseModel:
    """Fresh learner from ``seed`` trained ``steps`` passes on the start distribution."""
    root = np.random.SeedSequence(seed)
    init_seq, data_seq = root.spawn(2)
    learner = init_learner(corpora.vocab, proxy, int(init_seq.generate_state(1)[0]))
    rng = np.random.default_rng(data_seq)
    cursor = PoolCursor(corpora)
    for _ in range(steps):
        batch, _ = sample_batch(corpora, start, samples, rng, cursor)
        learner, _ = train_step(learner, batch)
    return BaseModel(learner, cursor.pos.copy())


def trajectory_key(traj: TrajectoryRecord, fallback: int) -> int:
    prov = traj.provenance
    tag = f"{prov.get('tier', '')}/{prov.get('index', fallback)}/{prov.get('seed', '')}"
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")


def rollout(traj: TrajectoryRecord, corpora: DomainCorpora, eval_sets: EvalSet, base: BaseModel,
            samples_per_step: int, seed: int, key: int) -> np.ndarray:
    """Train a copy of the base learner along ``traj``; one feedback row per distribution."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
    cursor = PoolCursor(corpora)
    cursor.pos = base.cursor_pos.copy()
    learner = base.learner
    rows = [feedback(learner, eval_sets).scores]
    for action in traj.actions:
        batch, _ = sample_batch(corpora, action, samples_per_step, rng, cursor)
        learner, _ = train_step(learner, batch)
        rows.append(feedback(learner, eval_sets).scores)
    return np.array(rows)


_WORKER_STATE: dict = {}


def _worker(job):
    i, traj = job
    st = _WORKER_STATE
    return i, rollout(traj, st["corpora"], st["eval_sets"], st["base"], st["r"], st["seed"],
                      trajectory_key(traj, i))


def collect_feedback(trajectories: Sequence[TrajectoryRecord], corpora: DomainCorpora, eval_sets: EvalSet,
                     config: CollectConfig, workers: int = 1, base: BaseModel | None = None) -> list[TrajectoryRecord]:
    """Attach raw (unstandardized) feedback to every trajectory.

    Each trajectory is an independent rollout with its own RNG stream, so the
    result does not depend on ``workers``.
    """
    if base is None:
        base = pretrain_base(corpora, trajectories[0].start if trajectories else corpora.start_state(),
                             config.proxy, config.base_steps, config.base_samples, config.proxy_seed)
    jobs = list(enumerate(trajectories))
    results: dict[int, np.ndarray] = {}
    _WORKER_STATE.update(corpora=corpora, eval_sets=eval_sets, base=base,
                         r=config.samples_per_step, seed=config.proxy_seed)
    try:
        if workers > 1 and len(jobs) > 1:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
                for i, rows in ex.map(_worker, jobs):
                    results[i] = rows
        else:
            for job in jobs:
                i, rows = _worker(job)
                results[i] = rows
    finally:
        _WORKER_STATE.clear()
    return [t.with_feedback(results[i]) for i, t in jobs]


def uniform_score(vocab: int) -> float:
    return -math.log(vocab)
