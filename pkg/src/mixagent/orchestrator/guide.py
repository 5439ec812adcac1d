"""Agent-guided continual training and the fixed-mixture baselines that share its loop."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import (
    DomainSpace,
    Field,
    check_simplex_rows,
    expand_from_fields,
    project_to_fields,
    target_mass,
    validate_distribution,
)
from ..env.corpus import DomainCorpora, PoolCursor, sample_batch
from ..env.feedback import BaseModel, EvalSet, feedback, feedback_stats, standardize_rows
from ..env.proxy import ProxyLearner, train_step
from ..errors import ConfigError
from ..io import canonical_json, sha256_bytes
from ..sampler import target_samples_covered

FIELDS_SPACE = DomainSpace(("source", "target"), (Field.SOURCE, Field.TARGET))

# policy(dists (t, N), standardized feedback (t, D)) -> next native distribution (N,)
Policy = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SpaceMode(str, enum.Enum):
    NATIVE = "native"
    FIELDS = "fields"


@dataclass(frozen=True)
class GuidedRunConfig:
    max_steps: int = 40  # M_tgt
    samples_per_step: int = 4096  # R_tgt
    target_pool: int = 20 * 4096  # |T|
    space: SpaceMode = SpaceMode.NATIVE
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1 or self.samples_per_step < 1:
            raise ConfigError("max_steps and samples_per_step must be >= 1")
        if self.target_pool < 0:
            raise ConfigError("target_pool must be >= 0")
        object.__setattr__(self, "space", SpaceMode(self.space))

    def to_dict(self) -> dict:
        return {"max_steps": self.max_steps, "samples_per_step": self.samples_per_step,
                "target_pool": self.target_pool, "space": self.space.value, "seed": self.seed}


@dataclass
class RunReport:
    label: str
    space: DomainSpace  # space the actions are expressed in
    start: np.ndarray
    actions: np.ndarray  # (A, n)
    feedback: np.ndarray  # (A + 1, D) raw scores
    standardized: np.ndarray  # (A + 1, D): each row z-scored against the history up to it
    sampled: np.ndarray  # (A, N) native distribution each batch was drawn from
    coverage: list[int]
    source_samples: list[int]  # cumulative Source-field sequences drawn
    early_stop: int | None
    learner: ProxyLearner
    wall_time: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.actions.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.feedback[-1]

    def combined(self, lam=None) -> float:
        lam = np.full(self.feedback.shape[1], 1.0 / self.feedback.shape[1]) if lam is None else np.asarray(lam)
        return float(lam @ self.final)

    def masses(self) -> np.ndarray:
        """(A + 1, 2) Source/Target mass of the start and every action."""
        dists = np.vstack([self.start[None, :], self.actions])
        return np.array([project_to_fields(d, self.space).weights for d in dists])

    def summary(self) -> dict:
        return {
            "label": self.label,
            "steps": self.steps,
            "early_stop": self.early_stop,
            "coverage": self.coverage,
            "source_samples": self.source_samples[-1] if self.source_samples else 0,
            "final_feedback": self.final.tolist(),
            "start_feedback": self.feedback[0].tolist(),
        }

    def digest(self) -> str:
        """Hash of everything but wall times."""
        doc = {
            "label": self.label, "space": self.space.to_dict(), "start": self.start, "actions": self.actions,
            "feedback": self.feedback, "coverage": self.coverage, "source_samples": self.source_samples,
            "early_stop": self.early_stop, "config": self.config,
            "learner": {k: v for k, v in sorted(self.learner.params.items())},
        }
        return sha256_bytes(canonical_json(doc).encode())


def running_standardized(rows: np.ndarray) -> np.ndarray:
    """Standardize a feedback list against itself (the in-run convention)."""
    mean, std = feedback_stats(rows)
    return standardize_rows(rows, mean, std)


def guide_training(
    policy: Policy,
    corpora: DomainCorpora,
    eval_sets: EvalSet,
    base: BaseModel,
    config: GuidedRunConfig,
    start=None,
    label: str = "agent",
) -> RunReport:
    """Continual training of ``base`` where ``policy`` picks every step's mixture.

    Each step: standardize the feedback list so far, ask the policy for the
    next distribution, draw a batch from it, train once, score, then stop if
    the Target samples drawn so far reach the pool size.
    """
    space = corpora.space
    native_start = corpora.start_state() if start is None else validate_distribution(start, space.n).weights
    fields_mode = config.space is SpaceMode.FIELDS
    report_space = FIELDS_SPACE if fields_mode else space
    src_spread = np.asarray(corpora.source_mix, dtype=np.float64)
    tgt_spread = np.asarray(corpora.target_mix, dtype=np.float64)

    def executed(native: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(action in the report space, native distribution the batch is drawn from)."""
        if not fields_mode:
            return native, native
        two = project_to_fields(native, space).weights
        return two, expand_from_fields(two, space, src_spread, tgt_spread)

    start_action, start_native = executed(native_start)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0x67756964,)))
    cursor = PoolCursor(corpora)
    cursor.pos = base.cursor_pos.copy()
    learner = base.learner

    agent_dists = [start_native]
    actions: list[np.ndarray] = []
    sampled: list[np.ndarray] = []
    raw = [feedback(learner, eval_sets).scores]
    std_rows = [np.zeros_like(raw[0])]
    coverage, source_seen, walls = [], [], []
    covered = src_total = 0
    early = None
    for step in range(1, config.max_steps + 1):
        t0 = time.perf_counter()
        z = running_standardized(np.array(raw))
        proposal = np.asarray(policy(np.array(agent_dists), z), dtype=np.float64)
        validate_distribution(proposal, space.n)
        action, native = executed(proposal)
        batch, doms = sample_batch(corpora, native, config.samples_per_step, rng, cursor)
        learner, _ = train_step(learner, batch)
        raw.append(feedback(learner, eval_sets).scores)
        std_rows.append(running_standardized(np.array(raw))[-1])
        actions.append(action)
        sampled.append(native)
        agent_dists.append(native)
        covered += target_samples_covered(action, config.samples_per_step, report_space)
        src_total += int(np.count_nonzero(space.source_mask[doms]))
        coverage.append(covered)
        source_seen.append(src_total)
        walls.append(time.perf_counter() - t0)
        if covered >= config.target_pool:
            early = step
            break

    acts = np.array(actions)
    check_simplex_rows(acts)
    return RunReport(
        label=label,
        space=report_space,
        start=start_action,
        actions=acts,
        feedback=np.array(raw),
        standardized=np.array(std_rows),
        sampled=np.array(sampled),
        coverage=coverage,
        source_samples=source_seen,
        early_stop=early,
        learner=learner,
        wall_time=walls,
        config=config.to_dict(),
    )


# ---------------------------------------------------------------------------
# policies


def fixed_policy(dist) -> Policy:
    d = np.asarray(dist, dtype=np.float64).copy()
    return lambda dists, z: d


def agent_policy(actor) -> Policy:
    """Wrap an actor (NetworkParams or a history callable) as a guide policy."""
    from ..agent.actor import agent_features, agent_predict

    def policy(dists, z):
        return agent_predict(actor, agent_features(dists, z)).weights

    return policy


class BaselineMode(str, enum.Enum):
    NAIVE = "naive"
    STATIC = "static"
    REGMIX = "regmix"


def field_balanced(corpora: DomainCorpora, target_share: float = 0.5) -> np.ndarray:
    """Source and Target fields in the given proportion, each spread by its empirical mix."""
    out = np.zeros(corpora.space.n)
    out[corpora.space.source_index] = (1.0 - target_share) * np.asarray(corpora.source_mix)
    out[corpora.space.target_index] = target_share * np.asarray(corpora.target_mix)
    return out


def naive_distribution(corpora: DomainCorpora) -> np.ndarray:
    return field_balanced(corpora, 1.0)


def run_baseline(
    mode: BaselineMode | str,
    corpora: DomainCorpora,
    eval_sets: EvalSet,
    base: BaseModel,
    config: GuidedRunConfig,
    mixture=None,
) -> RunReport:
    """The guided loop with the agent replaced by a fixed distribution.

    ``mixture`` is required for the static and regression modes (native space).
    """
    mode = BaselineMode(mode)
    if mode is BaselineMode.NAIVE:
        dist = naive_distribution(corpora)
    else:
        if mixture is None:
            raise ConfigError(f"{mode.value} baseline needs a fixed mixture")
        dist = validate_distribution(mixture, corpora.space.n).weights
    return guide_training(fixed_policy(dist), corpora, eval_sets, base, config, label=mode.value)


def masses_of(dists: Sequence[np.ndarray], space: DomainSpace) -> np.ndarray:
    return np.array([[1.0 - target_mass(d, space), target_mass(d, space)] for d in dists])
