"""Random trajectory sampling steered by top-K inductive scores."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import (
    KL_EPS,
    DomainSpace,
    MixtureDistribution,
    TrajectoryRecord,
    kl_divergence,
    validate_distribution,
)
from .errors import ConfigError, DimensionMismatch, EmptyCandidates, KTooLarge

FULL_TIERS = (1, 100, 1000, 10000)


@dataclass(frozen=True)
class SamplerConfig:
    paths: int = 4  # P
    max_steps: int = 20  # M
    samples_per_step: int = 1024  # R
    top_k: int = 1  # K
    candidate_count: int = 20000
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    target_pool: int | None = None  # |T|; defaults to 50 * R
    seed: int = 0

    def __post_init__(self):
        for name in ("paths", "max_steps", "samples_per_step", "top_k", "candidate_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.top_k > self.candidate_count:
            raise ConfigError("top_k cannot exceed candidate_count")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("inductive weights must be non-negative")

    @property
    def pool(self) -> int:
        return 50 * self.samples_per_step if self.target_pool is None else self.target_pool

    @property
    def tier(self) -> str:
        return f"top{self.top_k}"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["target_pool"] = self.pool
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TrajectorySet:
    trajectories: list[TrajectoryRecord]
    tier: str
    space: DomainSpace
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)


def random_probability(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Flat Dirichlet draw(s) over the n-simplex."""
    if n < 2:
        raise DimensionMismatch("need n >= 2")
    return rng.dirichlet(np.ones(n), size=size)


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def prior_rows(step: int, prior: Sequence[TrajectoryRecord], n: int) -> np.ndarray:
    """Same-step actions of earlier trajectories that reached this step."""
    rows = [t.actions[step] for t in prior if step < t.length]
    return np.array(rows, dtype=np.float64).reshape(-1, n)


def calculate_inductive_score(
    step: int,
    candidate,
    prior: Sequence[TrajectoryRecord],
    current: TrajectoryRecord | None,
    last,
    target,
    weights: tuple[float, float, float] = (1.0, 1.0, 0.5),
) -> float:
    """Scalar inductive score of one candidate (lower is preferred).

    ``current`` is accepted for signature parity with the sampling loop; the
    score only reads ``last``, which is the final distribution of ``current``.
    """
    cand = np.asarray(candidate, dtype=np.float64)
    last = np.asarray(last, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (cand.shape == last.shape == target.shape):
        raise DimensionMismatch("candidate, last action and target differ in dimension")
    alpha, beta, gamma = weights
    s_c = kl_divergence(last, cand)
    s_t = kl_divergence(target, cand)
    rows = prior_rows(step, prior, cand.shape[0])
    s_d = float(np.mean([kl_divergence(r, cand) for r in rows])) if len(rows) else 0.0
    return alpha * s_c + beta * _sigmoid(step / 5.0) * s_t - gamma * s_d


def score_candidates(step, cands, prior_actions, last, target, weights) -> np.ndarray:
    alpha, beta, gamma = weights
    return kernels.inductive_scores(
        cands, np.asarray(last, float), np.asarray(target, float), prior_actions,
        step, alpha, beta, gamma, KL_EPS,
    )


def random_top_k(scores, k: int, rng: np.random.Generator) -> int:
    """Index of a uniform pick among the k lowest scores (ties by lower index)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyCandidates("no candidates")
    if k > scores.size:
        raise KTooLarge(f"K={k} exceeds {scores.size} candidates")
    if k < 1:
        raise KTooLarge("K must be >= 1")
    if k == 1:
        return int(np.argmin(scores))
    order = np.argsort(scores, kind="stable")
    return int(order[rng.integers(k)])


def random_top_k_from(candidates: Sequence[tuple[MixtureDistribution, float]], k: int, rng) -> MixtureDistribution:
    """List-of-pairs front end of :func:`random_top_k`."""
    if not candidates:
        raise EmptyCandidates("no candidates")
    idx = random_top_k([s for _, s in candidates], k, rng)
    return candidates[idx][0]


def target_samples_covered(dist, r: int, space: DomainSpace) -> int:
    w = np.asarray(dist, dtype=np.float64)
    mass = math.fsum(w[space.target_mask])
    return int(math.floor(r * mass + 0.5))


StepHook = Callable[[int, int, np.ndarray, int], None]


def sample_trajectories(
    config: SamplerConfig,
    start,
    target,
    space: DomainSpace,
    prior: Sequence[TrajectoryRecord] = (),
    on_step: StepHook | None = None,
) -> TrajectorySet:
    """Run the sampling loop for ``config.paths`` trajectories.

    ``prior`` holds trajectories from earlier runs that should count toward
    the diversity term; trajectories finished in this run are always added.
    ``on_step(path, step, scores, chosen)`` is called after every selection.
    """
    n = space.n
    start = validate_distribution(start, n).weights
    target = validate_distribution(target, n).weights
    weights = (config.alpha, config.beta, config.gamma)
    rng = np.random.default_rng(config.seed)
    seen: list[TrajectoryRecord] = list(prior)
    out: list[TrajectoryRecord] = []
    chash = config.config_hash()

    for p in range(config.paths):
        last = start
        actions: list[np.ndarray] = []
        covered = 0
        step = 0
        while step < config.max_steps:
            cands = random_probability(n, rng, size=config.candidate_count)
            scores = score_candidates(step, cands, prior_rows(step, seen, n), last, target, weights)
            chosen = random_top_k(scores, config.top_k, rng)
            if on_step is not None:
                on_step(p, step, scores, chosen)
            last = cands[chosen]
            actions.append(last)
            step += 1
            covered += target_samples_covered(last, config.samples_per_step, space)
            if covered >= config.pool:
                break
        rec = TrajectoryRecord(
            start,
            np.array(actions),
            provenance={"seed": config.seed, "tier": config.tier, "index": p, "config_hash": chash},
        )
        seen.append(rec)
        out.append(rec)
    return TrajectorySet(out, config.tier, space, config.to_dict())


def sample_tiers(
    base: SamplerConfig,
    start,
    target,
    space: DomainSpace,
    tiers: Sequence[int] = FULL_TIERS,
    share_across_runs: bool = False,
    seeds: Sequence[int] | None = None,
) -> list[TrajectorySet]:
    """One sampling run per K value; K is clipped to the candidate count."""
    sets = []
    shared: list[TrajectoryRecord] = []
    for i, k in enumerate(tiers):
        seed = base.seed + i if seeds is None else seeds[i]
        cfg = dataclasses.replace(base, top_k=min(k, base.candidate_count), seed=seed)
        ts = sample_trajectories(cfg, start, target, space, prior=shared if share_across_runs else ())
        ts.tier = f"top{k}"
        for t in ts.trajectories:
            t.provenance["tier"] = ts.tier
        shared.extend(ts.trajectories)
        sets.append(ts)
    return sets
