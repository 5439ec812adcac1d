"""Domain spaces, simplex points, trajectories and the divergence used everywhere."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySample,
    InvalidEmpirical,
    MissingFeedback,
    NegativeWeight,
    SpecInvalid,
    SumNotOne,
)

SUM_TOL = 1e-9
KL_EPS = 1e-8
DOMAIN_SPACE_VERSION = 1


class Field(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class DomainSpace:
    """Ordered domains, each tagged with the field it belongs to."""

    names: tuple[str, ...]
    fields: tuple[Field, ...]

    def __post_init__(self):
        if len(self.names) != len(self.fields):
            raise SpecInvalid("names and fields differ in length")
        if len(self.names) < 2:
            raise SpecInvalid("a domain space needs at least two domains")
        if len(set(self.names)) != len(self.names):
            raise SpecInvalid("domain names must be unique")
        object.__setattr__(self, "fields", tuple(Field(f) for f in self.fields))
        if Field.SOURCE not in self.fields or Field.TARGET not in self.fields:
            raise SpecInvalid("need at least one source and one target domain")

    @classmethod
    def from_counts(cls, n_source: int, n_target: int) -> "DomainSpace":
        names = [f"src{i}" for i in range(n_source)] + [f"tgt{i}" for i in range(n_target)]
        fields = [Field.SOURCE] * n_source + [Field.TARGET] * n_target
        return cls(tuple(names), tuple(fields))

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def source_mask(self) -> np.ndarray:
        return np.array([f is Field.SOURCE for f in self.fields])

    @property
    def target_mask(self) -> np.ndarray:
        return np.array([f is Field.TARGET for f in self.fields])

    @property
    def source_index(self) -> np.ndarray:
        return np.flatnonzero(self.source_mask)

    @property
    def target_index(self) -> np.ndarray:
        return np.flatnonzero(self.target_mask)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": DOMAIN_SPACE_VERSION,
            "domains": [{"name": n, "field": f.value} for n, f in zip(self.names, self.fields)],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DomainSpace":
        if doc.get("version") != DOMAIN_SPACE_VERSION:
            raise SpecInvalid(f"unsupported domain space version {doc.get('version')!r}")
        try:
            names = tuple(d["name"] for d in doc["domains"])
            fields = tuple(Field(d["field"]) for d in doc["domains"])
        except (KeyError, ValueError, TypeError) as exc:
            raise SpecInvalid(f"malformed domain space: {exc}") from exc
        return cls(names, fields)


class MixtureDistribution:
    """An immutable point on the probability simplex.

    Construct through :func:`validate_distribution`; the constructor itself
    assumes the weights were already checked.
    """

    __slots__ = ("_w",)

    def __init__(self, weights: np.ndarray):
        w = np.array(weights, dtype=np.float64)
        w.setflags(write=False)
        self._w = w

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def n(self) -> int:
        return self._w.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._w if dtype is None else self._w.astype(dtype)

    def __len__(self):
        return self._w.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MixtureDistribution) or other.n != self.n:
            return NotImplemented
        return bool(np.max(np.abs(self._w - other._w)) <= SUM_TOL)

    def __hash__(self):
        return hash(tuple(np.round(self._w, 9)))

    def __repr__(self):
        return f"MixtureDistribution({np.array2string(self._w, precision=6)})"

    def to_list(self) -> list[float]:
        return [float(x) for x in self._w]


def validate_distribution(raw: Iterable[float] | np.ndarray, n: int) -> MixtureDistribution:
    """Accept ``raw`` as a simplex point of dimension ``n`` or raise; never renormalizes."""
    w = np.asarray(raw, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != n:
        raise DimensionMismatch(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NegativeWeight("weights must be finite")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight at index {int(np.argmin(w))}")
    total = math.fsum(w)
    if abs(total - 1.0) > SUM_TOL:
        raise SumNotOne(f"weights sum to {total!r}")
    return MixtureDistribution(w)


def check_simplex_rows(x: np.ndarray) -> None:
    """Vectorized version of the same check for a (k, n) stack."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise NegativeWeight("rows must be finite and non-negative")
    err = np.abs(x.sum(axis=-1) - 1.0)
    if np.any(err > SUM_TOL):
        raise SumNotOne(f"row sum off by {float(err.max())!r}")


def smooth(w: np.ndarray, eps: float = KL_EPS) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return (1.0 - eps) * w + eps / w.shape[-1]


def kl_divergence(p, q, eps: float = KL_EPS) -> float:
    """KL(p || q) in nats after mixing both arguments with eps of the uniform."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape}")
    ps, qs = smooth(p, eps), smooth(q, eps)
    return float(np.sum(ps * (np.log(ps) - np.log(qs))))


def project_to_fields(dist, space: DomainSpace) -> MixtureDistribution:
    w = np.asarray(dist, dtype=np.float64)
    if w.shape != (space.n,):
        raise DimensionMismatch(f"distribution has {w.shape}, space has {space.n} domains")
    src = math.fsum(w[space.source_mask])
    tgt = math.fsum(w[space.target_mask])
    return MixtureDistribution(np.array([src, tgt]))


def target_mass(dist, space: DomainSpace) -> float:
    return math.fsum(np.asarray(dist, dtype=np.float64)[space.target_mask])


def estimate_state_from_counts(counts: Sequence[int] | np.ndarray) -> MixtureDistribution:
    c = np.asarray(counts)
    if c.ndim != 1 or c.size == 0:
        raise EmptySample("counts must be a non-empty vector")
    if np.any(c < 0):
        raise NegativeWeight("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise EmptySample("all counts are zero")
    return MixtureDistribution(c.astype(np.float64) / float(total))


def make_target_state(start, target_empirical, space: DomainSpace) -> MixtureDistribution:
    """Zero on every source domain, the target-field empirical mix on target domains."""
    s = np.asarray(start, dtype=np.float64)
    if s.shape != (space.n,):
        raise DimensionMismatch("start state does not match the domain space")
    emp = np.asarray(target_empirical, dtype=np.float64)
    idx = space.target_index
    if emp.shape != (idx.size,):
        raise DimensionMismatch(f"expected {idx.size} target weights, got {emp.shape}")
    if np.any(emp < 0) or not np.all(np.isfinite(emp)) or abs(math.fsum(emp) - 1.0) > SUM_TOL:
        raise InvalidEmpirical("target empirical distribution must be a simplex point")
    out = np.zeros(space.n)
    out[idx] = emp
    return MixtureDistribution(out)


def expand_from_fields(two: np.ndarray, space: DomainSpace, source_spread, target_spread) -> np.ndarray:
    """Spread [source mass, target mass] over domains using per-field allocations."""
    two = np.asarray(two, dtype=np.float64)
    out = np.zeros(space.n)
    out[space.source_index] = two[0] * np.asarray(source_spread, dtype=np.float64)
    out[space.target_index] = two[1] * np.asarray(target_spread, dtype=np.float64)
    return out


@dataclass(frozen=True)
class FeedbackVector:
    scores: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise DimensionMismatch("feedback must be a finite vector")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.scores.shape[0]


@dataclass
class TrajectoryRecord:
    """A start state, the actions taken after it, and optional aligned feedback.

    ``feedback`` has one row per distribution (start included) when present.
    """

    start: np.ndarray
    actions: np.ndarray
    feedback: np.ndarray | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        n = self.start.shape[0]
        self.actions = np.asarray(self.actions, dtype=np.float64).reshape(-1, n)
        validate_distribution(self.start, n)
        check_simplex_rows(self.actions)
        if self.feedback is not None:
            fb = np.asarray(self.feedback, dtype=np.float64)
            if fb.ndim != 2 or fb.shape[0] != self.actions.shape[0] + 1:
                raise DimensionMismatch(
                    f"feedback rows {fb.shape} do not match {self.actions.shape[0]} actions + start"
                )
            if not np.all(np.isfinite(fb)):
                raise DimensionMismatch("feedback must be finite")
            self.feedback = fb

    @property
    def n(self) -> int:
        return self.start.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    @property
    def distributions(self) -> np.ndarray:
        """Start followed by actions, shape (length + 1, n)."""
        return np.vstack([self.start[None, :], self.actions])

    def require_feedback(self) -> np.ndarray:
        if self.feedback is None:
            raise MissingFeedback("trajectory has no feedback")
        return self.feedback

    def with_feedback(self, feedback: np.ndarray) -> "TrajectoryRecord":
        return TrajectoryRecord(self.start, self.actions, feedback, dict(self.provenance))


@dataclass(frozen=True)
class Transition:
    """One (s, a, r, s') tuple; states are prefixes of a trajectory.

    ``state_dists`` holds rho_0..rho_{t-1} and ``state_feedback`` their feedback rows.
    ``next_feedback`` is the feedback observed after taking ``action``.
    """

    state_dists: np.ndarray
    state_feedback: np.ndarray
    action: np.ndarray
    reward: float
    next_feedback: np.ndarray
    done: bool
    traj_index: int = -1
    step: int = -1

    @property
    def next_dists(self) -> np.ndarray:
        return np.vstack([self.state_dists, self.action[None, :]])

    @property
    def next_state_feedback(self) -> np.ndarray:
        return np.vstack([self.state_feedback, self.next_feedback[None, :]])
