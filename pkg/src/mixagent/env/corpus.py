"""Seeded synthetic multi-domain corpus built from per-domain bigram chains."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..core import DomainSpace, check_simplex_rows, kl_divergence
from ..errors import DimensionMismatch, ExhaustedPool, SpecInvalid

MIN_PAIRWISE_KL = 0.1


@dataclass(frozen=True)
class CorpusSpec:
    n_source: int = 4
    n_target: int = 4
    vocab: int = 64
    seq_len: int = 12
    pool_size: int = 40 * 4096  # training sequences per domain; one full guided run from a single domain
    heldout_size: int = 2000  # held-out sequences per domain
    concentration: float = 0.2  # Dirichlet concentration of bigram rows (lower = peakier)
    domain_mix: float = 0.35  # weight of the per-domain table against the field table
    tilt: float = 1.0  # strength of per-domain unigram preference
    source_mix: tuple[float, ...] | None = None  # field proportions; drawn from seed when None
    target_mix: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_source < 1 or self.n_target < 1:
            raise SpecInvalid("need at least one source and one target domain")
        if not 2 <= self.vocab <= 255:
            raise SpecInvalid("vocab must be in [2, 255]")
        if self.seq_len < 2 or self.pool_size < 1 or self.heldout_size < 1:
            raise SpecInvalid("seq_len >= 2 and positive pool sizes required")
        if self.concentration <= 0 or not 0 <= self.domain_mix <= 1 or self.tilt < 0:
            raise SpecInvalid("bad generator shape parameters")
        for mix, k in ((self.source_mix, self.n_source), (self.target_mix, self.n_target)):
            if mix is not None:
                m = np.asarray(mix, dtype=float)
                if m.shape != (k,) or np.any(m < 0) or abs(m.sum() - 1) > 1e-9:
                    raise SpecInvalid("field mixes must be simplex points of matching size")

    @property
    def space(self) -> DomainSpace:
        return DomainSpace.from_counts(self.n_source, self.n_target)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("source_mix", "target_mix"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        for k in ("source_mix", "target_mix"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecInvalid(str(exc)) from exc

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class DomainCorpora:
    spec: CorpusSpec
    space: DomainSpace
    transitions: np.ndarray  # (N, V, V) row-stochastic
    initial: np.ndarray  # (N, V) first-token distribution
    train: list[np.ndarray]  # per domain (pool_size, seq_len) uint8
    heldout: list[np.ndarray]
    source_mix: np.ndarray
    target_mix: np.ndarray
    _trans_cdf: np.ndarray = field(repr=False, default=None)
    _init_cdf: np.ndarray = field(repr=False, default=None)

    @property
    def vocab(self) -> int:
        return self.spec.vocab

    def unigram(self) -> np.ndarray:
        """Stationary token distribution of each domain's chain, (N, V)."""
        return np.array([_stationary(t) for t in self.transitions])

    def start_state(self) -> np.ndarray:
        out = np.zeros(self.space.n)
        out[self.space.source_index] = self.source_mix
        return out

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.transitions.tobytes())
        h.update(self.initial.tobytes())
        for arr in self.train + self.heldout:
            h.update(arr.tobytes())
        return h.hexdigest()


def _stationary(trans: np.ndarray, iters: int = 500) -> np.ndarray:
    v = trans.shape[0]
    pi = np.full(v, 1.0 / v)
    for _ in range(iters):
        pi = pi @ trans
    return pi / pi.sum()


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _draw_tables(spec: CorpusSpec, rng: np.random.Generator):
    v, n = spec.vocab, spec.n_source + spec.n_target
    fields = [0] * spec.n_source + [1] * spec.n_target
    field_tables = rng.dirichlet(np.full(v, spec.concentration), size=(2, v))
    tables = np.empty((n, v, v))
    for d in range(n):
        own = rng.dirichlet(np.full(v, spec.concentration), size=v)
        t = (1.0 - spec.domain_mix) * field_tables[fields[d]] + spec.domain_mix * own
        pref = np.exp(spec.tilt * rng.normal(size=v))
        t = t * pref[None, :]
        tables[d] = t / t.sum(axis=1, keepdims=True)
    return tables


def generate_corpus(spec: CorpusSpec, max_tries: int = 20) -> DomainCorpora:
    """Deterministic corpus for ``spec``; generator tables are redrawn until domains separate."""
    space = spec.space
    root = np.random.SeedSequence(spec.seed)
    table_seq, mix_seq, pool_seq = root.spawn(3)
    trng = np.random.default_rng(table_seq)
    for _ in range(max_tries):
        tables = _draw_tables(spec, trng)
        uni = np.array([_stationary(t) for t in tables])
        if pairwise_kl(uni).min() > MIN_PAIRWISE_KL:
            break
    else:
        raise SpecInvalid("could not draw domains with pairwise unigram KL > 0.1; raise tilt")
    mrng = np.random.default_rng(mix_seq)
    src = np.asarray(spec.source_mix, float) if spec.source_mix else mrng.dirichlet(np.full(spec.n_source, 4.0))
    tgt = np.asarray(spec.target_mix, float) if spec.target_mix else mrng.dirichlet(np.full(spec.n_target, 4.0))
    trans_cdf = _cdf(tables)
    init_cdf = _cdf(uni)
    train, held = [], []
    for d, s in enumerate(pool_seq.spawn(space.n)):
        prng = np.random.default_rng(s)
        total = spec.pool_size + spec.heldout_size
        u = prng.random((total, spec.seq_len))
        seqs = kernels.markov_sample(init_cdf, trans_cdf, np.full(total, d, dtype=np.int64), u).astype(np.uint8)
        train_d, held_d = seqs[: spec.pool_size], seqs[spec.pool_size:]
        # keep held-out sequences disjoint from the training pool
        seen = {row.tobytes() for row in train_d}
        keep = np.array([row.tobytes() not in seen for row in held_d], dtype=bool)
        train.append(train_d)
        held.append(held_d[keep])
    return DomainCorpora(spec, space, tables, uni, train, held, src, tgt, trans_cdf, init_cdf)


def pairwise_kl(unigrams: np.ndarray) -> np.ndarray:
    """Off-diagonal KL matrix (diagonal set to +inf)."""
    n = unigrams.shape[0]
    out = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = kl_divergence(unigrams[i], unigrams[j])
    return out


class PoolCursor:
    """Per-rollout read position into each domain's training pool."""

    def __init__(self, corpora: DomainCorpora, offset: int = 0):
        self.corpora = corpora
        self.pos = np.full(corpora.space.n, offset, dtype=np.int64)

    def take(self, domain: int, count: int) -> np.ndarray:
        pool = self.corpora.train[domain]
        lo = self.pos[domain]
        if lo + count > pool.shape[0]:
            raise ExhaustedPool(f"domain {self.corpora.space.names[domain]} pool exhausted")
        self.pos[domain] = lo + count
        return pool[lo:lo + count]


def sample_domains(dist, r: int, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(dist, dtype=np.float64)
    check_simplex_rows(w[None, :])
    return rng.choice(w.shape[0], size=r, p=w / w.sum())


def sample_batch(corpora: DomainCorpora, dist, r: int, rng: np.random.Generator,
                 cursor: PoolCursor | None = None) -> tuple[np.ndarray, np.ndarray]:
    """R sequences whose domains are drawn i.i.d. from ``dist``.

    Returns ``(tokens, domains)``; tokens has shape (R, seq_len). Sequences
    are read in order from the pools through ``cursor`` (a fresh one if None).
    """
    w = np.asarray(dist, dtype=np.float64)
    if w.shape != (corpora.space.n,):
        raise DimensionMismatch("distribution does not match the corpus domain space")
    if r == 0:
        return np.zeros((0, corpora.spec.seq_len), dtype=np.uint8), np.zeros(0, dtype=np.int64)
    doms = sample_domains(w, r, rng)
    cursor = cursor or PoolCursor(corpora)
    out = np.empty((r, corpora.spec.seq_len), dtype=np.uint8)
    for d in np.unique(doms):
        sel = np.flatnonzero(doms == d)
        out[sel] = cursor.take(int(d), sel.size)
    return out, doms
