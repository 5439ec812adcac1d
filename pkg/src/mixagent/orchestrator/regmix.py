"""Regression-based mixture search: proxy runs on random mixtures, linear fit, simplex argmax."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import DomainSpace, expand_from_fields, validate_distribution
from ..env.corpus import DomainCorpora, PoolCursor, sample_batch
from ..env.feedback import BaseModel, EvalSet, feedback
from ..env.proxy import train_step
from ..errors import DegenerateDesign, DimensionMismatch, TooFewSamples

TIE_TOL = 1e-12


@dataclass
class RegMixFit:
    coef: np.ndarray  # (N, D): per-field linear coefficients over mixture weights
    objective: np.ndarray  # (N,): lambda-combined coefficients
    mixture: np.ndarray  # chosen simplex point


def fit_linear(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of y (S, D) on mixtures x (S, N), no intercept.

    Mixture rows sum to one, so a constant column would be collinear with
    them; the per-field intercept is absorbed into the coefficients.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch("mixtures and scores differ in count")
    s, n = x.shape
    if s < n + 1:
        raise TooFewSamples(f"need at least {n + 1} samples, got {s}")
    if np.linalg.matrix_rank(x) < n:
        raise DegenerateDesign("mixture design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    return coef


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - (css - 1.0) / k > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def maximize_on_simplex(c: np.ndarray, iters: int = 500, lr: float = 0.1) -> np.ndarray:
    """Argmax of c . w over the simplex.

    Projected gradient ascent from the uniform point, then re-ranking against
    the vertices; the first best candidate wins. A flat objective keeps the
    uniform point, and ties between vertices leave the ascent on the
    barycenter of the tied face.
    """
    n = c.shape[0]
    uniform = np.full(n, 1.0 / n)
    if np.ptp(c) <= TIE_TOL * max(1.0, np.abs(c).max()):
        return uniform
    w = uniform.copy()
    step = lr / max(np.abs(c).max(), 1e-300)
    for _ in range(iters):
        w = project_simplex(w + step * c)
    w = np.where(w < 1e-15, 0.0, w)
    w = w / w.sum()
    cands = [w, uniform] + [np.eye(n)[i] for i in range(n)]
    vals = np.array([c @ x for x in cands])
    best = int(np.flatnonzero(vals >= vals.max() - TIE_TOL * max(1.0, abs(vals.max())))[0])
    return cands[best]


def regmix_fit(mixtures, scores, lam=None) -> RegMixFit:
    """Fit per-field linear models and return the mixture maximizing the lambda combination."""
    x = np.asarray(mixtures, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    coef = fit_linear(x, y)
    lam = np.full(y.shape[1], 1.0 / y.shape[1]) if lam is None else np.asarray(lam, dtype=np.float64)
    if lam.shape != (y.shape[1],):
        raise DimensionMismatch("lambda length differs from the number of fields")
    obj = coef @ lam
    w = maximize_on_simplex(obj)
    return RegMixFit(coef, obj, validate_distribution(w, x.shape[1]).weights)


def regmix_samples(
    corpora: DomainCorpora,
    eval_sets: EvalSet,
    base: BaseModel,
    count: int = 64,
    steps: int = 10,
    samples_per_step: int = 4096,
    seed: int = 0,
    fields: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Final feedback of short proxy runs, each on one flat-Dirichlet mixture.

    With ``fields`` the mixtures live on the 2-dim Source/Target space and are
    spread over domains by the empirical within-field mix.
    """
    space: DomainSpace = corpora.space
    root = np.random.SeedSequence(seed, spawn_key=(0x72656778,))
    mix_rng = np.random.default_rng(root.spawn(1)[0])
    dim = 2 if fields else space.n
    mixes = mix_rng.dirichlet(np.ones(dim), size=count)
    out = []
    for i, m in enumerate(mixes):
        native = expand_from_fields(m, space, corpora.source_mix, corpora.target_mix) if fields else m
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x72656778, i + 1)))
        cursor = PoolCursor(corpora)
        cursor.pos = base.cursor_pos.copy()
        learner = base.learner
        for _ in range(steps):
            batch, _ = sample_batch(corpora, native, samples_per_step, rng, cursor)
            learner, _ = train_step(learner, batch)
        out.append(feedback(learner, eval_sets).scores)
    return mixes, np.array(out)


def fit_regmix_mixture(corpora, eval_sets, base, count=64, steps=10, samples_per_step=4096, seed=0,
                       fields=False, lam=None) -> tuple[np.ndarray, RegMixFit]:
    """Native distribution chosen by the regression baseline, plus the fit."""
    mixes, scores = regmix_samples(corpora, eval_sets, base, count, steps, samples_per_step, seed, fields)
    fit = regmix_fit(mixes, scores, lam)
    native = expand_from_fields(fit.mixture, corpora.space, corpora.source_mix, corpora.target_mix) \
        if fields else fit.mixture
    return native, fit


def grid_argmax(c: Sequence[float], resolution: int = 20) -> np.ndarray:
    """Best point of c . w over the simplex lattice with the given resolution."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    best, best_val = None, -np.inf

    def rec(prefix, left, k):
        nonlocal best, best_val
        if k == n - 1:
            w = np.array(prefix + [left], dtype=np.float64) / resolution
            v = float(c @ w)
            if v > best_val + TIE_TOL:
                best, best_val = w, v
            return
        for i in range(left + 1):
            rec(prefix + [i], left - i, k + 1)

    rec([], resolution, 0)
    return best
