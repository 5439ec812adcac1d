"""Hot inner loops, each in a numba flavour and a numpy flavour.

The public names dispatch to numba unless ``MIXAGENT_NO_NUMBA=1`` is set (or
numba is missing). Both flavours are importable directly for tests and the
benchmark script.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# candidate scoring for trajectory sampling


def inductive_scores_numpy(cands, last, target, prior, step, alpha, beta, gamma, eps):
    n = cands.shape[1]
    logc = np.log((1.0 - eps) * cands + eps / n)

    def kl_rows(p):
        ps = (1.0 - eps) * p + eps / n
        return np.sum(ps[None, :] * (np.log(ps)[None, :] - logc), axis=1)

    sig = 1.0 / (1.0 + math.exp(-step / 5.0))
    out = alpha * kl_rows(last) + beta * sig * kl_rows(target)
    if prior.shape[0] > 0 and gamma != 0.0:
        acc = np.zeros(cands.shape[0])
        for j in range(prior.shape[0]):
            acc += kl_rows(prior[j])
        out = out - gamma * (acc / prior.shape[0])
    return out


@njit(cache=True)
def _inductive_scores_nb(cands, last, target, prior, step, alpha, beta, gamma, eps):
    c_count, n = cands.shape
    p_count = prior.shape[0]
    sig = 1.0 / (1.0 + math.exp(-step / 5.0))
    u = eps / n
    last_s = (1.0 - eps) * last + u
    tgt_s = (1.0 - eps) * target + u
    prior_s = (1.0 - eps) * prior + u
    log_last = np.log(last_s)
    log_tgt = np.log(tgt_s)
    log_prior = np.log(prior_s)
    out = np.empty(c_count)
    logc = np.empty(n)
    for c in range(c_count):
        for i in range(n):
            logc[i] = math.log((1.0 - eps) * cands[c, i] + u)
        sc = 0.0
        st = 0.0
        for i in range(n):
            sc += last_s[i] * (log_last[i] - logc[i])
            st += tgt_s[i] * (log_tgt[i] - logc[i])
        sd = 0.0
        if p_count > 0 and gamma != 0.0:
            for j in range(p_count):
                acc = 0.0
                for i in range(n):
                    acc += prior_s[j, i] * (log_prior[j, i] - logc[i])
                sd += acc
            sd /= p_count
        out[c] = alpha * sc + beta * sig * st - gamma * sd
    return out


def inductive_scores_numba(cands, last, target, prior, step, alpha, beta, gamma, eps):
    return _inductive_scores_nb(
        np.ascontiguousarray(cands, dtype=np.float64),
        np.ascontiguousarray(last, dtype=np.float64),
        np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(prior, dtype=np.float64).reshape(-1, cands.shape[1]),
        float(step), float(alpha), float(beta), float(gamma), float(eps),
    )


# ---------------------------------------------------------------------------
# Markov-chain sequence generation (inverse-CDF with pre-drawn uniforms)


def markov_sample_numpy(init_cdf, trans_cdf, domains, u):
    r, length = u.shape
    v = init_cdf.shape[1]
    out = np.empty((r, length), dtype=np.int64)
    if r == 0:
        return out
    tok = np.minimum((init_cdf[domains] <= u[:, :1]).sum(axis=1), v - 1)
    out[:, 0] = tok
    for t in range(1, length):
        rows = trans_cdf[domains, tok]
        tok = np.minimum((rows <= u[:, t : t + 1]).sum(axis=1), v - 1)
        out[:, t] = tok
    return out


@njit(cache=True)
def _markov_sample_nb(init_cdf, trans_cdf, domains, u):
    r, length = u.shape
    v = init_cdf.shape[1]
    out = np.empty((r, length), dtype=np.int64)
    for s in range(r):
        d = domains[s]
        k = 0
        for i in range(v):
            if init_cdf[d, i] <= u[s, 0]:
                k += 1
        tok = min(k, v - 1)
        out[s, 0] = tok
        for t in range(1, length):
            k = 0
            for i in range(v):
                if trans_cdf[d, tok, i] <= u[s, t]:
                    k += 1
            tok = min(k, v - 1)
            out[s, t] = tok
    return out


def markov_sample_numba(init_cdf, trans_cdf, domains, u):
    return _markov_sample_nb(
        np.ascontiguousarray(init_cdf),
        np.ascontiguousarray(trans_cdf),
        np.ascontiguousarray(domains, dtype=np.int64),
        np.ascontiguousarray(u, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# bigram counting: (context token, next token) histogram of a token batch


def bigram_counts_numpy(tokens, v):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.shape[0] == 0 or tokens.shape[1] < 2:
        return np.zeros((v, v), dtype=np.int64)
    flat = (tokens[:, :-1] * v + tokens[:, 1:]).ravel()
    return np.bincount(flat, minlength=v * v).reshape(v, v).astype(np.int64)


@njit(cache=True)
def _bigram_counts_nb(tokens, v):
    out = np.zeros((v, v), dtype=np.int64)
    r, length = tokens.shape
    for s in range(r):
        for t in range(length - 1):
            out[tokens[s, t], tokens[s, t + 1]] += 1
    return out


def bigram_counts_numba(tokens, v):
    return _bigram_counts_nb(np.ascontiguousarray(tokens, dtype=np.int64), int(v))


if HAVE_NUMBA:
    inductive_scores = inductive_scores_numba
    markov_sample = markov_sample_numba
    bigram_counts = bigram_counts_numba
else:
    inductive_scores = inductive_scores_numpy
    markov_sample = markov_sample_numpy
    bigram_counts = bigram_counts_numpy
