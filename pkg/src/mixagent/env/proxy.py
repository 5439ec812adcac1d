"""Small neural next-token model trained by SGD.

The model conditions on the previous token only: embedding -> tanh hidden
layer -> softmax over the vocabulary. Because the prediction depends on a
single context token, a minibatch enters the loss only through its bigram
count matrix, which makes a gradient step independent of the token count.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..nn.autodiff import Tensor
from ..nn.optim import OptimizerConfig, optimizer_step


@dataclass(frozen=True)
class ProxyConfig:
    embed: int = 16
    hidden: int = 32
    lr: float = 0.5
    minibatch: int = 256  # sequences per SGD step
    init_scale: float = 0.5


@dataclass(frozen=True)
class ProxyLearner:
    config: ProxyConfig
    vocab: int
    params: dict
    steps: int = 0

    def log_probs(self) -> np.ndarray:
        """(V, V) table of log p(next | previous)."""
        return _forward({k: Tensor(v) for k, v in self.params.items()}).data


def init_learner(vocab: int, config: ProxyConfig, seed: int) -> ProxyLearner:
    rng = np.random.default_rng(seed)
    e, h = config.embed, config.hidden
    params = {
        "emb": rng.normal(0.0, config.init_scale, (vocab, e)),
        "w1": rng.normal(0.0, 1.0 / np.sqrt(e), (e, h)),
        "b1": np.zeros(h),
        # zero head: the untrained model predicts exactly uniformly
        "w2": np.zeros((h, vocab)),
        "b2": np.zeros(vocab),
    }
    return ProxyLearner(config, vocab, params, 0)


def _forward(p) -> Tensor:
    hidden = (p["emb"] @ p["w1"] + p["b1"]).tanh()
    return (hidden @ p["w2"] + p["b2"]).log_softmax(axis=-1)


def count_loss(p, counts: np.ndarray) -> Tensor:
    """Mean next-token cross-entropy of the tokens summarized by ``counts``."""
    total = float(counts.sum())
    return -(_forward(p) * counts).sum() * (1.0 / total)


def loss_and_grads(learner: ProxyLearner, counts: np.ndarray) -> tuple[float, dict]:
    p = {k: Tensor(v, requires_grad=True) for k, v in learner.params.items()}
    loss = count_loss(p, counts)
    loss.backward()
    return float(loss.data), {k: t.grad for k, t in p.items()}


def train_step(learner: ProxyLearner, batch) -> tuple[ProxyLearner, float]:
    """One pass over ``batch`` in fixed-size minibatches, one SGD step each."""
    tokens = np.asarray(batch)
    if tokens.shape[0] == 0:
        return learner, float("nan")
    cfg = learner.config
    opt = OptimizerConfig(kind="sgd", lr=cfg.lr)
    params = learner.params
    losses = []
    for lo in range(0, tokens.shape[0], cfg.minibatch):
        counts = kernels.bigram_counts(tokens[lo:lo + cfg.minibatch], learner.vocab).astype(np.float64)
        if counts.sum() == 0:
            continue
        cur = dataclasses.replace(learner, params=params)
        loss, grads = loss_and_grads(cur, counts)
        params, _ = optimizer_step(params, grads, None, opt)
        losses.append(loss)
    return dataclasses.replace(learner, params=params, steps=learner.steps + len(losses)), float(np.mean(losses))


def batch_loss(learner: ProxyLearner, batch) -> float:
    counts = kernels.bigram_counts(np.asarray(batch), learner.vocab).astype(np.float64)
    p = {k: Tensor(v) for k, v in learner.params.items()}
    return float(count_loss(p, counts).data)


def predict_next(learner: ProxyLearner, prefix) -> np.ndarray:
    """Next-token distribution after ``prefix`` (only its last token matters)."""
    p = learner.params
    h = np.tanh(p["emb"][int(prefix[-1])] @ p["w1"] + p["b1"])
    z = h @ p["w2"] + p["b2"]
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
