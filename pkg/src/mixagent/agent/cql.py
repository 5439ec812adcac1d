"""Scalar rewards, transitions, the critic and conservative Q-learning."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import TrajectoryRecord, Transition
from ..errors import DimensionMismatch, EmptyBatch, MissingFeedback
from ..nn.decoder import (
    ArchDescriptor,
    NetworkParams,
    forward_continuations,
    init_params,
    leaf_tensors,
    loss_and_gradients,
)
from ..nn.optim import OptimizerConfig, optimizer_step
from .actor import agent_features, pad_sequences, policy_actions, policy_tensor


def equal_weights(n_fields: int) -> np.ndarray:
    return np.full(n_fields, 1.0 / n_fields)


def scalar_reward(f_t, f_prev, lam=None) -> float:
    """Gain of the lambda-weighted feedback combination over the previous step."""
    f_t = np.asarray(getattr(f_t, "scores", f_t), dtype=np.float64)
    f_prev = np.asarray(getattr(f_prev, "scores", f_prev), dtype=np.float64)
    lam = equal_weights(f_t.shape[0]) if lam is None else np.asarray(lam, dtype=np.float64)
    if not (f_t.shape == f_prev.shape == lam.shape) or f_t.ndim != 1:
        raise DimensionMismatch("feedback vectors and weights must share one length")
    if abs(math.fsum(lam) - 1.0) > 1e-9:
        raise DimensionMismatch("lambda weights must sum to 1")
    return float(lam @ f_t - lam @ f_prev)


def build_transitions(trajectories: Sequence[TrajectoryRecord], lam=None) -> list[Transition]:
    """One transition per (trajectory, step >= 1); feedback must already be standardized."""
    out = []
    for j, traj in enumerate(trajectories):
        if traj.feedback is None:
            raise MissingFeedback(f"trajectory {j} has no feedback")
        dists, fb = traj.distributions, traj.feedback
        for t in range(1, traj.length + 1):
            out.append(Transition(
                state_dists=dists[:t],
                state_feedback=fb[:t],
                action=dists[t],
                reward=scalar_reward(fb[t], fb[t - 1], lam),
                next_feedback=fb[t],
                done=t == traj.length,
                traj_index=j,
                step=t,
            ))
    return out


# ---------------------------------------------------------------------------
# critic


def _prefixes(state_dists: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    return pad_sequences([np.asarray(sd, dtype=np.float64) for sd in state_dists])


def critic_q(critic: NetworkParams, state_dists, action) -> float:
    """Q(s, a): sigmoid output at the action position of the state-then-action sequence."""
    s = np.asarray(state_dists, dtype=np.float64).reshape(-1, critic.descriptor.d_in)
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (s.shape[1],):
        raise DimensionMismatch("action and state dimensions differ")
    return float(critic_q_batch(critic, [s], a[None, :])[0])


def critic_q_batch(critic: NetworkParams, state_dists: Sequence[np.ndarray], actions: np.ndarray) -> np.ndarray:
    """Q for one action per state; ``actions`` may also be (B, K, N) for K actions per state."""
    x, lengths = _prefixes(state_dists)
    a = np.asarray(actions, dtype=np.float64)
    single = a.ndim == 2
    out = forward_continuations(critic.descriptor, leaf_tensors(critic, False), x, lengths,
                                a[:, None, :] if single else a).data[..., 0]
    return out[:, 0] if single else out


@dataclass(frozen=True)
class CqlConfig:
    alpha: float = 1.0  # conservative penalty weight
    gamma: float = 0.99  # discount
    ood_samples: int = 10  # flat-Dirichlet actions in the logsumexp estimate
    target_sync: int = 50  # critic steps between target-critic syncs
    critic_lr: float = 3e-4
    actor_lr: float = 1e-4
    batch_size: int = 32
    steps: int = 500
    actor_every: int = 1
    actor_delay: int = 0  # critic-only steps before the actor starts moving
    anchor: float = 0.0  # optional MSE pull of the actor toward data actions
    clip_norm: float | None = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or not 0 <= self.gamma < 1 or self.ood_samples < 0:
            raise ValueError("alpha >= 0, 0 <= gamma < 1 and ood_samples >= 0 required")


def _histories(batch: Sequence[Transition]):
    states = [agent_features(tr.state_dists, tr.state_feedback) for tr in batch]
    nexts = [agent_features(tr.next_dists, tr.next_state_feedback) for tr in batch]
    return states, nexts


@dataclass
class CqlInputs:
    target: np.ndarray  # Bellman targets y, (B,)
    penalty_actions: np.ndarray  # (B, K, N): OOD draws followed by the actor's action at s
    policy_next: np.ndarray  # actor's action at s'


def cql_inputs(target_critic: NetworkParams, actor, batch: Sequence[Transition], config: CqlConfig,
               rng: np.random.Generator | None = None, ood_actions: np.ndarray | None = None) -> CqlInputs:
    n = batch[0].action.shape[0]
    states, nexts = _histories(batch)
    a_next = policy_actions(actor, nexts)
    q_next = critic_q_batch(target_critic, [tr.next_dists for tr in batch], a_next)
    rewards = np.array([tr.reward for tr in batch])
    not_done = np.array([0.0 if tr.done else 1.0 for tr in batch])
    y = rewards + config.gamma * not_done * q_next
    a_pi = policy_actions(actor, states)
    if ood_actions is None:
        rng = rng or np.random.default_rng(0)
        ood_actions = rng.dirichlet(np.ones(n), size=(len(batch), config.ood_samples)) if config.ood_samples else \
            np.zeros((len(batch), 0, n))
    pen = np.concatenate([ood_actions, a_pi[:, None, :]], axis=1)
    return CqlInputs(y, pen, a_next)


def cql_loss_fn(critic_desc: ArchDescriptor, batch: Sequence[Transition], inputs: CqlInputs, alpha: float,
                stats: dict | None = None):
    """Loss closure over critic parameters: mean Bellman error + alpha * penalty."""
    x, lengths = _prefixes([tr.state_dists for tr in batch])
    data_actions = np.array([tr.action for tr in batch])
    cands = np.concatenate([data_actions[:, None, :], inputs.penalty_actions], axis=1)
    k = inputs.penalty_actions.shape[1]
    y = inputs.target

    def fn(p):
        q = forward_continuations(critic_desc, p, x, lengths, cands)[..., 0]  # (B, 1 + K)
        q_data = q[:, 0]
        err = q_data - y
        bellman = (err * err).mean()
        if alpha == 0.0:
            loss = bellman
            penalty_val = 0.0
        else:
            lme = q[:, 1:].logsumexp(axis=-1) - math.log(k)
            penalty = (lme - q_data).mean()
            loss = bellman + alpha * penalty
            penalty_val = float(penalty.data)
        if stats is not None:
            stats.update(bellman=float(bellman.data), penalty=penalty_val, mean_q=float(q_data.data.mean()))
        return loss

    return fn


def cql_loss(critic: NetworkParams, target_critic: NetworkParams, actor, batch: Sequence[Transition],
             config: CqlConfig, rng: np.random.Generator | None = None,
             ood_actions: np.ndarray | None = None) -> float:
    if len(batch) == 0:
        raise EmptyBatch("empty transition batch")
    inputs = cql_inputs(target_critic, actor, batch, config, rng, ood_actions)
    fn = cql_loss_fn(critic.descriptor, batch, inputs, config.alpha)
    return float(fn(leaf_tensors(critic, False)).data)


def actor_objective_fn(actor_desc: ArchDescriptor, critic: NetworkParams, batch: Sequence[Transition],
                       anchor: float = 0.0, stats: dict | None = None):
    """Closure over actor parameters: -mean Q(s, actor(s)) (+ optional anchor to data actions)."""
    states, _ = _histories(batch)
    b = len(batch)
    x, lengths = _prefixes([tr.state_dists for tr in batch])
    data_actions = np.array([tr.action for tr in batch])
    cp = leaf_tensors(critic, False)
    cdesc = critic.descriptor

    def fn(p):
        a = policy_tensor(actor_desc, p, states)
        q = forward_continuations(cdesc, cp, x, lengths, a.reshape(b, 1, -1))[:, 0, 0]
        obj = -q.mean()
        if anchor:
            d = a - data_actions
            obj = obj + anchor * (d * d).sum(axis=-1).mean()
        if stats is not None:
            stats["actor_q"] = float(q.data.mean())
        return obj

    return fn


@dataclass(frozen=True)
class RewardMap:
    """Affine map r -> (r - low) * scale into [0, 1 - gamma]."""

    low: float
    scale: float

    def apply(self, r):
        return (np.asarray(r, dtype=np.float64) - self.low) * self.scale

    def invert(self, m):
        return np.asarray(m, dtype=np.float64) / self.scale + self.low

    @classmethod
    def fit(cls, rewards, gamma: float) -> "RewardMap":
        r = np.asarray(rewards, dtype=np.float64)
        lo, hi = float(r.min()), float(r.max())
        width = hi - lo if hi > lo else 1.0
        return cls(lo, (1.0 - gamma) / width)


@dataclass
class CqlResult:
    actor: NetworkParams
    critic: NetworkParams
    reward_map: RewardMap
    curve: list[dict] = field(default_factory=list)


def train_cql(actor_init: NetworkParams, transitions: Sequence[Transition], config: CqlConfig,
              critic_desc: ArchDescriptor) -> CqlResult:
    """Alternate critic CQL steps and deterministic-policy-gradient actor steps."""
    if not transitions:
        raise EmptyBatch("no transitions to train on")
    rng = np.random.default_rng(config.seed)
    rmap = RewardMap.fit([t.reward for t in transitions], config.gamma)
    data = [dataclasses.replace(t, reward=float(rmap.apply(t.reward))) for t in transitions]
    critic = init_params(critic_desc, int(rng.integers(2**31)))
    target = critic.copy()
    actor = actor_init.copy()
    c_opt = OptimizerConfig(kind="adam", lr=config.critic_lr, clip_norm=config.clip_norm)
    a_opt = OptimizerConfig(kind="adam", lr=config.actor_lr, clip_norm=config.clip_norm)
    c_state = a_state = None
    curve = []
    bs = min(config.batch_size, len(data))
    for step in range(config.steps):
        batch = [data[i] for i in rng.choice(len(data), size=bs, replace=False)]
        inputs = cql_inputs(target, actor, batch, config, rng)
        stats: dict = {}
        loss, grads = loss_and_gradients(critic, cql_loss_fn(critic_desc, batch, inputs, config.alpha, stats))
        tensors, c_state = optimizer_step(critic.tensors, grads, c_state, c_opt)
        critic = NetworkParams(critic_desc, tensors)
        if step >= config.actor_delay and (step - config.actor_delay) % config.actor_every == 0:
            _, agrads = loss_and_gradients(
                actor, actor_objective_fn(actor.descriptor, critic, batch, config.anchor, stats))
            atensors, a_state = optimizer_step(actor.tensors, agrads, a_state, a_opt)
            actor = NetworkParams(actor.descriptor, atensors)
        if (step + 1) % config.target_sync == 0:
            target = critic.copy()
        curve.append({"step": step, "loss": loss, "mean_q": stats.get("mean_q"),
                      "penalty": stats.get("penalty"), "actor_q": stats.get("actor_q")})
    return CqlResult(actor, critic, rmap, curve)
