"""Actor: next-distribution prediction and supervised warm-up."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import MixtureDistribution, TrajectoryRecord, validate_distribution
from ..errors import DimensionMismatch, EmptyCorpus, EmptyHistory, MissingFeedback
from ..nn.autodiff import Tensor
from ..nn.decoder import ArchDescriptor, NetworkParams, forward_tensors, init_params, leaf_tensors, loss_and_gradients
from ..nn.optim import OptimizerConfig, optimizer_step


def agent_features(dists: np.ndarray, feedback: np.ndarray) -> np.ndarray:
    """Rows [rho_i ; feedback_i] for each step, shape (T, N + |D|)."""
    dists = np.asarray(dists, dtype=np.float64)
    feedback = np.asarray(feedback, dtype=np.float64)
    if dists.shape[0] != feedback.shape[0]:
        raise DimensionMismatch("distributions and feedback rows differ in count")
    return np.hstack([dists, feedback])


def pad_sequences(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a common length; returns (batch, lengths)."""
    lengths = np.array([s.shape[0] for s in seqs])
    out = np.zeros((len(seqs), int(lengths.max()), seqs[0].shape[1]))
    for i, s in enumerate(seqs):
        out[i, : s.shape[0]] = s
    return out, lengths


def _window(seq: np.ndarray, max_len: int) -> np.ndarray:
    return seq[-max_len:] if seq.shape[0] > max_len else seq


def policy_tensor(desc: ArchDescriptor, p, histories: Sequence[np.ndarray]) -> Tensor:
    """Actions (B, N) at the last position of each history; keeps the graph for gradients."""
    seqs = [_window(np.asarray(h, dtype=np.float64), desc.max_len) for h in histories]
    x, lengths = pad_sequences(seqs)
    out = forward_tensors(desc, p, x)
    return out[(np.arange(len(seqs)), lengths - 1)]


def policy_actions(actor, histories: Sequence[np.ndarray]) -> np.ndarray:
    """Numeric batch prediction; ``actor`` is NetworkParams or a callable stub."""
    if callable(actor):
        return np.asarray(actor(histories), dtype=np.float64)
    return policy_tensor(actor.descriptor, leaf_tensors(actor, False), histories).data


def agent_predict(actor, history) -> MixtureDistribution:
    """Next distribution from a history of [rho ; standardized feedback] rows.

    Histories longer than the actor's context keep the most recent window.
    """
    h = np.asarray(history, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise EmptyHistory("history must contain at least one step")
    out = policy_actions(actor, [h])[0]
    return validate_distribution(out, out.shape[0])


# ---------------------------------------------------------------------------
# supervised warm-up


def _sft_arrays(trajs: Sequence[TrajectoryRecord], max_len: int):
    """Inputs (B, L, N+D), targets (B, L, N) and mask for trajectories with >= 1 action."""
    xs, ys = [], []
    for t in trajs:
        if t.feedback is None:
            raise MissingFeedback("SFT needs standardized feedback on every trajectory")
        if t.length == 0:
            continue
        feats = agent_features(t.distributions, t.feedback)[: t.length]
        xs.append(feats)
        ys.append(t.actions)
    if not xs:
        raise EmptyCorpus("no trajectory has an action to imitate")
    x, lengths = pad_sequences(xs)
    y, _ = pad_sequences(ys)
    if x.shape[1] > max_len:
        raise DimensionMismatch(f"trajectories of {x.shape[1]} steps exceed actor context {max_len}")
    mask = (np.arange(x.shape[1])[None, :] < lengths[:, None]).astype(np.float64)
    return x, y, mask


def sft_loss_fn(desc: ArchDescriptor, trajs: Sequence[TrajectoryRecord], per_traj_mean: bool = False):
    x, y, mask = _sft_arrays(trajs, desc.max_len)
    scale = 1.0 / x.shape[0] if per_traj_mean else 1.0

    def fn(p):
        out = forward_tensors(desc, p, x)
        diff = (out - y) * mask[..., None]
        return (diff * diff).sum() * scale

    return fn


def sft_loss(actor: NetworkParams, trajectory: TrajectoryRecord) -> float:
    """Sum over steps t >= 1 of the squared error between prediction and recorded action."""
    if trajectory.feedback is None:
        raise MissingFeedback("trajectory has no standardized feedback")
    if trajectory.length == 0:
        return 0.0
    fn = sft_loss_fn(actor.descriptor, [trajectory])
    return float(fn(leaf_tensors(actor, False)).data)


@dataclass(frozen=True)
class SftConfig:
    steps: int = 400
    batch_size: int = 16
    lr: float = 1e-3
    clip_norm: float | None = 1.0
    seed: int = 0


@dataclass
class TrainResult:
    params: NetworkParams
    curve: list[dict] = field(default_factory=list)


def corpus_sft_loss(actor: NetworkParams, trajs: Sequence[TrajectoryRecord]) -> float:
    """Mean per-trajectory SFT loss over a corpus."""
    fn = sft_loss_fn(actor.descriptor, trajs, per_traj_mean=True)
    return float(fn(leaf_tensors(actor, False)).data)


def initial_actor(desc: ArchDescriptor, seed: int) -> NetworkParams:
    """The fresh actor ``train_sft`` starts from for a given config seed."""
    return init_params(desc, int(np.random.default_rng(seed).integers(2**31)))


def train_sft(corpus: Sequence[TrajectoryRecord], desc: ArchDescriptor, config: SftConfig) -> TrainResult:
    """Minibatch Adam on the SFT loss, from a fresh actor."""
    trajs = [t for t in corpus if t.length > 0]
    if not trajs:
        raise EmptyCorpus("SFT corpus is empty")
    rng = np.random.default_rng(config.seed)
    actor = init_params(desc, int(rng.integers(2**31)))  # same draw as initial_actor
    opt = OptimizerConfig(kind="adam", lr=config.lr, clip_norm=config.clip_norm)
    state = None
    curve = []
    bs = min(config.batch_size, len(trajs))
    for step in range(config.steps):
        idx = rng.choice(len(trajs), size=bs, replace=False)
        loss, grads = loss_and_gradients(actor, sft_loss_fn(desc, [trajs[i] for i in idx], per_traj_mean=True))
        tensors, state = optimizer_step(actor.tensors, grads, state, opt)
        actor = NetworkParams(desc, tensors)
        curve.append({"step": step, "loss": loss})
    return TrainResult(actor, curve)
