"""Pre-norm causal transformer decoder used by the actor and the critic."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..errors import ContextOverflow, DescriptorInvalid, DimensionMismatch
from .autodiff import Tensor, concat

HEADS = ("softmax", "sigmoid", "linear")
MASK_FILL = -1e30
LN_EPS = 1e-5


@dataclass(frozen=True)
class ArchDescriptor:
    layers: int
    d_model: int
    heads: int
    d_in: int
    d_out: int
    max_len: int = 128
    ff_mult: int = 4
    head: str = "softmax"
    zero_head: bool = False
    init_scale: float = 0.02

    def __post_init__(self):
        if min(self.layers, self.d_model, self.heads, self.d_in, self.d_out, self.max_len, self.ff_mult) < 1:
            raise DescriptorInvalid("all sizes must be positive")
        if self.d_model % self.heads:
            raise DescriptorInvalid("d_model must be divisible by heads")
        if self.head not in HEADS:
            raise DescriptorInvalid(f"head must be one of {HEADS}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ArchDescriptor":
        try:
            return cls(**d)
        except TypeError as exc:
            raise DescriptorInvalid(str(exc)) from exc


# Default actor: two layers sized near 2.1M parameters for a 52-domain space
# with two feedback fields; the critic is a single layer with a sigmoid head.
def full_actor_descriptor(n_domains: int = 52, n_fields: int = 2) -> ArchDescriptor:
    return ArchDescriptor(layers=2, d_model=296, heads=8, d_in=n_domains + n_fields, d_out=n_domains, max_len=128)


def full_critic_descriptor(n_domains: int = 52) -> ArchDescriptor:
    return ArchDescriptor(layers=1, d_model=296, heads=8, d_in=n_domains, d_out=1, head="sigmoid", max_len=128)


@dataclass
class NetworkParams:
    descriptor: ArchDescriptor
    tensors: dict[str, np.ndarray]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.descriptor, {k: v.copy() for k, v in self.tensors.items()})

    def count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


def param_shapes(desc: ArchDescriptor) -> dict[str, tuple]:
    d, f = desc.d_model, desc.d_model * desc.ff_mult
    shapes = {"in.w": (desc.d_in, d), "in.b": (d,)}
    for i in range(desc.layers):
        p = f"l{i}."
        shapes.update({
            p + "ln1.g": (d,), p + "ln1.b": (d,),
            p + "qkv.w": (d, 3 * d), p + "o.w": (d, d), p + "o.b": (d,),
            p + "ln2.g": (d,), p + "ln2.b": (d,),
            p + "ff1.w": (d, f), p + "ff1.b": (f,),
            p + "ff2.w": (f, d), p + "ff2.b": (d,),
        })
    shapes.update({"lnf.g": (d,), "lnf.b": (d,), "out.w": (d, desc.d_out), "out.b": (desc.d_out,)})
    return shapes


def init_params(desc: ArchDescriptor, seed: int) -> NetworkParams:
    rng = np.random.default_rng(seed)
    tensors = {}
    # residual-branch output projections are scaled down with depth
    resid = desc.init_scale / np.sqrt(2.0 * desc.layers)
    for name, shape in param_shapes(desc).items():
        if name.endswith(".g"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        elif name == "out.w" and desc.zero_head:
            tensors[name] = np.zeros(shape)
        elif name == "in.w":
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(desc.d_in), shape)
        elif name.endswith("o.w") or name.endswith("ff2.w"):
            tensors[name] = rng.normal(0.0, resid, shape)
        else:
            tensors[name] = rng.normal(0.0, desc.init_scale if name != "out.w" else 1.0 / np.sqrt(desc.d_model), shape)
    return NetworkParams(desc, tensors)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def causal_mask(length: int) -> np.ndarray:
    m = np.triu(np.ones((length, length), dtype=bool), k=1)
    return np.where(m, MASK_FILL, 0.0)


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * (var + LN_EPS) ** -0.5 * g + b


def leaf_tensors(params: NetworkParams, requires_grad: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.tensors.items()}


def forward_tensors(desc: ArchDescriptor, p: Mapping[str, Tensor], x) -> Tensor:
    """Decoder pass on a (B, T, d_in) tensor, returning (B, T, d_out) head outputs."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 3:
        raise DimensionMismatch("expected a (batch, time, features) input")
    bsz, t, fdim = x.shape
    if fdim != desc.d_in:
        raise DimensionMismatch(f"feature dim {fdim} != descriptor d_in {desc.d_in}")
    if t > desc.max_len:
        raise ContextOverflow(f"sequence length {t} exceeds context {desc.max_len}")
    d, nh = desc.d_model, desc.heads
    dh = d // nh
    h = x @ p["in.w"] + p["in.b"] + sinusoidal_positions(t, d)
    mask = causal_mask(t)
    scale = 1.0 / np.sqrt(dh)
    for i in range(desc.layers):
        q = f"l{i}."
        a = _layer_norm(h, p[q + "ln1.g"], p[q + "ln1.b"])
        qkv = (a @ p[q + "qkv.w"]).reshape(bsz, t, 3, nh, dh).transpose(2, 0, 3, 1, 4)
        qh, kh, vh = qkv[0], qkv[1], qkv[2]
        att = ((qh @ kh.swapaxes(-1, -2)) * scale + mask).softmax(axis=-1)
        ctx = (att @ vh).transpose(0, 2, 1, 3).reshape(bsz, t, d)
        h = h + ctx @ p[q + "o.w"] + p[q + "o.b"]
        a = _layer_norm(h, p[q + "ln2.g"], p[q + "ln2.b"])
        h = h + (a @ p[q + "ff1.w"] + p[q + "ff1.b"]).gelu() @ p[q + "ff2.w"] + p[q + "ff2.b"]
    return _head(desc, p, h)


def _head(desc: ArchDescriptor, p: Mapping[str, Tensor], h: Tensor) -> Tensor:
    h = _layer_norm(h, p["lnf.g"], p["lnf.b"])
    logits = h @ p["out.w"] + p["out.b"]
    if desc.head == "softmax":
        return logits.softmax(axis=-1)
    if desc.head == "sigmoid":
        return logits.sigmoid()
    return logits


def forward_continuations(desc: ArchDescriptor, p: Mapping[str, Tensor], prefix, lengths, cands) -> Tensor:
    """Head output at the position right after each prefix, for K alternative next inputs.

    ``prefix`` is (B, T, d_in), right-padded, with true lengths ``lengths``;
    ``cands`` is (B, K, d_in). Equals running the full decoder on each
    prefix-plus-candidate sequence and reading the last position, but the
    prefix is encoded once and shared by all K candidates.
    """
    x = prefix if isinstance(prefix, Tensor) else Tensor(prefix)
    c = cands if isinstance(cands, Tensor) else Tensor(cands)
    lengths = np.asarray(lengths, dtype=np.int64)
    if x.ndim != 3 or c.ndim != 3 or x.shape[0] != c.shape[0]:
        raise DimensionMismatch("expected (B, T, d) prefixes and (B, K, d) candidates")
    if x.shape[2] != desc.d_in or c.shape[2] != desc.d_in:
        raise DimensionMismatch(f"feature dim != descriptor d_in {desc.d_in}")
    bsz, t, _ = x.shape
    k = c.shape[1]
    if lengths.shape != (bsz,) or lengths.min() < 1 or lengths.max() > t:
        raise DimensionMismatch("prefix lengths must lie in [1, T]")
    if lengths.max() + 1 > desc.max_len:
        raise ContextOverflow(f"sequence length {lengths.max() + 1} exceeds context {desc.max_len}")
    d, nh = desc.d_model, desc.heads
    dh = d // nh
    pe = sinusoidal_positions(t + 1, d)
    h = x @ p["in.w"] + p["in.b"] + pe[:t]
    hc = c @ p["in.w"] + p["in.b"] + pe[lengths][:, None, :]
    mask = causal_mask(t)
    # candidate queries see only the real prefix positions
    pad = np.where(np.arange(t)[None, :] >= lengths[:, None], MASK_FILL, 0.0)[:, None, None, :]
    scale = 1.0 / np.sqrt(dh)
    for i in range(desc.layers):
        q = f"l{i}."
        a = _layer_norm(h, p[q + "ln1.g"], p[q + "ln1.b"])
        qkv = (a @ p[q + "qkv.w"]).reshape(bsz, t, 3, nh, dh).transpose(2, 0, 3, 1, 4)
        qh, kh, vh = qkv[0], qkv[1], qkv[2]
        ac = _layer_norm(hc, p[q + "ln1.g"], p[q + "ln1.b"])
        qkvc = (ac @ p[q + "qkv.w"]).reshape(bsz, k, 3, nh, dh).transpose(2, 0, 3, 1, 4)
        qc, kc, vc = qkvc[0], qkvc[1], qkvc[2]
        s_prefix = (qc @ kh.swapaxes(-1, -2)) * scale + pad  # (B, nh, K, T)
        s_self = (qc * kc).sum(axis=-1, keepdims=True) * scale  # (B, nh, K, 1)
        att = concat([s_prefix, s_self], axis=-1).softmax(axis=-1)
        ctx = att[..., :t] @ vh + att[..., t:] * vc
        hc = hc + ctx.transpose(0, 2, 1, 3).reshape(bsz, k, d) @ p[q + "o.w"] + p[q + "o.b"]
        ac = _layer_norm(hc, p[q + "ln2.g"], p[q + "ln2.b"])
        hc = hc + (ac @ p[q + "ff1.w"] + p[q + "ff1.b"]).gelu() @ p[q + "ff2.w"] + p[q + "ff2.b"]
        if i + 1 < desc.layers:
            att_p = ((qh @ kh.swapaxes(-1, -2)) * scale + mask).softmax(axis=-1)
            ctx_p = (att_p @ vh).transpose(0, 2, 1, 3).reshape(bsz, t, d)
            h = h + ctx_p @ p[q + "o.w"] + p[q + "o.b"]
            a = _layer_norm(h, p[q + "ln2.g"], p[q + "ln2.b"])
            h = h + (a @ p[q + "ff1.w"] + p[q + "ff1.b"]).gelu() @ p[q + "ff2.w"] + p[q + "ff2.b"]
    return _head(desc, p, hc)


def decoder_forward(params: NetworkParams, inputs) -> np.ndarray:
    """Numeric forward pass; accepts (T, d_in) or (B, T, d_in)."""
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    p = leaf_tensors(params, requires_grad=False)
    out = forward_tensors(params.descriptor, p, x).data
    return out[0] if squeeze else out


LossFn = Callable[[Mapping[str, Tensor]], Tensor]


def loss_and_gradients(params: NetworkParams, loss_fn: LossFn) -> tuple[float, dict[str, np.ndarray]]:
    """Value and exact reverse-mode gradient of ``loss_fn`` w.r.t. every tensor."""
    p = leaf_tensors(params, requires_grad=True)
    loss = loss_fn(p)
    if loss.data.size != 1:
        raise DimensionMismatch("loss must be a scalar")
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in p.items()}
    return float(loss.data), grads


def mse_to_target_loss(desc: ArchDescriptor, inputs, targets, mask) -> LossFn:
    """Sum over masked positions of squared error between head output and target."""
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)[..., None]

    def fn(p):
        out = forward_tensors(desc, p, inputs)
        diff = (out - targets) * mask
        return (diff * diff).sum()

    return fn
