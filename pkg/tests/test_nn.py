import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixagent.errors import CheckpointInvalid, ContextOverflow, DescriptorInvalid, DimensionMismatch, ShapeMismatch
from mixagent.nn import (
    ArchDescriptor,
    OptimizerConfig,
    Tensor,
    concat,
    decoder_forward,
    forward_tensors,
    init_params,
    load_params,
    loss_and_gradients,
    mse_to_target_loss,
    optimizer_step,
    full_actor_descriptor,
    params_hash,
    save_params,
)
from mixagent.nn.checkpoint import decode, encode
from mixagent.nn.decoder import forward_continuations, leaf_tensors

SMALL = ArchDescriptor(layers=2, d_model=16, heads=4, d_in=5, d_out=3, max_len=12)


# autodiff primitives against central differences

def _grad_check(fn, *shapes, seed=0, positive=False):
    rng = np.random.default_rng(seed)
    xs = [rng.random(s) + 0.5 if positive else rng.normal(size=s) for s in shapes]
    ts = [Tensor(x, requires_grad=True) for x in xs]
    fn(*ts).sum().backward()
    h = 1e-6
    for t, x in zip(ts, xs):
        num = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + h
            up = fn(*[Tensor(v) for v in xs]).data.sum()
            x[idx] = orig - h
            down = fn(*[Tensor(v) for v in xs]).data.sum()
            x[idx] = orig
            num[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(t.grad, num, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("name,fn,shapes,pos", [
    ("add_broadcast", lambda a, b: a + b, [(3, 4), (4,)], False),
    ("mul", lambda a, b: a * b, [(2, 3), (2, 3)], False),
    ("div", lambda a, b: a / b, [(2, 3), (3,)], True),
    ("pow", lambda a: a ** -0.5, [(4,)], True),
    ("exp_log", lambda a: (a.exp() + 1.0).log(), [(3, 2)], False),
    ("tanh_sigmoid", lambda a: a.tanh() * a.sigmoid(), [(5,)], False),
    ("gelu", lambda a: a.gelu(), [(6,)], False),
    ("softmax", lambda a: a.softmax(-1) * Tensor(np.arange(4.0)), [(3, 4)], False),
    ("log_softmax", lambda a: a.log_softmax(-1) * Tensor(np.arange(4.0)), [(2, 4)], False),
    ("logsumexp", lambda a: a.logsumexp(-1), [(3, 5)], False),
    ("mean_keepdims", lambda a: a - a.mean(-1, keepdims=True), [(2, 3)], False),
    ("matmul_batched", lambda a, b: a @ b, [(2, 3, 4), (4, 5)], False),
    ("matmul_both_batched", lambda a, b: a @ b, [(2, 3, 4), (2, 4, 2)], False),
    ("transpose_reshape", lambda a: a.transpose(1, 0, 2).reshape(3, 4) * 2.0, [(2, 3, 2)], False),
    ("getitem", lambda a: a[(np.array([0, 1, 1]), np.array([2, 0, 2]))], [(2, 3)], False),
    ("concat", lambda a, b: concat([a, b], axis=0) * Tensor(np.arange(5.0)[:, None]), [(2, 3), (3, 3)], False),
])
def test_primitive_gradients(name, fn, shapes, pos):
    _grad_check(fn, *shapes, positive=pos)


# decoder

def test_init_deterministic_and_finite():
    a, b = init_params(SMALL, 3), init_params(SMALL, 3)
    assert params_hash(a) == params_hash(b)
    assert a.all_finite()
    assert params_hash(init_params(SMALL, 4)) != params_hash(a)


def test_full_actor_size_near_two_million():
    desc = full_actor_descriptor()
    count = init_params(desc, 0).count()
    assert count == 2_141_020  # regression value of the chosen descriptor
    assert abs(count - 2.1e6) <= 0.2 * 2.1e6


def test_bad_descriptor():
    with pytest.raises(DescriptorInvalid):
        ArchDescriptor(layers=1, d_model=10, heads=3, d_in=2, d_out=2)
    with pytest.raises(DescriptorInvalid):
        ArchDescriptor(layers=1, d_model=8, heads=2, d_in=2, d_out=2, head="relu")


def test_softmax_head_rows_sum_to_one():
    out = decoder_forward(init_params(SMALL, 0), np.random.default_rng(0).normal(size=(7, 5)))
    assert out.shape == (7, 3)
    np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-9)


def test_length_one_and_errors():
    p = init_params(SMALL, 0)
    assert decoder_forward(p, np.ones((1, 5))).shape == (1, 3)
    with pytest.raises(ContextOverflow):
        decoder_forward(p, np.ones((13, 5)))
    with pytest.raises(DimensionMismatch):
        decoder_forward(p, np.ones((3, 4)))


@given(st.integers(0, 1000), st.integers(2, 12), st.integers(1, 3))
def test_causality(seed, length, layers):
    desc = ArchDescriptor(layers=layers, d_model=8, heads=2, d_in=4, d_out=2, max_len=12, head="linear")
    p = init_params(desc, seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(length, 4))
    t = int(rng.integers(length - 1)) if length > 1 else 0
    y = x.copy()
    y[t + 1:] = rng.normal(size=y[t + 1:].shape)
    assert np.array_equal(decoder_forward(p, x)[: t + 1], decoder_forward(p, y)[: t + 1])


@given(st.integers(0, 1000))
def test_continuations_match_full_forward(seed):
    rng = np.random.default_rng(seed)
    desc = ArchDescriptor(layers=2, d_model=8, heads=2, d_in=3, d_out=1, max_len=10, head="sigmoid")
    p = init_params(desc, seed)
    lengths = rng.integers(1, 6, size=3)
    prefix = np.zeros((3, int(lengths.max()), 3))
    for i, n in enumerate(lengths):
        prefix[i, :n] = rng.normal(size=(n, 3))
    cands = rng.normal(size=(3, 4, 3))
    got = forward_continuations(desc, leaf_tensors(p, False), prefix, lengths, cands).data
    for i, n in enumerate(lengths):
        for k in range(4):
            seq = np.vstack([prefix[i, :n], cands[i, k][None]])
            np.testing.assert_allclose(got[i, k], decoder_forward(p, seq)[-1], rtol=0, atol=1e-13)


def test_continuations_overflow():
    desc = ArchDescriptor(layers=1, d_model=8, heads=2, d_in=3, d_out=1, max_len=4, head="sigmoid")
    p = leaf_tensors(init_params(desc, 0), False)
    with pytest.raises(ContextOverflow):
        forward_continuations(desc, p, np.zeros((1, 4, 3)), np.array([4]), np.zeros((1, 1, 3)))


# gradients of whole losses

def test_mse_gradient_finite_differences(fd_error):
    params = init_params(SMALL, 1)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 6, 5))
    y = rng.dirichlet(np.ones(3), size=(2, 6))
    mask = np.ones((2, 6))
    mask[1, 4:] = 0
    fn = mse_to_target_loss(SMALL, x, y, mask)
    _, grads = loss_and_gradients(params, fn)
    err = fd_error(lambda t: float(fn({k: Tensor(v) for k, v in t.items()}).data), params.tensors,
                   analytic=grads)
    assert err < 1e-4


def test_zero_loss_is_stationary():
    params = init_params(SMALL, 2)
    x = np.random.default_rng(2).normal(size=(1, 4, 5))
    target = decoder_forward(params, x)
    _, grads = loss_and_gradients(params, mse_to_target_loss(SMALL, x, target, np.ones((1, 4))))
    assert np.sqrt(sum(float((g * g).sum()) for g in grads.values())) < 1e-8


def test_constant_shift_leaves_gradient():
    params = init_params(SMALL, 3)
    x = np.random.default_rng(3).normal(size=(1, 4, 5))
    y = np.full((1, 4, 3), 1 / 3)
    base = mse_to_target_loss(SMALL, x, y, np.ones((1, 4)))
    _, g1 = loss_and_gradients(params, base)
    _, g2 = loss_and_gradients(params, lambda p: base(p) + 7.0)
    for k in g1:
        assert np.array_equal(g1[k], g2[k])


# optimizers

def test_sgd_zero_lr_and_analytic_step():
    params = {"x": np.array([1.0])}
    same, _ = optimizer_step(params, {"x": np.array([5.0])}, None, OptimizerConfig(kind="sgd", lr=0.0))
    assert same["x"][0] == 1.0
    # f(x) = x^2 / 2, grad = x
    step, _ = optimizer_step(params, {"x": params["x"].copy()}, None, OptimizerConfig(kind="sgd", lr=0.1))
    assert step["x"][0] == pytest.approx(0.9, abs=1e-15)


@pytest.mark.parametrize("kind,lr,iters", [("sgd", 0.1, 400), ("adam", 0.05, 3000)])
def test_quadratic_converges(kind, lr, iters):
    a = np.array([[3.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -2.0])
    opt = np.linalg.solve(a, b)
    params, state = {"w": np.zeros(2)}, None
    for _ in range(iters):
        grad = a @ params["w"] - b
        params, state = optimizer_step(params, {"w": grad}, state, OptimizerConfig(kind=kind, lr=lr))
    f = lambda w: 0.5 * w @ a @ w - b @ w
    assert f(params["w"]) - f(opt) < 1e-6


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        optimizer_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, None, OptimizerConfig())


def test_clipping_bounds_step():
    params, _ = optimizer_step({"w": np.zeros(2)}, {"w": np.array([30.0, 40.0])}, None,
                               OptimizerConfig(kind="sgd", lr=1.0, clip_norm=1.0))
    assert np.linalg.norm(params["w"]) == pytest.approx(1.0)


# checkpoints

def test_checkpoint_roundtrip(tmp_path):
    p = init_params(SMALL, 5)
    sha = save_params(tmp_path / "a.ckpt", p, {"phase": "sft"})
    q, meta = load_params(tmp_path / "a.ckpt")
    assert meta["phase"] == "sft" and q.descriptor == SMALL
    assert params_hash(p) == params_hash(q)
    assert sha == save_params(tmp_path / "b.ckpt", q, {"phase": "sft"})


def test_checkpoint_corruption_detected(tmp_path):
    blob = bytearray(encode(init_params(SMALL, 5)))
    blob[-3] ^= 0xFF
    with pytest.raises(CheckpointInvalid):
        decode(bytes(blob))
    with pytest.raises(CheckpointInvalid):
        decode(b"not a checkpoint")
    with pytest.raises(CheckpointInvalid):
        load_params(tmp_path / "missing.ckpt")


def test_forward_tensors_batch_equals_single():
    p = init_params(SMALL, 6)
    x = np.random.default_rng(6).normal(size=(3, 4, 5))
    batch = forward_tensors(SMALL, leaf_tensors(p, False), x).data
    for i in range(3):
        np.testing.assert_allclose(batch[i], decoder_forward(p, x[i]), atol=1e-14)
