import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixagent import kernels
from mixagent._accel import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")


def _score_case(seed, c=300, n=5, p=4):
    rng = np.random.default_rng(seed)
    cands = rng.dirichlet(np.ones(n), size=c)
    cands[0] = 0.0
    cands[0, 0] = 1.0  # a vertex exercises the smoothing
    last, target = rng.dirichlet(np.ones(n), size=2)
    prior = rng.dirichlet(np.ones(n), size=p)
    return cands, last, target, prior


@needs_numba
@given(st.integers(0, 10_000), st.integers(0, 6))
def test_inductive_scores_flavours_agree(seed, p):
    cands, last, target, prior = _score_case(seed, p=p)
    args = (cands, last, target, prior, 3, 1.0, 0.8, 0.5, 1e-8)
    np.testing.assert_allclose(kernels.inductive_scores_numba(*args), kernels.inductive_scores_numpy(*args),
                               rtol=1e-12, atol=1e-12)


@needs_numba
@given(st.integers(0, 10_000))
def test_markov_sample_flavours_identical(seed):
    rng = np.random.default_rng(seed)
    d, v = 3, 9
    trans = np.cumsum(rng.dirichlet(np.ones(v), size=(d, v)), axis=-1)
    init = np.cumsum(rng.dirichlet(np.ones(v), size=d), axis=-1)
    doms = rng.integers(0, d, size=40)
    u = rng.random((40, 7))
    assert np.array_equal(kernels.markov_sample_numba(init, trans, doms, u),
                          kernels.markov_sample_numpy(init, trans, doms, u))


@needs_numba
@given(st.integers(0, 10_000), st.integers(0, 30), st.integers(1, 8))
def test_bigram_counts_flavours_identical(seed, r, length):
    tokens = np.random.default_rng(seed).integers(0, 11, size=(r, length))
    a = kernels.bigram_counts_numba(tokens, 11)
    b = kernels.bigram_counts_numpy(tokens, 11)
    assert np.array_equal(a, b)
    assert a.sum() == r * max(length - 1, 0)


def test_markov_sample_follows_chain():
    # deterministic chain 0 -> 1 -> 2 -> 0
    v = 3
    trans = np.zeros((1, v, v))
    for i in range(v):
        trans[0, i, (i + 1) % v] = 1.0
    init = np.array([[1.0, 0.0, 0.0]])
    out = kernels.markov_sample(np.cumsum(init, -1), np.cumsum(trans, -1), np.zeros(4, dtype=np.int64),
                                np.random.default_rng(0).random((4, 6)))
    assert np.array_equal(out, np.tile([0, 1, 2, 0, 1, 2], (4, 1)))


def test_env_flag_selects_numpy_path():
    code = ("from mixagent import kernels, _accel; "
            "print(_accel.backend_name(), kernels.bigram_counts is kernels.bigram_counts_numpy)")
    env = dict(os.environ, MIXAGENT_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_benchmark_script_runs(tmp_path):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = tmp_path / "bench.json"
    subprocess.run([sys.executable, os.path.join(root, "benchmarks", "bench_kernels.py"), "--repeats", "1",
                    "--json", str(out)], check=True, capture_output=True)
    import json
    rows = json.loads(out.read_text())
    assert [r["kernel"] for r in rows] == ["inductive_scores", "markov_sample", "bigram_counts"]
