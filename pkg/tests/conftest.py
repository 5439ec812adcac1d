import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixagent.config import profile_from_dict

settings.register_profile("mixagent", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "mixagent"))

# Small enough that a full pipeline pass takes seconds.
TINY = {
    "seed": 3,
    "base": {"steps": 10, "samples": 256},
    "sampling": {"paths": 2, "max_steps": 6, "samples_per_step": 256, "candidate_count": 200,
                 "target_pool": 1024, "tiers": [1, 10]},
    "sft": {"steps": 20},
    "cql": {"steps": 20, "actor_delay": 5},
    "guide": {"max_steps": 6, "samples_per_step": 256, "target_pool": 1024},
    "regmix": {"mixtures": 12, "steps": 3},
}


@pytest.fixture(scope="session")
def tiny_profile():
    return profile_from_dict(TINY)


@pytest.fixture(scope="session")
def tiny_env(tiny_profile):
    from mixagent import pipeline
    return pipeline.build_env(tiny_profile)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def max_fd_error(loss_of, tensors: dict, coords: int = 50, h: float = 1e-5, seed: int = 0,
                 analytic: dict | None = None):
    """Largest relative error between analytic and central-difference gradients.

    ``loss_of(tensors)`` returns a float. Coordinates are drawn uniformly over
    every parameter entry. A step of 1e-5 keeps cancellation noise well under
    the tolerance for losses of order one while truncation error stays O(h^2).
    """
    rng = np.random.default_rng(seed)
    names = sorted(tensors)
    sizes = np.array([tensors[k].size for k in names])
    worst = 0.0
    for _ in range(coords):
        k = names[rng.choice(len(names), p=sizes / sizes.sum())]
        idx = tuple(int(rng.integers(s)) for s in tensors[k].shape)
        orig = tensors[k][idx]
        tensors[k][idx] = orig + h
        up = loss_of(tensors)
        tensors[k][idx] = orig - h
        down = loss_of(tensors)
        tensors[k][idx] = orig
        num = (up - down) / (2 * h)
        ana = analytic[k][idx]
        denom = max(abs(num), abs(ana), 1e-6)
        worst = max(worst, abs(num - ana) / denom)
    return worst


@pytest.fixture
def fd_error():
    return max_fd_error


# acceptance results: criterion number -> (name, passed, detail)
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
ACCEPTANCE_MANIFEST: dict = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> str:
    ACCEPTANCE[number] = (name, bool(passed), detail)
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {name}: {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {name}: {detail}")
    if ACCEPTANCE_MANIFEST:
        import json
        from pathlib import Path
        out = Path(__file__).resolve().parent.parent / "acceptance" / "manifest.json"
        out.parent.mkdir(exist_ok=True)
        doc = {**ACCEPTANCE_MANIFEST,
               "criteria": {str(k): {"name": v[0], "passed": v[1], "detail": v[2]}
                            for k, v in sorted(ACCEPTANCE.items())}}
        out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        terminalreporter.write_line(f"acceptance manifest: {out}")
