"""Run configuration: one versioned document with named profiles and strict keys."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .agent.actor import SftConfig
from .agent.cql import CqlConfig
from .env.corpus import CorpusSpec
from .env.proxy import ProxyConfig
from .errors import ConfigError
from .io import canonical_json
from .orchestrator.guide import GuidedRunConfig
from .sampler import FULL_TIERS, SamplerConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    pairs: int = 128
    prompt_len: int = 4


@dataclass(frozen=True)
class BaseConfig:
    """Pre-training of the base learner on the start state."""

    steps: int = 100
    samples: int = 1024


@dataclass(frozen=True)
class SamplingConfig:
    paths: int = 16
    max_steps: int = 40
    samples_per_step: int = 4096
    candidate_count: int = 20000
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    target_pool: int = 20 * 4096
    tiers: tuple[int, ...] = FULL_TIERS
    share_across_runs: bool = False

    def sampler(self, top_k: int, seed: int) -> SamplerConfig:
        return SamplerConfig(paths=self.paths, max_steps=self.max_steps, samples_per_step=self.samples_per_step,
                             top_k=min(top_k, self.candidate_count), candidate_count=self.candidate_count,
                             alpha=self.alpha, beta=self.beta, gamma=self.gamma, target_pool=self.target_pool,
                             seed=seed)


@dataclass(frozen=True)
class NetConfig:
    layers: int = 2
    d_model: int = 32
    heads: int = 4
    max_len: int = 64
    ff_mult: int = 4


@dataclass(frozen=True)
class RegMixConfig:
    mixtures: int = 64
    steps: int = 10


@dataclass(frozen=True)
class BaselineConfig:
    static_target_share: float = 0.5  # Target-field share of the static mixture


@dataclass(frozen=True)
class Profile:
    version: int = CONFIG_VERSION
    name: str = "desk"
    seed: int = 0
    corpus: CorpusSpec = CorpusSpec()
    eval: EvalConfig = EvalConfig()
    proxy: ProxyConfig = ProxyConfig(lr=1.0)
    base: BaseConfig = BaseConfig()
    sampling: SamplingConfig = SamplingConfig()
    actor: NetConfig = NetConfig()
    critic: NetConfig = NetConfig(layers=1)
    sft: SftConfig = SftConfig()
    # penalty weight and sync period sized for rewards mapped into [0, 1 - gamma]
    cql: CqlConfig = CqlConfig(alpha=0.01, target_sync=10, steps=1000, actor_delay=300, anchor=0.3)
    guide: GuidedRunConfig = GuidedRunConfig()
    regmix: RegMixConfig = RegMixConfig()
    baselines: BaselineConfig = BaselineConfig()

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = v.to_dict() if hasattr(v, "to_dict") else dataclasses.asdict(v)
            out[f.name] = v
        return _plain(out)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:16]


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "value") and not isinstance(v, (int, float, str, bool)):
        return v.value
    return v


SECTIONS = {f.name: f for f in dataclasses.fields(Profile)}
# sections whose seed field is filled from the master seed by keyed derivation
SEEDED_SECTIONS = ("corpus", "sft", "cql", "guide")


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r}")
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def profile_from_dict(doc: dict, base: Profile | None = None) -> Profile:
    """Overlay ``doc`` on ``base`` (default: the named profile in doc, else desk)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(doc) - set(SECTIONS) - {"profile"})
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    if base is None:
        base = named_profile(doc.get("profile", "desk"))
    updates = {}
    for k, v in doc.items():
        if k in ("profile", "version"):
            continue
        cur = getattr(base, k)
        if dataclasses.is_dataclass(cur):
            merged = dataclasses.asdict(cur) if not hasattr(cur, "to_dict") else _plain(cur.to_dict())
            if not isinstance(v, dict):
                raise ConfigError(f"{k}: expected a mapping")
            unknown = sorted(set(v) - set(merged))
            if unknown:
                raise ConfigError(f"{k}: unknown key {unknown[0]!r}")
            if "seed" in v and k in SEEDED_SECTIONS:
                raise ConfigError(f"{k}: 'seed' is derived from the top-level seed and cannot be set")
            merged.update(v)
            updates[k] = _build(type(cur), _section_ready(type(cur), merged), k)
        else:
            updates[k] = v
    if "name" not in doc and "profile" in doc:
        updates["name"] = doc["profile"]
    return dataclasses.replace(base, **updates)


def _section_ready(cls, merged: dict) -> dict:
    if cls is CorpusSpec:
        for k in ("source_mix", "target_mix"):
            if merged.get(k) is not None:
                merged[k] = tuple(merged[k])
    return merged


def desk_profile() -> Profile:
    return Profile()


def full_profile() -> Profile:
    """Full-scale values (52 domains, 2.1M-parameter actor) where a CPU run can express them."""
    return Profile(
        name="full",
        corpus=CorpusSpec(n_source=26, n_target=26),
        sampling=SamplingConfig(paths=96, max_steps=80, samples_per_step=8000, candidate_count=20000,
                                target_pool=50 * 8000),
        actor=NetConfig(layers=2, d_model=296, heads=8, max_len=128),
        critic=NetConfig(layers=1, d_model=296, heads=8, max_len=128),
        guide=GuidedRunConfig(max_steps=80, samples_per_step=64000, target_pool=40 * 64000),
        regmix=RegMixConfig(mixtures=512, steps=10),
    )


PROFILES = {"desk": desk_profile, "full": full_profile}


def named_profile(name: str) -> Profile:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def load_profile(path) -> Profile:
    p = Path(path)
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return profile_from_dict(doc)


def dump_profile(profile: Profile) -> str:
    """YAML that loads back to the same profile (derived section seeds left out)."""
    doc = profile.to_dict()
    for k in SEEDED_SECTIONS:
        doc[k].pop("seed", None)
    return yaml.safe_dump(doc, sort_keys=True)
