"""On-disk formats: line-delimited trajectories, manifests, CSV tables and hashing."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import DomainSpace, TrajectoryRecord
from .errors import CheckpointInvalid, DataError


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text; floats use repr, which round-trips exactly."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_bytes(path, data: bytes) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return sha256_bytes(data)


def write_json(path, obj: Any) -> str:
    return write_bytes(path, (json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n").encode())


def read_json(path) -> Any:
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# trajectories


def trajectory_to_dict(t: TrajectoryRecord) -> dict:
    d = {
        "seed": t.provenance.get("seed"),
        "tier": t.provenance.get("tier"),
        "index": t.provenance.get("index"),
        "config_hash": t.provenance.get("config_hash"),
        "start": t.start.tolist(),
        "actions": t.actions.tolist(),
    }
    if t.feedback is not None:
        d["feedback"] = t.feedback.tolist()
    return d


def trajectory_from_dict(d: dict, n: int | None = None) -> TrajectoryRecord:
    start = np.array(d["start"], dtype=np.float64)
    n = start.shape[0] if n is None else n
    actions = np.array(d["actions"], dtype=np.float64).reshape(-1, n)
    fb = d.get("feedback")
    prov = {k: d[k] for k in ("seed", "tier", "index", "config_hash") if d.get(k) is not None}
    return TrajectoryRecord(start, actions, None if fb is None else np.array(fb, dtype=np.float64), prov)


def trajectories_bytes(trajs: Iterable[TrajectoryRecord]) -> bytes:
    return "".join(canonical_json(trajectory_to_dict(t)) + "\n" for t in trajs).encode()


def write_trajectories(path, trajs: Iterable[TrajectoryRecord]) -> str:
    return write_bytes(path, trajectories_bytes(trajs))


def read_trajectories(path) -> list[TrajectoryRecord]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(trajectory_from_dict(json.loads(line)))
            except (KeyError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad trajectory record ({e})") from e
    return out


def write_space(path, space: DomainSpace) -> str:
    return write_json(path, space.to_dict())


def read_space(path) -> DomainSpace:
    return DomainSpace.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# tables


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_cell(v) for v in r))
    return write_bytes(path, ("\n".join(lines) + "\n").encode())


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def curve_rows(curve: Sequence[dict], keys: Sequence[str]):
    return [[c.get(k) for k in keys] for c in curve]


def require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CheckpointInvalid(f"{what} not found: {p}")
    return p
