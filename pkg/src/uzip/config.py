"""Scenario and cluster files: ``key = value`` text or a JSON object.

Sizes accept binary suffixes (``16MiB``, ``32KiB``, ``1GiB``); bandwidths are
given in GiB/s.  GPU cost keys are the fields of ``GpuCostModel``.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

from uzip.collective_sim import ClusterConfig
from uzip.cost_model import PROFILE_KEYS, GpuCostModel, LinkModel, load_profile, model_from_mapping, parse_key_values
from uzip.errors import ConfigError
from uzip.pipeline_sim import P2PScenario

PROFILE_ENV = "UZIP_PROFILE"

_UNITS = {"": 1, "b": 1, "kib": 1 << 10, "mib": 1 << 20, "gib": 1 << 30, "kb": 1000, "mb": 10**6, "gb": 10**9}
_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*$")


def parse_size(value) -> int:
    if isinstance(value, (int, float)):
        return int(value)
    m = _SIZE_RE.match(str(value))
    if not m or m.group(2).lower() not in _UNITS:
        raise ConfigError(f"cannot parse size {value!r}")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


def load_mapping(source) -> dict:
    """Read a config from a path (or literal text when it does not name a file)."""
    text = str(source)
    p = Path(text)
    try:
        if p.is_file():
            text = p.read_text()
    except OSError:
        pass
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return data
    return parse_key_values(text)


def _float(m: dict, key: str, default=None):
    if key not in m:
        return default
    try:
        return float(m[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {m[key]!r}") from None


def resolve_gpu(m: dict, profile: str | None = None) -> GpuCostModel:
    """Profile file (explicit, then ``$UZIP_PROFILE``) overridden by inline keys."""
    path = profile or m.get("profile") or os.environ.get(PROFILE_ENV)
    base = load_profile(path) if path else GpuCostModel()
    try:
        return model_from_mapping({k: m[k] for k in PROFILE_KEYS if k in m}, base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _link(m: dict, prefix: str = "", default_gib: float = 47.2, kind: str = "inter_node") -> LinkModel:
    return LinkModel.from_gib_per_s(
        _float(m, f"{prefix}bandwidth_gib_s", default_gib),
        _float(m, f"{prefix}setup_latency_us", 0.0),
        str(m.get(f"{prefix}link_kind", kind)),
    )


def scenario_from_mapping(m: dict, profile: str | None = None, **overrides) -> P2PScenario:
    kwargs = dict(
        message_bytes=parse_size(m.get("message_bytes", 0)),
        dtype=str(m.get("dtype", "bf16")),
        ratio=_float(m, "ratio", 0.64),
        residual_fraction=_float(m, "residual_fraction"),
        gpu=resolve_gpu(m, profile),
        link=_link(m),
        chunk_bytes=parse_size(m.get("chunk_bytes", 8 << 20)),
        compression_threshold_bytes=parse_size(m.get("threshold_bytes", 1 << 20)),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return P2PScenario(**kwargs)


def cluster_from_mapping(m: dict, profile: str | None = None, **overrides) -> ClusterConfig:
    kwargs = dict(
        n_ranks=int(m.get("n_ranks", 4)),
        dtype=str(m.get("dtype", "bf16")),
        per_rank_bytes=parse_size(m["per_rank_bytes"]) if "per_rank_bytes" in m else None,
        gpu=resolve_gpu(m, profile),
        compression=m.get("compression", "on"),
        threshold_bytes=parse_size(m.get("threshold_bytes", 1 << 20)),
        align_bytes=parse_size(m.get("align_bytes", 32 << 10)),
        reduce_op=str(m.get("reduce_op", "sum")),
        compress_intra_node=m.get("compress_intra_node", "on"),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    inter = _link(m)
    if "ranks_per_node" in m:
        intra = _link(m, "intra_", default_gib=300.0, kind="intra_node")
        return ClusterConfig.two_tier(ranks_per_node=int(m["ranks_per_node"]), inter=inter, intra=intra, **kwargs)
    return ClusterConfig(default_link=inter, **kwargs)
