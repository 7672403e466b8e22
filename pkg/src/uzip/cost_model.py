"""Affine GPU compression latency and alpha-beta link models."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from uzip.errors import ConfigError, InsufficientDataError

log = logging.getLogger(__name__)

MIB = 1 << 20
GIB = 1 << 30

# Straight line through (4 MiB, 70 us) and (16 MiB, 90 us).
DEFAULT_FIXED_OVERHEAD_US = 190.0 / 3.0
DEFAULT_PER_MIB_US = 5.0 / 3.0
DEFAULT_SPLIT_FRACTION = 0.14


@dataclass(frozen=True)
class GpuCostModel:
    fixed_overhead_us: float = DEFAULT_FIXED_OVERHEAD_US
    per_mib_us: float = DEFAULT_PER_MIB_US
    split_fraction: float = DEFAULT_SPLIT_FRACTION
    decompress_scale: float = 1.0
    decompress_tail_us: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name} must be >= 0")
        if not 0.0 <= self.split_fraction < 1.0:
            raise ConfigError("split_fraction must be in [0, 1)")


@dataclass(frozen=True)
class LinkModel:
    bandwidth_bytes_per_s: float
    setup_latency_us: float = 0.0
    kind: str = "inter_node"

    def __post_init__(self) -> None:
        if self.bandwidth_bytes_per_s <= 0:
            raise ConfigError("link bandwidth must be positive")
        if self.setup_latency_us < 0:
            raise ConfigError("setup latency must be >= 0")
        if self.kind not in ("inter_node", "intra_node"):
            raise ConfigError(f"unknown link kind {self.kind!r}")

    @classmethod
    def from_gib_per_s(cls, gib_per_s: float, setup_latency_us: float = 0.0, kind: str = "inter_node") -> "LinkModel":
        return cls(gib_per_s * GIB, setup_latency_us, kind)

    @property
    def bandwidth_gib_per_s(self) -> float:
        return self.bandwidth_bytes_per_s / GIB


def compress_latency(model: GpuCostModel, nbytes: float) -> float:
    return model.fixed_overhead_us + model.per_mib_us * (nbytes / MIB)


def split_stage_latency(model: GpuCostModel, nbytes: float) -> float:
    return model.split_fraction * compress_latency(model, nbytes)


def decompress_latency(model: GpuCostModel, nbytes: float) -> float:
    return model.decompress_scale * compress_latency(model, nbytes)


def transfer_time(link: LinkModel, nbytes: float) -> float:
    return link.setup_latency_us + nbytes / link.bandwidth_bytes_per_s * 1e6


def throughput_gib_per_s(nbytes: float, micros: float) -> float:
    if micros <= 0:
        return float("inf")
    return nbytes / GIB / (micros * 1e-6)


# -- calibration -----------------------------------------------------------------------------------


class CostFit(NamedTuple):
    model: GpuCostModel
    rms_residual_us: float
    clamped: bool


def fit_cost_model_report(samples: Iterable[tuple[float, float]], base: GpuCostModel | None = None) -> CostFit:
    """Least-squares line of latency (us) against size (MiB).

    A negative intercept is clamped to zero and the slope refit through the
    origin.  Non-latency fields are copied from ``base``.
    """
    pts = [(float(b), float(us)) for b, us in samples]
    sizes = np.array([p[0] for p in pts]) / MIB
    lat = np.array([p[1] for p in pts])
    if len(np.unique(sizes)) < 2:
        raise InsufficientDataError("need latency samples at two or more distinct sizes")
    slope, intercept = np.polyfit(sizes, lat, 1)
    clamped = intercept < 0
    if clamped:
        log.warning("fitted intercept %.3f us is negative; clamping to 0", intercept)
        intercept = 0.0
        slope = float(sizes @ lat / (sizes @ sizes))
    if slope < 0:
        raise InsufficientDataError("latency decreases with size; refusing to fit")
    resid = lat - (intercept + slope * sizes)
    model = replace(base or GpuCostModel(), fixed_overhead_us=float(intercept), per_mib_us=float(slope))
    return CostFit(model, float(np.sqrt(np.mean(resid**2))), bool(clamped))


def fit_cost_model(samples: Iterable[tuple[float, float]]) -> GpuCostModel:
    return fit_cost_model_report(samples).model


def load_calibration_csv(path) -> list[tuple[float, float]]:
    """Read ``bytes,latency_us`` rows (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if rows:  # only the first line may be a header
                    raise ConfigError(f"bad calibration row: {rec}") from None
    return rows


# -- profiles ----------------------------------------------------------------------------------------

PROFILE_KEYS = tuple(f.name for f in fields(GpuCostModel))


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def model_from_mapping(mapping, base: GpuCostModel | None = None) -> GpuCostModel:
    kwargs = {k: float(mapping[k]) for k in PROFILE_KEYS if k in mapping}
    return replace(base or GpuCostModel(), **kwargs)


def dump_profile(model: GpuCostModel) -> str:
    return "".join(f"{k}={v!r}\n" for k, v in asdict(model).items())


def load_profile(path) -> GpuCostModel:
    return model_from_mapping(parse_key_values(Path(path).read_text()))
