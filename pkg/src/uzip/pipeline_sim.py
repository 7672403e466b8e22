"""Timeline simulation of P2P send strategies: plain, encode-send, chunked, split-send.

Resources per endpoint are one GPU lane on each side and one link lane.
Receiver decoding streams with arrival: it cannot finish before the last
byte lands nor before ``decompress_latency`` has elapsed since the first byte,
plus the model's non-overlapped tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from uzip.compressor import compress_staged
from uzip.cost_model import (
    GIB,
    MIB,
    GpuCostModel,
    LinkModel,
    compress_latency,
    decompress_latency,
    split_stage_latency,
    transfer_time,
)
from uzip.errors import ConfigError
from uzip.float_codec import describe_dtype
from uzip.timeline import Timeline

DEFAULT_THRESHOLD_BYTES = 1 << 20
DEFAULT_CHUNK_BYTES = 8 << 20
STRATEGIES = ("plain", "encode", "chunked", "split")

TX_GPU, LINK, RX_GPU = "tx.gpu", "link", "rx.gpu"


def default_link() -> LinkModel:
    return LinkModel.from_gib_per_s(47.2)


@dataclass(frozen=True)
class P2PScenario:
    """One message over one link.

    ``ratio`` is compressed/original for the whole message and
    ``residual_fraction`` the share sent verbatim after the split (defaults to
    the dtype's layout).  The compressed part is ``ratio - residual_fraction``
    of the message.
    """

    message_bytes: int
    dtype: str = "bf16"
    ratio: float = 0.64
    residual_fraction: float | None = None
    gpu: GpuCostModel = field(default_factory=GpuCostModel)
    link: LinkModel = field(default_factory=default_link)
    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    compression_threshold_bytes: int = DEFAULT_THRESHOLD_BYTES
    measured: bool = False

    def __post_init__(self) -> None:
        describe_dtype(self.dtype)
        if self.message_bytes < 0:
            raise ConfigError("message_bytes must be >= 0")
        if self.chunk_bytes <= 0:
            raise ConfigError("chunk_bytes must be positive")
        if self.ratio <= 0 or (not self.measured and self.ratio > 1.5):
            raise ConfigError(f"fixed ratio must be in (0, 1.5], got {self.ratio}")
        if self.residual_fraction is None:
            object.__setattr__(self, "residual_fraction", describe_dtype(self.dtype).residual_fraction)

    @classmethod
    def measured_from(cls, raw, dtype: str = "bf16", **kwargs) -> "P2PScenario":
        """Run the real compressor on ``raw`` and take ratio and residual share from it."""
        blob, _ = compress_staged(raw, dtype)
        n = blob.original_bytes
        if n == 0:
            return cls(message_bytes=0, dtype=dtype, ratio=1.0, measured=True, **kwargs)
        return cls(
            message_bytes=n,
            dtype=dtype,
            ratio=blob.compressed_total_bytes / n,
            residual_fraction=(len(blob.residual) + len(blob.tail)) / n,
            measured=True,
            **kwargs,
        )

    @property
    def compresses(self) -> bool:
        """Compression engaged: at or above threshold, unless measured data did not shrink.

        A fixed ratio is always honored so that what-if runs (ratio 1.0, say)
        show the cost of compressing for nothing.
        """
        if self.message_bytes < self.compression_threshold_bytes:
            return False
        return not (self.measured and self.ratio >= 1.0)

    @property
    def residual_bytes(self) -> float:
        return self.residual_fraction * self.message_bytes

    @property
    def compressed_part_bytes(self) -> float:
        return max(self.ratio - self.residual_fraction, 0.0) * self.message_bytes


def _decode(tl: Timeline, s: P2PScenario, recv_start: float, recv_end: float, nbytes: float) -> float:
    end = max(recv_end, recv_start + decompress_latency(s.gpu, nbytes)) + s.gpu.decompress_tail_us
    tl.add("decompress", RX_GPU, recv_start, end, int(nbytes))
    return end


def simulate_plain(s: P2PScenario) -> Timeline:
    tl = Timeline(s.message_bytes, label="plain")
    tl.add("send", LINK, 0.0, transfer_time(s.link, s.message_bytes), s.message_bytes)
    return tl


def simulate_encode_send(s: P2PScenario) -> Timeline:
    """Compress everything, then send, then decode."""
    if not s.compresses:
        return simulate_plain(s)
    tl = Timeline(s.message_bytes, label="encode")
    c_end = compress_latency(s.gpu, s.message_bytes)
    tl.add("compress", TX_GPU, 0.0, c_end, s.message_bytes)
    wire = s.ratio * s.message_bytes
    send_end = c_end + transfer_time(s.link, wire)
    tl.add("send", LINK, c_end, send_end, int(wire))
    _decode(tl, s, c_end + s.link.setup_latency_us, send_end, s.message_bytes)
    return tl


def simulate_chunked(s: P2PScenario) -> Timeline:
    """Compress chunk by chunk; chunk i goes out once compressed and the link is free."""
    if not s.compresses:
        return simulate_plain(s)
    tl = Timeline(s.message_bytes, label="chunked")
    gpu_free = link_free = rx_free = 0.0
    offset = 0
    while offset < s.message_bytes:
        size = min(s.chunk_bytes, s.message_bytes - offset)
        c_end = gpu_free + compress_latency(s.gpu, size)
        tl.add("compress", TX_GPU, gpu_free, c_end, size)
        gpu_free = c_end
        wire = s.ratio * size
        start = max(c_end, link_free)
        link_free = start + transfer_time(s.link, wire)
        tl.add("send", LINK, start, link_free, int(wire))
        recv_start = start + s.link.setup_latency_us
        r_start = max(recv_start, rx_free)
        rx_free = max(link_free, r_start + decompress_latency(s.gpu, size))
        tl.add("decompress", RX_GPU, r_start, rx_free, size)
        offset += size
    if s.gpu.decompress_tail_us:
        tl.add("decompress_tail", RX_GPU, rx_free, rx_free + s.gpu.decompress_tail_us)
    return tl


def _split_send_two_messages(s: P2PScenario) -> Timeline:
    tl = Timeline(s.message_bytes, label="split")
    n = s.message_bytes
    s1 = split_stage_latency(s.gpu, n)
    c_end = compress_latency(s.gpu, n)
    tl.add("split", TX_GPU, 0.0, s1, n)
    tl.add("encode", TX_GPU, s1, c_end, n)
    res_end = s1 + transfer_time(s.link, s.residual_bytes)
    tl.add("send_residual", LINK, s1, res_end, int(s.residual_bytes))
    recv_start = s1 + s.link.setup_latency_us
    recv_end = res_end
    if s.compressed_part_bytes > 0:
        start = max(res_end, c_end)
        recv_end = start + transfer_time(s.link, s.compressed_part_bytes)
        tl.add("send_compressed", LINK, start, recv_end, int(s.compressed_part_bytes))
        recv_start = start + s.link.setup_latency_us
    _decode(tl, s, recv_start, recv_end, n)
    return tl


def simulate_split_send(s: P2PScenario) -> Timeline:
    """Ship the residual right after the split; the compressed part follows encoding.

    When per-message setup cost makes the early residual send a net loss
    (only possible for small messages with a large setup latency), the two
    parts go out as one message after full compression instead.
    """
    if not s.compresses:
        return simulate_plain(s)
    tl = _split_send_two_messages(s)
    single = simulate_encode_send(s)
    if single.total_us < tl.total_us:
        single.label = "split(merged)"
        return single
    return tl


def simulate(s: P2PScenario, strategy: str) -> Timeline:
    try:
        fn = {
            "plain": simulate_plain,
            "encode": simulate_encode_send,
            "chunked": simulate_chunked,
            "split": simulate_split_send,
        }[strategy]
    except KeyError:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}") from None
    return fn(s)


def amdahl_upper_bound(link: LinkModel, ratio: float) -> float:
    """Best achievable throughput (GiB/s) if only the compressed bytes cost link time."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    return link.bandwidth_bytes_per_s / ratio / GIB


def gain(s: P2PScenario, strategy: str) -> float:
    """Relative throughput gain of ``strategy`` over plain (0.10 means +10%)."""
    base = simulate_plain(s).total_us
    other = simulate(s, strategy).total_us
    return base / other - 1.0


def with_size(s: P2PScenario, message_bytes: int) -> P2PScenario:
    return replace(s, message_bytes=message_bytes)


__all__ = [
    "MIB",
    "P2PScenario",
    "STRATEGIES",
    "amdahl_upper_bound",
    "gain",
    "simulate",
    "simulate_chunked",
    "simulate_encode_send",
    "simulate_plain",
    "simulate_split_send",
    "with_size",
]
