"""Functional and timed simulation of collectives over N ranks with compression hooks.

Every collective moves real tensor data through the compressor, so outputs can
be compared bitwise against an uncompressed run and against
:func:`reference_all_reduce`.  Alongside the data it records per-rank counters
and a list of phases (barrier-separated groups of messages) that the timing
engine turns into a :class:`~uzip.timeline.Timeline`.

Reduction contract: values are widened to f32, added, and rounded back to the
tensor's format after every hop.  Shard ``c`` is folded in ring order starting
at rank ``c`` (``c, c+1, ..., c-1``), which is the order a ring reduce-scatter
visits it; two-shot uses the same order so both algorithms agree bitwise.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from uzip.ans import DEFAULT_BLOCK_SIZE, DEFAULT_PROB_BITS, TABLE_BYTES, FrequencyTable
from uzip.compressor import HEADER_BYTES, compress_staged, decompress
from uzip.cost_model import GpuCostModel, LinkModel, compress_latency, decompress_latency, transfer_time
from uzip.datagen import numpy_dtype, reduce_pair
from uzip.errors import ConfigError
from uzip.float_codec import describe_dtype
from uzip.pipeline_sim import P2PScenario, default_link, simulate, simulate_plain
from uzip.timeline import Timeline

DEFAULT_THRESHOLD_BYTES = 1 << 20
DEFAULT_ALIGN_BYTES = 32 << 10
ALGORITHMS = ("ring", "two-shot", "all-to-all")


def _parse_switch(value) -> bool:
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("on", "true", "1", "yes"):
            return True
        if v in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"expected on/off, got {value!r}")
    return bool(value)


@dataclass
class ClusterConfig:
    n_ranks: int
    dtype: str = "bf16"
    per_rank_bytes: int | None = None
    links: list[list[LinkModel]] | None = None
    default_link: LinkModel = field(default_factory=default_link)
    gpu: GpuCostModel = field(default_factory=GpuCostModel)
    compression: bool = True
    threshold_bytes: int = DEFAULT_THRESHOLD_BYTES
    align_bytes: int = DEFAULT_ALIGN_BYTES
    reduce_op: str = "sum"
    compress_intra_node: bool = True
    block_size: int = DEFAULT_BLOCK_SIZE
    prob_bits: int = DEFAULT_PROB_BITS

    def __post_init__(self) -> None:
        self.compression = _parse_switch(self.compression)
        self.compress_intra_node = _parse_switch(self.compress_intra_node)
        d = describe_dtype(self.dtype)
        if self.n_ranks < 2:
            raise ConfigError("a cluster needs at least 2 ranks")
        if self.reduce_op != "sum":
            raise ConfigError(f"unsupported reduce op {self.reduce_op!r}")
        if self.align_bytes <= 0 or self.align_bytes % d.group_bytes:
            raise ConfigError(f"align_bytes must be a positive multiple of {d.group_bytes}")
        if self.threshold_bytes < 0:
            raise ConfigError("threshold_bytes must be >= 0")
        if self.links is not None:
            if len(self.links) != self.n_ranks or any(len(row) != self.n_ranks for row in self.links):
                raise ConfigError("links must be an n_ranks x n_ranks matrix")

    @classmethod
    def two_tier(
        cls,
        n_ranks: int,
        ranks_per_node: int,
        inter: LinkModel,
        intra: LinkModel,
        **kwargs,
    ) -> "ClusterConfig":
        """Ranks grouped into nodes of ``ranks_per_node``; pairs in one node use ``intra``."""
        if ranks_per_node <= 0:
            raise ConfigError("ranks_per_node must be positive")
        links = [
            [intra if i // ranks_per_node == j // ranks_per_node else inter for j in range(n_ranks)]
            for i in range(n_ranks)
        ]
        return cls(n_ranks=n_ranks, links=links, default_link=inter, **kwargs)

    def link(self, src: int, dst: int) -> LinkModel:
        return self.default_link if self.links is None else self.links[src][dst]

    def allows_compression(self, src: int, dst: int) -> bool:
        return self.compress_intra_node or self.link(src, dst).kind != "intra_node"

    def compressed_region(self, nbytes: int) -> int:
        """Bytes of a message that go through the compressor (0 means send raw)."""
        if not self.compression or nbytes < self.threshold_bytes:
            return 0
        return nbytes // self.align_bytes * self.align_bytes


def _zeros(n: int) -> np.ndarray:
    return np.zeros(n, dtype=np.int64)


@dataclass
class Counters:
    n_ranks: int
    compress_invocations: np.ndarray = None
    decompress_invocations: np.ndarray = None
    wire_bytes: np.ndarray = None
    raw_wire_bytes: np.ndarray = None
    table_bytes: np.ndarray = None
    messages: np.ndarray = None
    compressed_messages: np.ndarray = None
    per_element_compress_count: int = 0

    _ARRAYS = (
        "compress_invocations",
        "decompress_invocations",
        "wire_bytes",
        "raw_wire_bytes",
        "table_bytes",
        "messages",
        "compressed_messages",
    )

    def __post_init__(self) -> None:
        for name in self._ARRAYS:
            if getattr(self, name) is None:
                setattr(self, name, _zeros(self.n_ranks))

    @property
    def total_wire_bytes(self) -> int:
        return int(self.wire_bytes.sum())

    @property
    def total_table_bytes(self) -> int:
        return int(self.table_bytes.sum())

    def to_dict(self) -> dict:
        out: dict = {"n_ranks": self.n_ranks}
        for name in self._ARRAYS:
            out[name] = [int(v) for v in getattr(self, name)]
        out["per_element_compress_count"] = int(self.per_element_compress_count)
        return out


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    raw_bytes: int
    wire_bytes: float
    decompress_bytes: int = 0


@dataclass
class Phase:
    """Messages that may overlap; the next phase starts once all of them are decoded."""

    name: str
    messages: list[Message] = field(default_factory=list)
    compress_bytes: dict[int, int] = field(default_factory=lambda: defaultdict(int))


class CollectiveResult(NamedTuple):
    outputs: list
    counters: Counters
    timeline: Timeline


# -- timing ------------------------------------------------------------------------------------------


def run_phases(cfg: ClusterConfig, phases: Sequence[Phase], message_bytes: int, label: str = "") -> Timeline:
    """Schedule phases back to back.

    Within a phase each rank compresses its outgoing bytes as one batch, sends
    its messages one after another on its own transmit lane, and decodes
    everything it received as one batch that streams with arrival but cannot
    start before its own compression finished.
    """
    tl = Timeline(message_bytes, label=label)
    t0 = 0.0
    for ph in phases:
        gpu_free: dict[int, float] = {}
        for r, nb in sorted(ph.compress_bytes.items()):
            if nb > 0:
                end = t0 + compress_latency(cfg.gpu, nb)
                tl.add(f"{ph.name}.compress", f"rank{r}.gpu", t0, end, nb)
                gpu_free[r] = end
        tx_free: dict[int, float] = {}
        arrivals: dict[int, list[tuple[float, float, int]]] = defaultdict(list)
        phase_end = max(gpu_free.values(), default=t0)
        for m in ph.messages:
            ready = gpu_free.get(m.src, t0) if m.decompress_bytes else t0
            start = max(ready, tx_free.get(m.src, t0))
            link = cfg.link(m.src, m.dst)
            end = start + transfer_time(link, m.wire_bytes)
            tl.add(f"{ph.name}.send", f"rank{m.src}.tx", start, end, int(m.wire_bytes))
            tx_free[m.src] = end
            arrivals[m.dst].append((start + link.setup_latency_us, end, m.decompress_bytes))
            phase_end = max(phase_end, end)
        for dst, recs in sorted(arrivals.items()):
            dec = sum(r[2] for r in recs)
            if dec == 0:
                continue
            first = min(r[0] for r in recs if r[2])
            start = max(first, gpu_free.get(dst, t0))
            end = max(max(r[1] for r in recs), start + decompress_latency(cfg.gpu, dec))
            end += cfg.gpu.decompress_tail_us
            tl.add(f"{ph.name}.decompress", f"rank{dst}.gpu", start, end, dec)
            phase_end = max(phase_end, end)
        t0 = phase_end
    return tl


# -- functional channel ------------------------------------------------------------------------------


@dataclass
class _Packet:
    data: np.ndarray
    region_elems: int = 0  # elements that went through the compressor
    blob: bytes | None = None
    table: FrequencyTable | None = None
    wire_bytes: int = 0

    @property
    def compressed(self) -> bool:
        return self.blob is not None


class _Channel:
    """Compression policy and bookkeeping for one collective invocation.

    The first message that compresses builds the frequency table from its own
    histogram and carries it; later messages reuse it and omit it from the
    wire.  A message whose compressed form is not smaller than the raw bytes
    is sent raw (the compression attempt still counts).
    """

    def __init__(self, cfg: ClusterConfig, counters: Counters):
        self.cfg = cfg
        self.desc = describe_dtype(cfg.dtype)
        self.counters = counters
        self.table: FrequencyTable | None = None

    def encode(self, src: int, arr: np.ndarray, allow: bool, phase: Phase) -> _Packet:
        arr = np.ascontiguousarray(arr).copy()
        nbytes = arr.nbytes
        region = self.cfg.compressed_region(nbytes) if allow else 0
        if region == 0:
            return _Packet(arr, wire_bytes=nbytes)
        raw = arr.view(np.uint8)
        first = self.table is None
        blob, _ = compress_staged(
            raw[:region],
            self.desc,
            block_size=self.cfg.block_size,
            prob_bits=self.cfg.prob_bits,
            table=self.table,
            omit_table=not first,
        )
        self.counters.compress_invocations[src] += 1
        phase.compress_bytes[src] += region
        region_elems = region // self.desc.element_bytes
        data = blob.to_bytes()
        wire = len(data) + (nbytes - region)
        if wire >= nbytes:
            return _Packet(arr, region_elems=region_elems, wire_bytes=nbytes)
        table = blob.tables[0]
        if first:
            self.table = table
            self.counters.table_bytes[src] += TABLE_BYTES
        return _Packet(arr, region_elems, data, table, wire)

    def deliver(self, pkt: _Packet, src: int, dst: int, phase: Phase, use_compressed: bool = True) -> np.ndarray:
        c = self.counters
        nbytes = pkt.data.nbytes
        c.messages[src] += 1
        c.raw_wire_bytes[src] += nbytes
        if not (pkt.compressed and use_compressed):
            c.wire_bytes[src] += nbytes
            phase.messages.append(Message(src, dst, nbytes, nbytes))
            return pkt.data.copy()
        c.wire_bytes[src] += pkt.wire_bytes
        c.compressed_messages[src] += 1
        region = pkt.region_elems * self.desc.element_bytes
        head = decompress(pkt.blob, table=pkt.table)
        c.decompress_invocations[dst] += 1
        phase.messages.append(Message(src, dst, nbytes, pkt.wire_bytes, region))
        out = np.empty_like(pkt.data)
        view = out.view(np.uint8)
        view[:region] = np.frombuffer(head, dtype=np.uint8)
        view[region:] = pkt.data.view(np.uint8)[region:]  # raw tail travels verbatim
        return out


def _max_count(counts) -> int:
    return max((int(c.max()) for row in counts for c in row if c.size), default=0)


def _compress_mask(n: int, pkt: _Packet) -> np.ndarray:
    m = np.zeros(n, dtype=np.int32)
    m[: pkt.region_elems] = 1
    return m


# -- reference ---------------------------------------------------------------------------------------


def _as_arrays(inputs, dtype: str) -> list[np.ndarray]:
    nd = numpy_dtype(dtype)
    out = []
    for x in inputs:
        a = np.asarray(x)
        if a.dtype != nd:
            if a.dtype.kind == "u":
                a = a.view(nd)
            elif a.dtype == np.float64:  # plain Python numbers
                a = a.astype(nd)
            else:
                raise ConfigError(f"input dtype {a.dtype} does not match cluster dtype {dtype}")
        out.append(np.ascontiguousarray(a).reshape(-1))
    return out


def reference_reduce(inputs: Sequence[np.ndarray], op: str = "sum", order: Sequence[int] | None = None) -> np.ndarray:
    """Element-wise fold over ``inputs`` in ``order`` (rank order by default)."""
    arrs = [np.asarray(x) for x in inputs]
    if not arrs:
        raise ValueError("nothing to reduce")
    if any(a.shape != arrs[0].shape or a.dtype != arrs[0].dtype for a in arrs):
        raise ConfigError("reduce inputs must share shape and dtype")
    order = list(range(len(arrs))) if order is None else list(order)
    acc = arrs[order[0]].copy()
    for k in order[1:]:
        acc = reduce_pair(acc, arrs[k], op)
    return acc


def ring_order(index: int, n_ranks: int) -> list[int]:
    """Fold order for shard ``index``: the ranks in ring order starting at ``index``."""
    return [(index + k) % n_ranks for k in range(n_ranks)]


def shard(arr: np.ndarray, n: int) -> list[np.ndarray]:
    """``n`` contiguous shards as copies; sizes differ by at most one element."""
    return [part.copy() for part in np.array_split(arr, n)]


def reference_all_reduce(inputs: Sequence[np.ndarray], op: str = "sum") -> np.ndarray:
    """All-reduce result under the shard-wise ring-order contract."""
    arrs = [np.asarray(x).reshape(-1) for x in inputs]
    n = len(arrs)
    shards = [shard(a, n) for a in arrs]
    parts = [reference_reduce([s[c] for s in shards], op, ring_order(c, n)) for c in range(n)]
    return np.concatenate(parts)


# -- collectives -------------------------------------------------------------------------------------


def _check_all_reduce_inputs(cfg: ClusterConfig, inputs) -> list[np.ndarray]:
    if len(inputs) != cfg.n_ranks:
        raise ConfigError(f"expected {cfg.n_ranks} inputs, got {len(inputs)}")
    arrs = _as_arrays(inputs, cfg.dtype)
    if any(a.size != arrs[0].size for a in arrs):
        raise ConfigError("all ranks must contribute tensors of the same size")
    return arrs


def ring_all_reduce(cfg: ClusterConfig, inputs) -> CollectiveResult:
    """Reduce-scatter then all-gather around the ring ``r -> r + 1``.

    Reduce-scatter step ``s``: rank ``r`` sends shard ``(r - s) mod N``; the
    receiver adds its own copy.  Afterwards rank ``r`` holds the full sum of
    shard ``r + 1``, which the all-gather forwards hop by hop, recompressing
    at each hop.
    """
    arrs = _check_all_reduce_inputs(cfg, inputs)
    n = cfg.n_ranks
    bufs = [shard(a, n) for a in arrs]
    counters = Counters(n)
    chan = _Channel(cfg, counters)
    counts = [[np.zeros(b.size, dtype=np.int32) for b in row] for row in bufs]
    phases: list[Phase] = []

    def step(s: int, shard_of, reduce: bool, name: str) -> None:
        ph = Phase(name)
        sends = []
        for r in range(n):
            c, dst = shard_of(r, s), (r + 1) % n
            sends.append((r, dst, c, chan.encode(r, bufs[r][c], cfg.allows_compression(r, dst), ph)))
        for r, dst, c, pkt in sends:
            got = chan.deliver(pkt, r, dst, ph)
            hops = counts[r][c] + _compress_mask(got.size, pkt)
            if reduce:
                bufs[dst][c] = reduce_pair(got, bufs[dst][c], cfg.reduce_op)
                counts[dst][c] = np.maximum(hops, counts[dst][c])
            else:
                bufs[dst][c] = got
                counts[dst][c] = hops
        phases.append(ph)

    for s in range(n - 1):
        step(s, lambda r, s: (r - s) % n, True, f"rs{s}")
    for s in range(n - 1):
        step(s, lambda r, s: (r + 1 - s) % n, False, f"ag{s}")

    counters.per_element_compress_count = _max_count(counts)
    label = f"ring n={n} compression={'on' if cfg.compression else 'off'}"
    tl = run_phases(cfg, phases, arrs[0].nbytes, label)
    return CollectiveResult([np.concatenate(b) for b in bufs], counters, tl)


def two_shot_all_reduce(cfg: ClusterConfig, inputs) -> CollectiveResult:
    """Direct shard exchange, local reduction, then one-blob broadcast of each reduced shard."""
    arrs = _check_all_reduce_inputs(cfg, inputs)
    n = cfg.n_ranks
    bufs = [shard(a, n) for a in arrs]
    counters = Counters(n)
    chan = _Channel(cfg, counters)
    counts = [[np.zeros(b.size, dtype=np.int32) for b in row] for row in bufs]

    ph1 = Phase("scatter")
    received: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    pkts = []
    for i in range(n):
        for k in range(1, n):
            j = (i + k) % n
            pkts.append((i, j, chan.encode(i, bufs[i][j], cfg.allows_compression(i, j), ph1)))
    for i, j, pkt in pkts:
        received[(i, j)] = (chan.deliver(pkt, i, j, ph1), _compress_mask(pkt.data.size, pkt))
    for j in range(n):
        acc = bufs[j][j].copy()
        hops = np.zeros(acc.size, dtype=np.int32)
        for src in ring_order(j, n)[1:]:
            got, mask = received[(src, j)]
            acc = reduce_pair(acc, got, cfg.reduce_op)
            hops = np.maximum(hops, mask)
        bufs[j][j] = acc
        counts[j][j] = hops
    del received

    ph2 = Phase("gather")
    for j in range(n):
        peers = [(j + k) % n for k in range(1, n)]
        allow = [cfg.allows_compression(j, p) for p in peers]
        pkt = chan.encode(j, bufs[j][j], any(allow), ph2)
        mask = _compress_mask(pkt.data.size, pkt)
        for p, ok in zip(peers, allow):
            bufs[p][j] = chan.deliver(pkt, j, p, ph2, use_compressed=ok)
            counts[p][j] = counts[j][j] + (mask if ok else 0)

    counters.per_element_compress_count = _max_count(counts)
    label = f"two-shot n={n} compression={'on' if cfg.compression else 'off'}"
    tl = run_phases(cfg, [ph1, ph2], arrs[0].nbytes, label)
    return CollectiveResult([np.concatenate(b) for b in bufs], counters, tl)


def all_to_all(cfg: ClusterConfig, inputs) -> CollectiveResult:
    """``inputs[i][j]`` is what rank ``i`` sends rank ``j``; output ``[j][i]`` receives it."""
    n = cfg.n_ranks
    if len(inputs) != n or any(len(row) != n for row in inputs):
        raise ConfigError(f"all_to_all needs an {n} x {n} grid of shards")
    grid = [_as_arrays(row, cfg.dtype) for row in inputs]
    counters = Counters(n)
    chan = _Channel(cfg, counters)
    ph = Phase("exchange")
    outputs: list[list] = [[None] * n for _ in range(n)]
    pkts = []
    for i in range(n):
        outputs[i][i] = grid[i][i].copy()
        for k in range(1, n):
            j = (i + k) % n
            pkts.append((i, j, chan.encode(i, grid[i][j], cfg.allows_compression(i, j), ph)))
    most = 0
    for i, j, pkt in pkts:
        outputs[j][i] = chan.deliver(pkt, i, j, ph)
        most = max(most, 1 if pkt.region_elems else 0)
    counters.per_element_compress_count = most
    per_rank = sum(a.nbytes for a in grid[0])
    label = f"all-to-all n={n} compression={'on' if cfg.compression else 'off'}"
    return CollectiveResult(outputs, counters, run_phases(cfg, [ph], per_rank, label))


def p2p_send_recv(cfg: ClusterConfig, tensor, src: int, dst: int, strategy: str = "split") -> CollectiveResult:
    """Move one tensor between two ranks; the timeline comes from the P2P pipeline model."""
    n = cfg.n_ranks
    if not (0 <= src < n and 0 <= dst < n):
        raise ConfigError(f"rank ids must be in [0, {n}), got src={src} dst={dst}")
    if src == dst:
        raise ConfigError("src and dst must differ")
    (arr,) = _as_arrays([tensor], cfg.dtype)
    counters = Counters(n)
    chan = _Channel(cfg, counters)
    ph = Phase("p2p")
    allow = strategy != "plain" and cfg.allows_compression(src, dst)
    pkt = chan.encode(src, arr, allow, ph)
    out = chan.deliver(pkt, src, dst, ph)
    counters.per_element_compress_count = 1 if pkt.region_elems else 0

    nbytes = arr.nbytes
    link = cfg.link(src, dst)
    common = dict(dtype=cfg.dtype, gpu=cfg.gpu, link=link, compression_threshold_bytes=cfg.threshold_bytes)
    if pkt.compressed and nbytes:
        d = describe_dtype(cfg.dtype)
        region = pkt.region_elems * d.element_bytes
        verbatim = region * d.residual_fraction + (nbytes - region)
        s = P2PScenario(
            nbytes, ratio=pkt.wire_bytes / nbytes, residual_fraction=verbatim / nbytes, measured=True, **common
        )
        tl = simulate(s, strategy)
    else:
        tl = simulate_plain(P2PScenario(nbytes, ratio=1.0, measured=True, **common))
    return CollectiveResult([out], counters, tl)


# -- analytic estimate -------------------------------------------------------------------------------


def plan_collective(cfg: ClusterConfig, algo: str, per_rank_bytes: int, ratio: float) -> list[Phase]:
    """Phases for ``algo`` assuming every compressed region shrinks to ``ratio``."""
    n = cfg.n_ranks
    shard_bytes = per_rank_bytes // n
    table_sent = [False]

    def msg(ph: Phase, src: int, dst: int, nbytes: int, compress: bool = True) -> None:
        region = cfg.compressed_region(nbytes) if cfg.allows_compression(src, dst) else 0
        if region and ratio < 1.0:
            if compress:
                ph.compress_bytes[src] += region
            wire = ratio * region + HEADER_BYTES + (nbytes - region)
            if not table_sent[0]:
                wire += TABLE_BYTES
                table_sent[0] = True
            ph.messages.append(Message(src, dst, nbytes, wire, region))
        else:
            ph.messages.append(Message(src, dst, nbytes, nbytes))

    phases = []
    if algo == "ring":
        for name in [f"rs{s}" for s in range(n - 1)] + [f"ag{s}" for s in range(n - 1)]:
            ph = Phase(name)
            for r in range(n):
                msg(ph, r, (r + 1) % n, shard_bytes)
            phases.append(ph)
    elif algo in ("two-shot", "all-to-all"):
        ph = Phase("scatter" if algo == "two-shot" else "exchange")
        for i in range(n):
            for k in range(1, n):
                msg(ph, i, (i + k) % n, shard_bytes)
        phases.append(ph)
        if algo == "two-shot":
            ph = Phase("gather")
            for j in range(n):
                for k in range(1, n):
                    msg(ph, j, (j + k) % n, shard_bytes, compress=False)
                region = cfg.compressed_region(shard_bytes)
                if region and ratio < 1.0 and any(m.decompress_bytes for m in ph.messages if m.src == j):
                    ph.compress_bytes[j] += region
            phases.append(ph)
    else:
        raise ConfigError(f"unknown algorithm {algo!r}; expected one of {', '.join(ALGORITHMS)}")
    return phases


def estimate_collective(cfg: ClusterConfig, algo: str, per_rank_bytes: int | None = None, ratio: float = 0.64) -> Timeline:
    """Timed model without moving data."""
    size = per_rank_bytes if per_rank_bytes is not None else cfg.per_rank_bytes
    if size is None:
        raise ConfigError("per_rank_bytes is required")
    label = f"{algo} n={cfg.n_ranks} compression={'on' if cfg.compression else 'off'} (estimate)"
    return run_phases(cfg, plan_collective(cfg, algo, size, ratio), size, label)


def collective_gain(cfg: ClusterConfig, algo: str, per_rank_bytes: int, ratio: float = 0.64) -> float:
    """Throughput gain of compression on over off (0.10 means +10%)."""
    on = estimate_collective(replace(cfg, compression=True), algo, per_rank_bytes, ratio).total_us
    off = estimate_collective(replace(cfg, compression=False), algo, per_rank_bytes, ratio).total_us
    return off / on - 1.0


def run_collective(cfg: ClusterConfig, algo: str, inputs) -> CollectiveResult:
    try:
        fn = {"ring": ring_all_reduce, "two-shot": two_shot_all_reduce, "all-to-all": all_to_all}[algo]
    except KeyError:
        raise ConfigError(f"unknown algorithm {algo!r}; expected one of {', '.join(ALGORITHMS)}") from None
    return fn(cfg, inputs)
