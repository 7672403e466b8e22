"""Command-line entry point: ``uzip <command> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path


from uzip.collective_sim import ALGORITHMS, run_collective
from uzip.compressor import (
    DEFAULT_CHUNK_BYTES,
    DEFAULT_SAMPLE_BYTES,
    CompressedBlob,
    compress_fused,
    compress_staged,
    compression_ratio,
    decompress,
    entropy_bound_ratio,
)
from uzip.config import cluster_from_mapping, load_mapping, parse_size, scenario_from_mapping
from uzip.cost_model import dump_profile, fit_cost_model_report, load_calibration_csv
from uzip.datagen import uniform_bytes, uniform_tensor
from uzip.errors import CorruptDataError, InsufficientDataError, MalformedInputError, UzipError
from uzip.float_codec import DTYPE_NAMES, describe_dtype
from uzip.pipeline_sim import STRATEGIES, P2PScenario, simulate, simulate_plain

log = logging.getLogger("uzip")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MALFORMED = 4
EXIT_CORRUPT = 5


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


# -- compression commands ----------------------------------------------------------------------------


def cmd_compress(args) -> int:
    raw = _read(args.input)
    if args.mode == "staged":
        blob, counter = compress_staged(raw, args.dtype)
    else:
        blob, counter = compress_fused(raw, args.dtype, args.chunk, args.sample)
    data = blob.to_bytes()
    out = args.output or args.input + ".uzc"
    Path(out).write_bytes(data)
    print(
        f"original={len(raw)} compressed={len(data)} ratio={len(data) / max(len(raw), 1):.4f} "
        f"mode={args.mode} passes={counter.passes:.4f}"
    )
    return EXIT_OK


def cmd_decompress(args) -> int:
    blob = CompressedBlob.from_bytes(_read(args.input))
    raw = decompress(blob)
    out = args.output or (args.input[:-4] if args.input.endswith(".uzc") else args.input + ".raw")
    Path(out).write_bytes(raw)
    print(f"decompressed={len(raw)} sha256={hashlib.sha256(raw).hexdigest()}")
    return EXIT_OK


def cmd_ratio(args) -> int:
    raw = _read(args.input)
    blob, _ = compress_staged(raw, args.dtype)
    report = {
        "dtype": args.dtype,
        "original_bytes": len(raw),
        "compressed_bytes": blob.compressed_total_bytes,
        "ratio": round(compression_ratio(blob), 6),
        "entropy_bound": round(entropy_bound_ratio(raw, args.dtype), 6),
        "residual_fraction": describe_dtype(args.dtype).residual_fraction,
    }
    if args.json:
        _emit(report)
    else:
        print(" ".join(f"{k}={v}" for k, v in report.items()))
    return EXIT_OK


# -- simulation commands -----------------------------------------------------------------------------


def _summary(s: P2PScenario, strategy: str) -> dict:
    base = simulate_plain(s)
    tl = simulate(s, strategy)
    return {
        "strategy": strategy,
        "message_bytes": s.message_bytes,
        "ratio": round(s.ratio, 6),
        "compressed": s.compresses and strategy != "plain",
        "plain_us": round(base.total_us, 6),
        "strategy_us": round(tl.total_us, 6),
        "plain_gib_s": round(base.throughput_gib_per_s, 6),
        "strategy_gib_s": round(tl.throughput_gib_per_s, 6),
        "gain_pct": round((base.total_us / tl.total_us - 1.0) * 100, 4),
        "timeline": tl.to_dict(),
    }


def cmd_sim_p2p(args) -> int:
    m = load_mapping(args.scenario)
    s = scenario_from_mapping(
        m,
        args.profile,
        message_bytes=parse_size(args.size) if args.size else None,
        compression_threshold_bytes=args.threshold,
        chunk_bytes=args.chunk,
    )
    out = _summary(s, args.strategy)
    if args.json:
        _emit(out)
    else:
        tl = simulate(s, args.strategy)
        print(tl.gantt())
        print(
            f"strategy={args.strategy} total_us={out['strategy_us']:.3f} "
            f"throughput_gib_s={out['strategy_gib_s']:.3f} plain_gib_s={out['plain_gib_s']:.3f} "
            f"gain_pct={out['gain_pct']:.2f}"
        )
    return EXIT_OK


def cmd_sim_collective(args) -> int:
    m = load_mapping(args.config)
    cfg = cluster_from_mapping(
        m,
        args.profile,
        n_ranks=args.ranks,
        compression=args.compression,
        threshold_bytes=args.threshold,
        align_bytes=args.align,
    )
    d = describe_dtype(cfg.dtype)
    per_rank = cfg.per_rank_bytes or (4 << 20)
    n = cfg.n_ranks
    n_elem = per_rank // d.element_bytes
    if args.algo == "all-to-all":
        shard = max(n_elem // n, 1)
        inputs = [[uniform_tensor(shard, d, args.seed + i * n + j) for j in range(n)] for i in range(n)]
    else:
        n_elem -= n_elem % n
        inputs = [uniform_tensor(n_elem, d, args.seed + i) for i in range(n)]
    res = run_collective(cfg, args.algo, inputs)
    if args.algo == "all-to-all":
        digests = [hashlib.sha256(b"".join(a.tobytes() for a in row)).hexdigest() for row in res.outputs]
    else:
        digests = [hashlib.sha256(a.tobytes()).hexdigest() for a in res.outputs]
    out = {
        "algo": args.algo,
        "n_ranks": n,
        "dtype": d.name,
        "per_rank_bytes": per_rank,
        "compression": "on" if cfg.compression else "off",
        "counters": res.counters.to_dict(),
        "total_us": round(res.timeline.total_us, 6),
        "throughput_gib_s": round(res.timeline.throughput_gib_per_s, 6),
        "output_sha256": digests,
    }
    if args.timeline:
        out["timeline"] = res.timeline.to_dict()
    _emit(out)
    return EXIT_OK


def _read_trace(path: str) -> list[dict]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = json.loads(line)
            records.append({"name": str(rec["name"]), "bytes": parse_size(rec["bytes"]), "dtype": str(rec["dtype"])})
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"{path}:{lineno}: bad trace record ({exc})") from None
    return records


def cmd_replay_trace(args) -> int:
    base = scenario_from_mapping(load_mapping(args.scenario), args.profile, compression_threshold_bytes=args.threshold)
    rows = []
    for rec in _read_trace(args.trace):
        if rec["dtype"] not in DTYPE_NAMES:
            log.warning("skipping %s: unknown dtype %r", rec["name"], rec["dtype"])
            continue
        d = describe_dtype(rec["dtype"])
        nbytes = rec["bytes"] - rec["bytes"] % d.element_bytes
        if nbytes <= 0:
            log.warning("skipping %s: size must be positive", rec["name"])
            continue
        if args.data_dir:
            raw = (Path(args.data_dir) / f"{rec['name']}.bin").read_bytes()
            nbytes = len(raw)
        else:
            raw = uniform_bytes(nbytes, d, args.seed) if nbytes >= base.compression_threshold_bytes else None
        common = dict(
            gpu=base.gpu,
            link=base.link,
            chunk_bytes=base.chunk_bytes,
            compression_threshold_bytes=base.compression_threshold_bytes,
        )
        if raw is not None and nbytes >= base.compression_threshold_bytes:
            s = P2PScenario.measured_from(raw, d.name, **common)
        else:
            s = P2PScenario(nbytes, d.name, ratio=1.0, measured=True, **common)
        del raw
        summ = _summary(s, args.strategy)
        rows.append(
            {
                "name": rec["name"],
                "bytes": nbytes,
                "dtype": d.name,
                "ratio": summ["ratio"],
                "baseline_gib_s": summ["plain_gib_s"],
                "strategy_gib_s": summ["strategy_gib_s"],
                "gain_pct": summ["gain_pct"],
                "_plain_us": summ["plain_us"],
                "_strategy_us": summ["strategy_us"],
            }
        )
    plain = sum(r.pop("_plain_us") for r in rows)
    strat = sum(r.pop("_strategy_us") for r in rows)
    summary_gain = round((plain / strat - 1.0) * 100, 4) if strat > 0 else 0.0
    if args.json:
        _emit({"strategy": args.strategy, "records": rows, "summary_gain_pct": summary_gain})
        return EXIT_OK
    print(f"{'name':<24} {'bytes':>12} {'dtype':>8} {'ratio':>7} {'base GiB/s':>11} {'strat GiB/s':>11} {'gain %':>8}")
    for r in rows:
        print(
            f"{r['name']:<24} {r['bytes']:>12} {r['dtype']:>8} {r['ratio']:>7.4f} "
            f"{r['baseline_gib_s']:>11.3f} {r['strategy_gib_s']:>11.3f} {r['gain_pct']:>8.2f}"
        )
    print(f"summary strategy={args.strategy} gain_pct={summary_gain:.2f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    samples = load_calibration_csv(args.csv)
    fit = fit_cost_model_report(samples)
    text = dump_profile(fit.model)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(
        f"fixed_overhead_us={fit.model.fixed_overhead_us:.4f} per_mib_us={fit.model.per_mib_us:.4f} "
        f"rms_residual_us={fit.rms_residual_us:.4f} clamped={fit.clamped}",
        file=sys.stderr if not args.output else sys.stdout,
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uzip", description="Lossless float compression and communication simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def size(v: str) -> int:
        try:
            return parse_size(v)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    c = sub.add_parser("compress", help="compress a raw tensor file")
    c.add_argument("input")
    c.add_argument("-o", "--output")
    c.add_argument("--dtype", required=True, choices=DTYPE_NAMES)
    c.add_argument("--mode", choices=("staged", "fused"), default="staged")
    c.add_argument("--chunk", type=size, default=DEFAULT_CHUNK_BYTES)
    c.add_argument("--sample", type=size, default=DEFAULT_SAMPLE_BYTES)
    c.set_defaults(func=cmd_compress)

    c = sub.add_parser("decompress", help="restore a compressed blob")
    c.add_argument("input")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_decompress)

    c = sub.add_parser("ratio", help="report achieved ratio and entropy bound")
    c.add_argument("input")
    c.add_argument("--dtype", required=True, choices=DTYPE_NAMES)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_ratio)

    c = sub.add_parser("sim-p2p", help="simulate one P2P transfer")
    c.add_argument("scenario")
    c.add_argument("--strategy", choices=STRATEGIES, default="split")
    c.add_argument("--size", help="override message size, e.g. 16MiB")
    c.add_argument("--chunk", type=size)
    c.add_argument("--threshold", type=size)
    c.add_argument("--profile")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_sim_p2p)

    c = sub.add_parser("sim-collective", help="run a collective on synthetic data")
    c.add_argument("config")
    c.add_argument("--algo", choices=ALGORITHMS, default="ring")
    c.add_argument("--compression", choices=("on", "off"))
    c.add_argument("--ranks", type=int)
    c.add_argument("--threshold", type=size)
    c.add_argument("--align", type=size)
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--profile")
    c.add_argument("--timeline", action="store_true", help="include every timeline event")
    c.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    c.set_defaults(func=cmd_sim_collective)

    c = sub.add_parser("replay-trace", help="per-tensor gains for a workload trace")
    c.add_argument("trace")
    c.add_argument("scenario")
    c.add_argument("--strategy", choices=STRATEGIES, default="split")
    c.add_argument("--data-dir")
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--threshold", type=size)
    c.add_argument("--profile")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_replay_trace)

    c = sub.add_parser("calibrate", help="fit the GPU cost model to bytes,latency_us samples")
    c.add_argument("csv")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CorruptDataError as exc:
        print(f"error: corrupt data: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (UzipError, InsufficientDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
