import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import GOLDEN
from uzip.cli import EXIT_CORRUPT, EXIT_IO, EXIT_MALFORMED, EXIT_OK, main
from uzip.cost_model import GIB, MIB, LinkModel
from uzip.datagen import uniform_bytes
from uzip.float_codec import DTYPE_NAMES
from uzip.pipeline_sim import P2PScenario, simulate

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_OK, err
    return json.loads(out)


def stats(line: str) -> dict:
    return dict(kv.split("=", 1) for kv in line.split())


@pytest.fixture
def bf16_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(uniform_bytes(1 << 20, "bf16", seed=3))
    return p


@pytest.mark.parametrize("mode", ["staged", "fused"])
def test_compress_decompress_roundtrip(capsys, tmp_path, bf16_file, mode):
    blob = tmp_path / "x.uzc"
    code, out, _ = run(capsys, "compress", bf16_file, "--dtype", "bf16", "--mode", mode, "-o", blob, "--chunk", "256KiB", "--sample", "32KiB")
    assert code == EXIT_OK
    s = stats(out)
    assert s["mode"] == mode and int(s["original"]) == 1 << 20
    assert float(s["ratio"]) == pytest.approx(0.64, abs=0.03)
    assert float(s["passes"]) == (3.0 if mode == "staged" else pytest.approx(1.0625))
    restored = tmp_path / "y.bin"
    code, out, _ = run(capsys, "decompress", blob, "-o", restored)
    assert code == EXIT_OK
    original = bf16_file.read_bytes()
    assert hashlib.sha256(restored.read_bytes()).hexdigest() == hashlib.sha256(original).hexdigest()
    assert stats(out)["sha256"] == hashlib.sha256(original).hexdigest()


@pytest.mark.slow
def test_compress_128mib_staged_vs_fused(capsys, tmp_path):
    p = tmp_path / "big.bin"
    p.write_bytes(uniform_bytes(128 << 20, "bf16", seed=42))
    ratios = {}
    for mode in ("staged", "fused"):
        code, out, _ = run(capsys, "compress", p, "--dtype", "bf16", "--mode", mode, "-o", tmp_path / f"{mode}.uzc")
        assert code == EXIT_OK
        ratios[mode] = float(stats(out)["ratio"])
    assert ratios["staged"] == pytest.approx(0.64, abs=0.03)
    assert ratios["fused"] <= ratios["staged"] * 1.06


@pytest.mark.parametrize("dtype", DTYPE_NAMES)
def test_decompress_golden(capsys, tmp_path, dtype):
    out = tmp_path / "g.raw"
    code, _, _ = run(capsys, "decompress", GOLDEN / f"{dtype}.fused.uzc", "-o", out)
    assert code == EXIT_OK
    assert out.read_bytes() == (GOLDEN / f"{dtype}.raw").read_bytes()


def test_error_exit_codes(capsys, tmp_path, bf16_file):
    odd = tmp_path / "odd.bin"
    odd.write_bytes(b"\x00" * 7)
    code, _, err = run(capsys, "compress", odd, "--dtype", "bf16")
    assert code == EXIT_MALFORMED and "multiple" in err

    code, _, _ = run(capsys, "decompress", tmp_path / "missing.uzc")
    assert code == EXIT_IO

    blob = tmp_path / "x.uzc"
    run(capsys, "compress", bf16_file, "--dtype", "bf16", "-o", blob)
    data = blob.read_bytes()
    (tmp_path / "magic.uzc").write_bytes(b"NOPE" + data[4:])
    code, _, err = run(capsys, "decompress", tmp_path / "magic.uzc")
    assert code == EXIT_CORRUPT and "magic" in err
    (tmp_path / "short.uzc").write_bytes(data[: len(data) // 2])
    code, _, err = run(capsys, "decompress", tmp_path / "short.uzc")
    assert code == EXIT_CORRUPT

    with pytest.raises(SystemExit) as exc:
        main(["compress", str(bf16_file), "--dtype", "f64"])
    assert exc.value.code == 2


@pytest.mark.parametrize("dtype, residual", [("bf16", 0.5), ("f32", 0.75)])
def test_ratio_report(capsys, tmp_path, dtype, residual):
    p = tmp_path / "r.bin"
    p.write_bytes(uniform_bytes(1 << 20, dtype, seed=1))
    rep = run_json(capsys, "ratio", p, "--dtype", dtype, "--json")
    assert rep["residual_fraction"] == residual
    assert rep["entropy_bound"] <= rep["ratio"] <= rep["entropy_bound"] + 0.03


def test_sim_p2p_matches_module(capsys):
    cfg = SCENARIOS / "default.cfg"
    link = LinkModel.from_gib_per_s(47.2)
    cases = [("split", "1GiB"), ("encode", "8MiB"), ("chunked", "16MiB")]
    for strategy, size in cases:
        rep = run_json(capsys, "sim-p2p", cfg, "--strategy", strategy, "--size", size, "--json")
        n = {"1GiB": GIB, "8MiB": 8 * MIB, "16MiB": 16 * MIB}[size]
        s = P2PScenario(n, ratio=0.64, residual_fraction=0.5, link=link, chunk_bytes=4 * MIB)
        assert rep["strategy_us"] == pytest.approx(simulate(s, strategy).total_us)
    assert run_json(capsys, "sim-p2p", cfg, "--json")["strategy_gib_s"] == pytest.approx(72.3, abs=2)
    assert run_json(capsys, "sim-p2p", cfg, "--strategy", "encode", "--size", "8MiB", "--json")["gain_pct"] < 0
    assert run_json(capsys, "sim-p2p", cfg, "--strategy", "chunked", "--size", "16MiB", "--json")["gain_pct"] < 0


def test_sim_p2p_text_and_inline_json(capsys):
    code, out, _ = run(capsys, "sim-p2p", SCENARIOS / "default.cfg")
    assert code == EXIT_OK and "gain_pct=" in out and "link" in out
    rep = run_json(capsys, "sim-p2p", '{"message_bytes": "1GiB", "bandwidth_gib_s": 47.2}', "--json")
    assert rep["message_bytes"] == GIB


def test_sim_p2p_stable_output(capsys):
    a = run(capsys, "sim-p2p", SCENARIOS / "efa.cfg", "--json")[1]
    b = run(capsys, "sim-p2p", SCENARIOS / "efa.cfg", "--json")[1]
    assert a == b
    assert list(json.loads(a)) == [
        "strategy", "message_bytes", "ratio", "compressed", "plain_us", "strategy_us",
        "plain_gib_s", "strategy_gib_s", "gain_pct", "timeline",
    ]


def test_profile_env(capsys, tmp_path, monkeypatch):
    prof = tmp_path / "slow.profile"
    prof.write_text("fixed_overhead_us=5000\nper_mib_us=1.0\n")
    base = run_json(capsys, "sim-p2p", SCENARIOS / "default.cfg", "--json")
    monkeypatch.setenv("UZIP_PROFILE", str(prof))
    slow = run_json(capsys, "sim-p2p", SCENARIOS / "default.cfg", "--json")
    assert slow["strategy_us"] > base["strategy_us"]
    monkeypatch.delenv("UZIP_PROFILE")
    explicit = run_json(capsys, "sim-p2p", SCENARIOS / "default.cfg", "--profile", prof, "--json")
    assert explicit["strategy_us"] == slow["strategy_us"]


def test_sim_collective(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_ranks = 4\nper_rank_bytes = 256KiB\nthreshold_bytes = 16KiB\nalign_bytes = 4KiB\n")
    ring = run_json(capsys, "sim-collective", cfg, "--algo", "ring")
    off = run_json(capsys, "sim-collective", cfg, "--algo", "ring", "--compression", "off")
    two = run_json(capsys, "sim-collective", cfg, "--algo", "two-shot", "--timeline")
    assert ring["counters"]["per_element_compress_count"] == 6
    assert two["counters"]["per_element_compress_count"] == 2
    assert ring["output_sha256"] == off["output_sha256"] == two["output_sha256"]
    assert len(set(ring["output_sha256"])) == 1
    assert "events" in two["timeline"]
    eight = run_json(capsys, "sim-collective", cfg, "--algo", "ring", "--ranks", "8")
    assert eight["counters"]["per_element_compress_count"] == 14
    a2a = run_json(capsys, "sim-collective", cfg, "--algo", "all-to-all")
    assert a2a["counters"]["per_element_compress_count"] == 1


def test_replay_trace(capsys, tmp_path, caplog):
    trace = tmp_path / "t.jsonl"
    trace.write_text(
        (SCENARIOS / "trace.jsonl").read_text() + '{"name": "odd", "bytes": 4096, "dtype": "f64"}\n'
    )
    rep = run_json(capsys, "replay-trace", trace, SCENARIOS / "efa.cfg", "--json")
    rows = {r["name"]: r for r in rep["records"]}
    assert 35 <= rows["gate_up_proj"]["gain_pct"] <= 55
    assert 5 <= rows["moe_expert_w1"]["gain_pct"] <= 15
    assert rows["layernorm_weight"]["gain_pct"] == 0
    assert "odd" not in rows and "unknown dtype" in caplog.text


def test_replay_trace_table_and_errors(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    trace.write_text('{"name": "a", "bytes": "2MiB", "dtype": "f16"}\n')
    code, out, _ = run(capsys, "replay-trace", trace, SCENARIOS / "efa.cfg")
    assert code == EXIT_OK and out.splitlines()[1].startswith("a ")
    trace.write_text("not json\n")
    assert run(capsys, "replay-trace", trace, SCENARIOS / "efa.cfg")[0] == EXIT_MALFORMED


def test_replay_trace_data_dir(capsys, tmp_path):
    (tmp_path / "w.bin").write_bytes(np.ones(1 << 20, dtype=np.float32).tobytes())
    trace = tmp_path / "t.jsonl"
    trace.write_text('{"name": "w", "bytes": 4194304, "dtype": "f32"}\n')
    rep = run_json(capsys, "replay-trace", trace, SCENARIOS / "efa.cfg", "--data-dir", tmp_path, "--json")
    assert rep["records"][0]["ratio"] < 0.76


def test_calibrate(capsys, tmp_path):
    two = tmp_path / "two.csv"
    two.write_text("bytes,latency_us\n4194304,70\n16777216,90\n")
    prof = tmp_path / "m.profile"
    code, out, _ = run(capsys, "calibrate", two, "-o", prof)
    assert code == EXIT_OK and "rms_residual_us=0.0000" in out
    text = prof.read_text()
    vals = dict(line.split("=") for line in text.split())
    assert float(vals["fixed_overhead_us"]) == pytest.approx(63.333, abs=1e-3)
    assert float(vals["per_mib_us"]) == pytest.approx(1.6667, abs=1e-4)

    one = tmp_path / "one.csv"
    one.write_text("4194304,70\n")
    code, _, err = run(capsys, "calibrate", one)
    assert code == EXIT_MALFORMED and "distinct" in err

    rng = np.random.default_rng(0)
    x = np.linspace(1, 100, 10)
    y = 40 + 2 * x + rng.normal(0, 3, 10)
    noisy = tmp_path / "noisy.csv"
    noisy.write_text("".join(f"{int(a * MIB)},{b}\n" for a, b in zip(x, y)))
    code, out, _ = run(capsys, "calibrate", noisy, "-o", prof)
    A = np.column_stack([np.ones(10), x])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    s = stats(out)
    assert float(s["fixed_overhead_us"]) == pytest.approx(coef[0], abs=1e-3)
    assert float(s["per_mib_us"]) == pytest.approx(coef[1], abs=1e-3)
    rms = np.sqrt(np.mean((y - A @ coef) ** 2))
    assert float(s["rms_residual_us"]) == pytest.approx(rms, abs=1e-3)


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "uzip", "sim-p2p", str(SCENARIOS / "default.cfg"), "--json"],
        capture_output=True, text=True, check=True,
    )
    assert json.loads(out.stdout)["strategy"] == "split"
