import json

import numpy as np
import pytest

import bpim2col.addressing as addressing
import bpim2col.verification as verification
from bpim2col.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_small_run_ok(capsys):
    code, out, _ = run_cli(capsys, "verify", "--cases", "5", "--seed", "3")
    assert code == 0
    assert "verify ok" in out


def test_verify_zero_cases_warns(capsys):
    code, out, _ = run_cli(capsys, "verify", "--cases", "0")
    assert code == 0
    assert "no cases run" in out


def test_verify_catches_injected_off_by_one(capsys, monkeypatch):
    real = addressing.transposed_block_indices

    def broken(g, row0, row1, col0, col1):
        idx = real(g, row0, row1, col0, col1)
        if g.edge_h > 0:  # mistake the padding band for one pixel thicker
            rows = np.arange(row0, row1)[:, None]
            cols = np.arange(col0, col1)[None, :]
            h_k = (rows // g.k_w) % g.k_h
            oh = (cols % g.in_px) // g.in_w
            return np.where(oh + h_k == g.edge_h, np.int64(-1), idx)
        return idx

    monkeypatch.setattr(addressing, "transposed_block_indices", broken)
    res = verification.run_verification(seed=11, cases=50)
    assert not res.ok
    assert res.counterexample is not None
    assert res.counterexample["mode"] == "transposed"
    assert "geometry" in res.counterexample


def test_simulate_single_layer_with_check(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--layer", "12/4/4/3/2/1",
                           "--phase", "loss", "--algo", "bp", "--check")
    assert code == 0
    payload = json.loads(out)
    assert payload["reports"][0]["algo"] == "bp"
    assert payload["reports"][0]["checksum"]
    assert payload["manifest"]["version"]


def test_simulate_both_algos_emits_comparison(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--layer", "12/4/4/3/2/1",
                           "--phase", "loss", "--algo", "both")
    assert code == 0
    payload = json.loads(out)
    assert len(payload["reports"]) == 2
    assert payload["comparison"][0]["speedup"] > 0


def test_unknown_phase_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--layer", "12/4/4/3/2/1", "--phase", "nonsense"])
    assert exc.value.code == 2


def test_bad_layer_string_exits_2(capsys):
    code, _, err = run_cli(capsys, "simulate", "--layer", "12/4/4")
    assert code == 2
    assert "error" in err


def test_invalid_geometry_exits_2(capsys):
    code, _, err = run_cli(capsys, "simulate", "--layer", "8/1/1/3/2/5")
    assert code == 2
    assert "pad" in err


def test_missing_config_file_exits_3(capsys):
    code, _, err = run_cli(capsys, "simulate", "--config", "/nonexistent/layers.json")
    assert code == 3
    assert "io error" in err


def test_sweep_artifacts_and_row_count(capsys, tmp_path):
    config = tmp_path / "layers.json"
    layers = [
        {"name": "a", "network": "t", "C": 2, "H": 12, "N": 3, "K": 3, "S": 2, "P": 1},
        {"name": "b", "network": "t", "C": 2, "H": 10, "N": 2, "K": 1, "S": 2, "P": 0},
    ]
    config.write_text(json.dumps(layers))
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "sweep", "--config", str(config),
                           "--out", str(out_dir))
    assert code == 0
    csv_lines = (out_dir / "comparison.csv").read_text().splitlines()
    assert csv_lines[0].startswith("layer,phase,algo,compute_cycles")
    assert len(csv_lines) == 1 + 2 * 2 * 2  # layers x phases x algos
    speedups = [float(line.split(",")[-1]) for line in csv_lines[1:]]
    assert all(s > 1.0 for s in speedups)
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "t" in summary["networks"]
    assert "timestamp" not in summary["manifest"]


def test_sweep_reruns_byte_identical(capsys, tmp_path):
    code1, _, _ = run_cli(capsys, "sweep", "--out", str(tmp_path / "one"),
                          "--seed", "42")
    code2, _, _ = run_cli(capsys, "sweep", "--out", str(tmp_path / "two"),
                          "--seed", "42")
    assert code1 == code2 == 0
    a = (tmp_path / "one" / "comparison.csv").read_bytes()
    b = (tmp_path / "two" / "comparison.csv").read_bytes()
    assert a == b
    assert (tmp_path / "one" / "summary.json").read_bytes() == \
        (tmp_path / "two" / "summary.json").read_bytes()


def test_sweep_unwritable_out_exits_3(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run_cli(capsys, "sweep", "--out", str(blocker / "sub"))
    assert code == 3


def test_sparsity_subcommand(capsys):
    code, out, _ = run_cli(capsys, "sparsity", "--layer", "112/64/64/3/2/1")
    assert code == 0
    data = json.loads(out)
    assert data[0]["loss_operand_sparsity"] == pytest.approx(0.7587, abs=5e-4)


def test_simulate_csv_copy(capsys, tmp_path):
    out_dir = tmp_path / "csv"
    code, _, _ = run_cli(capsys, "simulate", "--layer", "12/4/4/3/2/1",
                         "--phase", "all", "--algo", "both",
                         "--out", str(out_dir))
    assert code == 0
    lines = (out_dir / "simulate.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 2
