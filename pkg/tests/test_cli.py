import json

import numpy as np

from fedzip.cli import cli_main
from fedzip.tensor_store import StateDict, TensorRecord, load_checkpoint, save_checkpoint


def write_model(path, seed=0, n=4096):
    rng = np.random.default_rng(seed)
    state = StateDict([
        TensorRecord.from_array("fc1.weight", rng.normal(0, 0.1, n).astype(np.float32)),
        TensorRecord.from_array("fc1.bias", rng.normal(0, 0.1, 16).astype(np.float32)),
    ])
    save_checkpoint(state, path)
    return state


def test_missing_input_exits_2_and_names_file(tmp_path, capsys):
    missing = tmp_path / "missing.fszt"
    code = cli_main(["compress", str(missing), str(tmp_path / "out.fszu")])
    assert code == 2
    err = capsys.readouterr().err
    payload = json.loads(err.strip().splitlines()[-1])
    assert "missing.fszt" in payload["message"]


def test_no_arguments_prints_usage_exit_1(capsys):
    assert cli_main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_bad_flag_is_usage_error(capsys):
    assert cli_main(["compress", "--nope"]) == 1


def test_compress_decompress_roundtrip(tmp_path, capsys):
    model = tmp_path / "model.fszt"
    state = write_model(model)
    fszu = tmp_path / "update.fszu"
    out = tmp_path / "back.fszt"

    assert cli_main(["compress", str(model), str(fszu), "--codec", "pq",
                     "--rel-eb", "1e-2", "--threshold", "1024"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["ratio"] > 1

    assert cli_main(["decompress", str(fszu), str(out)]) == 0
    back = load_checkpoint(out)
    assert back.names() == state.names()
    assert back["fc1.bias"].data.tobytes() == state["fc1.bias"].data.tobytes()
    w_err = np.abs(back["fc1.weight"].data - state["fc1.weight"].data).max()
    assert w_err > 0  # lossy route engaged
    rng = state["fc1.weight"].data
    assert w_err <= 1e-2 * (rng.max() - rng.min()) + 1e-12


def test_end_to_end_analyze_error(tmp_path, capsys):
    model = tmp_path / "model.fszt"
    write_model(model, seed=3)
    fszu = tmp_path / "u.fszu"
    recon = tmp_path / "recon.fszt"
    dist = tmp_path / "dist.csv"
    assert cli_main(["compress", str(model), str(fszu)]) == 0
    assert cli_main(["decompress", str(fszu), str(recon)]) == 0
    capsys.readouterr()
    assert cli_main(["analyze-error", str(model), str(recon),
                     "--bins", "21", "--out", str(dist)]) == 0
    lines = dist.read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count"
    trailer = json.loads(lines[-1])
    assert trailer["b"] > 0
    assert trailer["eps_abs"] > 0
    assert len(lines) == 1 + 21 + 1


def test_bench_net_curve_shape(tmp_path):
    out = tmp_path / "curve.csv"
    assert cli_main(["bench-net", "--size-mb", "230", "--ratio", "12.61",
                     "--tc", "1.7", "--td", "1.7",
                     "--bw-range", "1e6:1e10", "--points", "40",
                     "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "bandwidth,time_uncompressed,time_compressed,worthwhile"
    rows = [ln.split(",") for ln in lines[1:]]
    flags = [r[3] == "True" for r in rows]
    # worthwhile at low bandwidth, not at high, with a single crossover
    assert flags[0] and not flags[-1]
    assert sum(1 for a, b in zip(flags, flags[1:]) if a != b) == 1
    cross = next(float(rows[i][0]) for i in range(len(flags)) if not flags[i])
    assert 1e8 < cross < 2e9  # the ~half-gigabit regime


def test_fl_run_and_sweep_and_select(tmp_path, capsys):
    report = tmp_path / "report.csv"
    args = ["fl-run", "--clients", "2", "--rounds", "2", "--codec", "pq",
            "--rel-eb", "1e-2", "--bw", "10e6", "--seed", "3",
            "--classes", "4", "--dim", "32", "--hidden", "16",
            "--samples-per-client", "40", "--threshold", "64",
            "--out", str(report)]
    assert cli_main(args) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert 0 <= summary["final_accuracy"] <= 1
    assert report.read_text().startswith("round,accuracy")

    sweep_csv = tmp_path / "sweep.csv"
    grid_path = tmp_path / "grid.jsonl"
    assert cli_main(["sweep", "--eps", "1e-1,1e-2", "--clients", "2",
                     "--rounds", "2", "--codec", "pq", "--seed", "3",
                     "--classes", "4", "--dim", "32", "--hidden", "16",
                     "--samples-per-client", "40", "--threshold", "64",
                     "--out", str(sweep_csv), "--grid-out", str(grid_path)]) == 0
    lines = sweep_csv.read_text().splitlines()
    assert lines[0] == "epsilon,final_accuracy,mean_ratio"
    assert len(lines) == 3

    capsys.readouterr()
    assert cli_main(["select", "--grid", str(grid_path), "--bw", "10e6",
                     "--slack", "0.5"]) == 0
    choice = json.loads(capsys.readouterr().out.strip())
    assert choice["epsilon"] in (1e-1, 1e-2)


def test_fl_run_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["fl-run", "--clients", "2", "--rounds", "2", "--codec", "cbt",
            "--rel-eb", "1e-2", "--seed", "11", "--classes", "4",
            "--dim", "32", "--hidden", "16", "--samples-per-client", "30",
            "--threshold", "64"]
    assert cli_main(args + ["--out", str(a)]) == 0
    assert cli_main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
