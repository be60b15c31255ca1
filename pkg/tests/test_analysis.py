import numpy as np
import pytest

from fedzip.analysis import (
    cdf_distance,
    error_distribution,
    fit_laplace,
    grid_from_jsonl,
    grid_to_jsonl,
    render_report,
    write_report,
)
from fedzip.ebcodec import PQ, CodecBenchRecord, CodecSpec, ErrorBound
from fedzip.errors import LengthMismatch
from fedzip.flsim import FLConfig, SyntheticTask, run_experiment
from fedzip.netsim import SelectionGrid
from fedzip.pipeline import compress_update, decompress_update, measure_pipeline
from fedzip.tensor_store import StateDict, TensorRecord


def test_identical_arrays_give_degenerate_fit():
    x = np.linspace(0, 1, 100)
    dist = error_distribution(x, x, bins=11)
    assert dist.laplace_b == 0.0
    assert dist.counts.sum() == 100
    assert np.all(dist.samples == 0)


def test_mle_recovers_synthetic_laplace_scale():
    rng = np.random.default_rng(123)
    samples = rng.laplace(0.0, 0.01, 10**4)
    mu, b = fit_laplace(samples)
    assert abs(mu) < 5e-4
    assert abs(b - 0.01) / 0.01 < 0.10  # 10% at n=1e4


def test_uniform_errors_fit_worse_than_laplace_errors():
    rng = np.random.default_rng(7)
    n = 50_000
    lap = rng.laplace(0.0, 0.01, n)
    uni = rng.uniform(-0.01, 0.01, n)
    g_lap = cdf_distance(lap, *fit_laplace(lap))
    g_uni = cdf_distance(uni, *fit_laplace(uni))
    assert g_uni > g_lap * 2


def test_histogram_spans_the_bound():
    orig = np.array([0.0, 0.5, 1.0])
    recon = np.array([0.01, 0.5, 0.99])
    dist = error_distribution(orig, recon, bins=4, eps_abs=0.02)
    assert dist.bin_edges[0] == -0.02
    assert dist.bin_edges[-1] == 0.02
    assert dist.eps_abs == 0.02


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        error_distribution(np.zeros(3), np.zeros(4), 5)


def test_compression_error_samples_respect_bound():
    rng = np.random.default_rng(10)
    state = StateDict([
        TensorRecord.from_array("fc1.weight", rng.normal(0, 0.1, 5000).astype(np.float32)),
    ])
    spec = CodecSpec(PQ, ErrorBound("relative", 1e-2))
    update = compress_update(state, spec)
    back = decompress_update(update.to_bytes())
    dist = error_distribution(state["fc1.weight"].data, back["fc1.weight"].data)
    from fedzip.ebcodec import LossyBlob
    eps = LossyBlob.from_bytes(update.entries[0].blob).eps_abs
    assert np.abs(dist.samples).max() <= eps
    assert dist.laplace_b > 0


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def small_report():
    cfg = FLConfig(
        rounds=2, n_clients=2, hidden=16,
        task=SyntheticTask(seed=2, num_classes=4, input_dim=8,
                           samples_per_client=30, eval_samples=40),
    )
    return run_experiment(cfg)


def test_experiment_report_csv_is_deterministic(tmp_path):
    rep = small_report()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report(rep, p1)
    write_report(rep, p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header.startswith("round,accuracy,s_bytes,s_prime_bytes,ratio")


def test_empty_rounds_render_header_only():
    rep = small_report()
    rep.rounds = []
    text = render_report(rep, "csv")
    assert text.count("\n") == 1


def test_pipeline_bench_report(tmp_path):
    rng = np.random.default_rng(4)
    state = StateDict([
        TensorRecord.from_array("a.weight", rng.normal(0, 1, 2048).astype(np.float32)),
        TensorRecord.from_array("b.bias", rng.normal(0, 1, 8).astype(np.float32)),
    ])
    bench = measure_pipeline(state, CodecSpec(PQ, ErrorBound("relative", 1e-2)), reps=1)
    text = render_report(bench, "csv")
    lines = text.splitlines()
    assert lines[0] == "name,route,raw_bytes,blob_bytes,eps_abs,max_abs_error"
    assert len(lines) == 3
    jl = render_report(bench, "json-lines")
    assert jl.splitlines()[0].startswith('{"meta"')


def test_grid_report_and_jsonl_roundtrip(tmp_path):
    epsilons = [1e-1, 1e-2]
    spec = CodecSpec(PQ, ErrorBound("relative", 1e-1))
    records = [[
        CodecBenchRecord(PQ, e, 0.01, 0.005, r, 1e-3, 1e-4)
        for e, r in zip(epsilons, (12.0, 6.0))
    ]]
    grid = SelectionGrid(
        candidates=[spec], epsilons=epsilons, records=records,
        original_bytes=10**6, element_count=250_000,
        accuracies=[[0.97, 0.98]], baseline_accuracy=0.98,
    )
    text = render_report(grid, "csv")
    assert text.splitlines()[0] == "codec_id,epsilon,ratio,t_c,t_d,accuracy"
    assert len(text.splitlines()) == 3

    back = grid_from_jsonl(grid_to_jsonl(grid))
    assert back.epsilons == grid.epsilons
    assert back.baseline_accuracy == grid.baseline_accuracy
    assert back.records[0][1].ratio == 6.0
    assert back.accuracies == grid.accuracies
    assert back.candidates[0].codec_id == PQ


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        render_report(small_report(), "xml")
