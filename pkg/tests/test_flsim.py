import numpy as np
import pytest

from fedzip.ebcodec import PQ, CodecSpec, ErrorBound
from fedzip.errors import InvalidConfig, ShapeMismatch, StructureMismatch
from fedzip.flsim import (
    FLConfig,
    SyntheticTask,
    fedavg_aggregate,
    gen_task,
    init_tiny_net,
    local_train,
    loss_and_grads,
    run_experiment,
    run_round,
    sweep_epsilon,
)
from fedzip.netsim import NetworkModel
from fedzip.pipeline import RoutingRule
from fedzip.tensor_store import StateDict, TensorRecord


def quick_task(**kw):
    defaults = dict(seed=3, num_classes=4, input_dim=8, noise_sigma=0.3,
                    samples_per_client=40, eval_samples=80)
    defaults.update(kw)
    return SyntheticTask(**defaults)


def quick_cfg(**kw):
    defaults = dict(rounds=3, n_clients=2, task=quick_task(), hidden=16, seed=5)
    defaults.update(kw)
    return FLConfig(**defaults)


# ---------------------------------------------------------------------------
# task generation
# ---------------------------------------------------------------------------


def test_same_seed_same_datasets():
    a = gen_task(quick_task(), 3)
    b = gen_task(quick_task(), 3)
    for ca, cb in zip(a.clients, b.clients):
        np.testing.assert_array_equal(ca.x, cb.x)
        np.testing.assert_array_equal(ca.y, cb.y)
    np.testing.assert_array_equal(a.eval_x, b.eval_x)


def test_noiseless_task_is_learnable_fast():
    cfg = FLConfig(rounds=5, task=SyntheticTask(seed=1, noise_sigma=0.0))
    report = run_experiment(cfg)
    assert report.final_accuracy > 0.95


def test_single_class_task_is_trivial():
    cfg = quick_cfg(task=quick_task(num_classes=1), rounds=1)
    report = run_experiment(cfg)
    assert report.final_accuracy == 1.0


def test_centers_shape_validated():
    task = quick_task(centers=np.zeros((2, 2)))
    with pytest.raises(ShapeMismatch):
        gen_task(task, 2)


def test_default_net_exercises_both_routes():
    # weight matrices must clear the default threshold, biases must not,
    # so a default run hits the lossy and lossless paths simultaneously
    from fedzip.pipeline import partition

    task = SyntheticTask()
    state = init_tiny_net(task.input_dim, 64, task.num_classes, seed=0)
    lossy, lossless = partition(state, RoutingRule())
    assert sorted(lossy) == ["fc1.weight", "fc2.weight"]
    assert sorted(lossless) == ["fc1.bias", "fc2.bias"]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_zero_learning_rate_is_identity():
    data = gen_task(quick_task(), 1)
    state = init_tiny_net(8, 16, 4, seed=0)
    out = local_train(state, data.clients[0], epochs=2, lr=0.0, batch_size=8, seed=1)
    assert out == state  # bit-for-bit


def test_one_step_matches_finite_differences():
    # central differences on the float64 parameter dict
    task = quick_task()
    data = gen_task(task, 1)
    state = init_tiny_net(8, 16, 4, seed=2)
    x, y = data.clients[0].x[:1], data.clients[0].y[:1]
    _, grads = loss_and_grads(state, x, y)
    p = {
        name: state[name].data.astype(np.float64).reshape(state[name].shape)
        for name in ("fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias")
    }
    rng = np.random.default_rng(0)
    step = 1e-3
    checked = 0
    for name in p:
        flat = p[name].reshape(-1)
        for idx in rng.choice(flat.size, size=min(10, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + step
            lp, _ = loss_and_grads(p, x, y)
            flat[idx] = orig - step
            lm, _ = loss_and_grads(p, x, y)
            flat[idx] = orig
            fd = (lp - lm) / (2 * step)
            g = grads[name].reshape(-1)[idx]
            denom = max(abs(fd), abs(g), 1e-8)
            assert abs(fd - g) / denom < 1e-4
            checked += 1
    assert checked >= 30


def test_full_batch_loss_non_increasing():
    task = quick_task(noise_sigma=0.0)
    data = gen_task(task, 1)
    client = data.clients[0]
    state = init_tiny_net(8, 16, 4, seed=4)
    losses = [loss_and_grads(state, client.x, client.y)[0]]
    for _ in range(5):
        state = local_train(state, client, epochs=1, lr=1e-2,
                            batch_size=len(client.y), seed=0)
        losses.append(loss_and_grads(state, client.x, client.y)[0])
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_local_train_shape_guard():
    data = gen_task(quick_task(input_dim=8), 1)
    state = init_tiny_net(12, 16, 4, seed=0)
    with pytest.raises(ShapeMismatch):
        local_train(state, data.clients[0], 1, 0.05, 8, 0)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def test_mean_of_identical_states_is_that_state():
    state = init_tiny_net(8, 16, 4, seed=6)
    out = fedavg_aggregate([state, state, state])
    for a, b in zip(state, out):
        np.testing.assert_allclose(
            b.data.astype(np.float64), a.data.astype(np.float64), rtol=1e-6
        )


def test_weight_zero_clients_are_ignored():
    a = init_tiny_net(8, 16, 4, seed=7)
    b = init_tiny_net(8, 16, 4, seed=8)
    out = fedavg_aggregate([a, b], weights=[1.0, 0.0])
    assert out == a


def test_midpoint_matches_scalar_loop_oracle():
    a = init_tiny_net(8, 16, 4, seed=9)
    b = init_tiny_net(8, 16, 4, seed=10)
    out = fedavg_aggregate([a, b], weights=[1.0, 1.0])
    for rec_a, rec_b, rec_o in zip(a, b, out):
        expect = np.empty(rec_a.element_count, dtype=np.float32)
        for i in range(rec_a.element_count):
            expect[i] = np.float32(
                (float(rec_a.data[i]) + float(rec_b.data[i])) / 2.0
            )
        np.testing.assert_array_equal(rec_o.data, expect)


def test_aggregate_scaling_linearity():
    rng = np.random.default_rng(30)
    states = [init_tiny_net(8, 16, 4, seed=s) for s in (11, 12, 13)]
    weights = [1.0, 2.0, 3.0]
    mean = fedavg_aggregate(states, weights)
    alpha = 0.25
    scaled = [
        StateDict(
            TensorRecord(r.name, r.shape, r.dtype,
                         (r.data.astype(np.float64) * alpha).astype(np.float32))
            for r in st
        )
        for st in states
    ]
    mean_scaled = fedavg_aggregate(scaled, weights)
    for a, b in zip(mean, mean_scaled):
        np.testing.assert_allclose(
            b.data.astype(np.float64),
            a.data.astype(np.float64) * alpha,
            rtol=1e-6, atol=1e-9,
        )


def test_structure_mismatch_detected():
    a = init_tiny_net(8, 16, 4, seed=14)
    b = init_tiny_net(8, 20, 4, seed=14)
    with pytest.raises(StructureMismatch):
        fedavg_aggregate([a, b])


# ---------------------------------------------------------------------------
# rounds and experiments
# ---------------------------------------------------------------------------


def test_tight_bound_is_transparent_for_one_round():
    cfg = quick_cfg(codec_spec=CodecSpec(PQ, ErrorBound("relative", 1e-5)))
    data = gen_task(cfg.task, cfg.n_clients)
    state = init_tiny_net(8, 16, 4, seed=cfg.seed)
    with_codec, _ = run_round(cfg, state, 0, data)
    without, _ = run_round(quick_cfg(), state, 0, data)
    for a, b in zip(without, with_codec):
        diff = np.abs(
            a.data.astype(np.float64) - b.data.astype(np.float64)
        ).max()
        # weighted mean of per-client errors stays within the largest bound
        assert diff <= 1e-5 * 2.0 + 1e-7


def test_tight_bound_leaves_final_accuracy_untouched():
    # a 1e-5 relative bound is training noise: whole-run accuracy moves
    # by well under half a percentage point
    task = SyntheticTask(seed=4)
    base = run_experiment(FLConfig(rounds=10, seed=4, task=task))
    tight = run_experiment(FLConfig(
        rounds=10, seed=4, task=task,
        codec_spec=CodecSpec(PQ, ErrorBound("relative", 1e-5)),
    ))
    assert abs(base.final_accuracy - tight.final_accuracy) < 0.005


def test_round_wall_clock_tracks_cost_model():
    spec = CodecSpec(PQ, ErrorBound("relative", 1e-2))
    cfg = FLConfig(rounds=1, codec_spec=spec, network=NetworkModel(10e6))
    data = gen_task(cfg.task, cfg.n_clients)
    state = init_tiny_net(cfg.task.input_dim, cfg.hidden, cfg.task.num_classes, cfg.seed)
    _, metrics = run_round(cfg, state, 0, data)
    for c in metrics.clients:
        predicted = c.t_c + c.t_d + c.s_prime_bytes * 8.0 / 10e6
        # transfer uses the serialized size, which equals s_prime
        assert c.total_seconds == pytest.approx(predicted, rel=1e-9)
    assert metrics.wall_clock_seconds == max(c.total_seconds for c in metrics.clients)


def test_uncompressed_round_still_pays_transfer():
    cfg = quick_cfg(network=NetworkModel(8e6))
    data = gen_task(cfg.task, cfg.n_clients)
    state = init_tiny_net(8, 16, 4, seed=cfg.seed)
    _, metrics = run_round(cfg, state, 0, data)
    for c in metrics.clients:
        assert c.t_c == 0.0 and c.t_d == 0.0
        assert c.transfer_seconds == pytest.approx(c.s_bytes * 8.0 / 8e6)


def test_experiment_rounds_and_determinism():
    cfg = quick_cfg(rounds=4, codec_spec=CodecSpec(PQ, ErrorBound("relative", 1e-2)))
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert len(a.rounds) == 4
    assert a == b  # virtual clock keeps everything reproducible


def test_invalid_round_count():
    with pytest.raises(InvalidConfig):
        run_experiment(quick_cfg(rounds=0))


def test_sweep_ratios_non_increasing_as_bound_tightens():
    cfg = quick_cfg(
        rounds=2,
        task=quick_task(input_dim=32, num_classes=8, samples_per_client=60),
        hidden=32,
        codec_spec=CodecSpec(PQ, ErrorBound("relative", 1e-2)),
        rule=RoutingRule(threshold=64),
    )
    grid = sweep_epsilon(cfg, [1e-1, 1e-2, 1e-3, 1e-4])
    ratios = [rec.ratio for rec in grid.records[0]]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    assert grid.baseline_accuracy is not None
    assert grid.accuracies is not None
    for rec in grid.records[0]:
        assert 0.0 <= rec.mean_abs_error <= rec.max_abs_error


def test_sweep_requires_codec():
    with pytest.raises(InvalidConfig):
        sweep_epsilon(quick_cfg(), [1e-2])
    with pytest.raises(InvalidConfig):
        sweep_epsilon(
            quick_cfg(codec_spec=CodecSpec(PQ, ErrorBound("relative", 1e-2))), []
        )
