"""Desk-scale federated averaging loop with pluggable update compression.

The task is synthetic Gaussian-blob classification, the model a two-layer
ReLU net held in a StateDict, training plain mini-batch SGD on softmax
cross-entropy. Client updates optionally pass through the compression
pipeline and an emulated network link on their way to the server.

Forward/backward math runs in float64 internally; model state stays f32.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ebcodec import CodecBenchRecord, CodecSpec
from .errors import InvalidConfig, ShapeMismatch, StructureMismatch
from .netsim import NetworkModel, RealClock, SelectionGrid, VirtualClock, emulate_send
from .pipeline import RoutingRule, compress_update, decompress_update
from .tensor_store import StateDict, TensorRecord

# deterministic stand-in throughputs for codec work under the virtual clock
VIRTUAL_COMPRESS_BPS = 150e6
VIRTUAL_DECOMPRESS_BPS = 300e6


@dataclass(frozen=True)
class SyntheticTask:
    """Gaussian-blob classification task, fully determined by its seed."""

    seed: int = 0
    num_classes: int = 20
    input_dim: int = 64
    noise_sigma: float = 1.0
    samples_per_client: int = 200
    eval_samples: int = 512
    centers: np.ndarray | None = None

    def __post_init__(self):
        if self.num_classes < 1 or self.input_dim < 1:
            raise ValueError("num_classes and input_dim must be positive")
        if self.samples_per_client < 1 or self.eval_samples < 1:
            raise ValueError("sample counts must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass
class ClientData:
    x: np.ndarray  # (n, input_dim) float64
    y: np.ndarray  # (n,) int64


@dataclass
class TaskData:
    clients: list[ClientData]
    eval_x: np.ndarray
    eval_y: np.ndarray
    centers: np.ndarray


def gen_task(task: SyntheticTask, n_clients: int = 4) -> TaskData:
    """IID client datasets plus a held-out eval set, deterministic per seed."""
    if n_clients < 1:
        raise ValueError("need at least one client")
    rng = np.random.default_rng(task.seed)
    if task.centers is not None:
        centers = np.asarray(task.centers, dtype=np.float64)
        if centers.shape != (task.num_classes, task.input_dim):
            raise ShapeMismatch(
                f"centers must be {(task.num_classes, task.input_dim)}, got {centers.shape}"
            )
    else:
        centers = rng.normal(0.0, 1.0, (task.num_classes, task.input_dim))
    if task.num_classes > 1:
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diffs**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 0:
            raise ValueError("class centers must be pairwise distinct")

    def draw(n):
        labels = rng.integers(0, task.num_classes, n)
        x = centers[labels] + task.noise_sigma * rng.normal(0.0, 1.0, (n, task.input_dim))
        return x, labels.astype(np.int64)

    clients = [ClientData(*draw(task.samples_per_client)) for _ in range(n_clients)]
    eval_x, eval_y = draw(task.eval_samples)
    return TaskData(clients, eval_x, eval_y, centers)


# ---------------------------------------------------------------------------
# two-layer network
# ---------------------------------------------------------------------------

_LAYER_NAMES = ("fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias")


def init_tiny_net(input_dim: int, hidden: int, num_classes: int, seed: int) -> StateDict:
    """He-initialized two-layer ReLU network as an f32 StateDict."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), (hidden, input_dim))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), (num_classes, hidden))
    return StateDict(
        [
            TensorRecord.from_array("fc1.weight", w1.astype(np.float32)),
            TensorRecord.from_array("fc1.bias", np.zeros(hidden, np.float32)),
            TensorRecord.from_array("fc2.weight", w2.astype(np.float32)),
            TensorRecord.from_array("fc2.bias", np.zeros(num_classes, np.float32)),
        ]
    )


def _params(state: StateDict) -> dict[str, np.ndarray]:
    for name in _LAYER_NAMES:
        if name not in state:
            raise StructureMismatch(f"state dict lacks {name!r}")
    return {
        name: state[name].data.astype(np.float64).reshape(state[name].shape)
        for name in _LAYER_NAMES
    }


def _logits(p: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z1 = x @ p["fc1.weight"].T + p["fc1.bias"]
    a1 = np.maximum(z1, 0.0)
    return a1 @ p["fc2.weight"].T + p["fc2.bias"], a1


def loss_and_grads(
    state, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy and its analytic gradients (float64).

    Accepts a StateDict or a plain name -> float64 array dict; the dict
    form lets finite-difference checks perturb parameters without f32
    quantization.
    """
    p = state if isinstance(state, dict) else _params(state)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[1] != p["fc1.weight"].shape[1]:
        raise ShapeMismatch(
            f"inputs of shape {x.shape} do not match fc1.weight {p['fc1.weight'].shape}"
        )
    n = x.shape[0]
    logits, a1 = _logits(p, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.log(probs[np.arange(n), y] + 1e-300).mean())
    dz2 = probs.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    da1 = dz2 @ p["fc2.weight"]
    dz1 = da1 * (a1 > 0.0)
    grads = {
        "fc1.weight": dz1.T @ x,
        "fc1.bias": dz1.sum(axis=0),
        "fc2.weight": dz2.T @ a1,
        "fc2.bias": dz2.sum(axis=0),
    }
    return loss, grads


def evaluate(state: StateDict, x: np.ndarray, y: np.ndarray) -> float:
    """Top-1 accuracy on (x, y)."""
    logits, _ = _logits(_params(state), np.asarray(x, dtype=np.float64))
    return float((logits.argmax(axis=1) == np.asarray(y)).mean())


def local_train(
    state: StateDict,
    data: ClientData,
    epochs: int,
    lr: float,
    batch_size: int,
    seed,
) -> StateDict:
    """Mini-batch SGD, deterministic per seed. Returns a fresh StateDict."""
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    p = _params(state)
    if data.x.shape[1] != p["fc1.weight"].shape[1]:
        raise ShapeMismatch(
            f"data dim {data.x.shape[1]} does not match fc1.weight {p['fc1.weight'].shape}"
        )
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if lr == 0:
        return StateDict(state.entries)  # records are immutable, safe to share
    rng = np.random.default_rng(seed)
    n = data.x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = loss_and_grads(p, data.x[idx], data.y[idx])
            for name in _LAYER_NAMES:
                p[name] -= lr * grads[name]
    out = []
    for rec in state:
        if rec.name in p:
            out.append(TensorRecord.from_array(rec.name, p[rec.name].astype(np.float32)))
        else:
            out.append(rec)
    return StateDict(out)


def fedavg_aggregate(states: list[StateDict], weights=None) -> StateDict:
    """Per-tensor weighted mean of structurally identical StateDicts.

    Float tensors average in float64; integer tensors pass through from
    the first state unchanged.
    """
    if not states:
        raise ValueError("need at least one state")
    first = states[0]
    for other in states[1:]:
        if other.names() != first.names():
            raise StructureMismatch("state dicts name different tensors")
        for a, b in zip(first, other):
            if a.shape != b.shape or a.dtype != b.dtype:
                raise StructureMismatch(
                    f"{a.name}: {a.shape}/{a.dtype} vs {b.shape}/{b.dtype}"
                )
    if weights is None:
        weights = [1.0] * len(states)
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(states) or (w < 0).any():
        raise ValueError("weights must be non-negative, one per state")
    total = w.sum()
    if not total > 0:
        raise ValueError("weights must sum to a positive value")
    w = w / total
    out = []
    for k, rec in enumerate(first):
        if rec.dtype in ("f32", "f64"):
            acc = np.zeros(rec.data.shape, dtype=np.float64)
            for wi, st in zip(w, states):
                acc += wi * st.entries[k].data.astype(np.float64)
            out.append(TensorRecord(rec.name, rec.shape, rec.dtype, acc))
        else:
            out.append(rec)
    return StateDict(out)


# ---------------------------------------------------------------------------
# federated rounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FLConfig:
    n_clients: int = 4
    rounds: int = 20
    local_epochs: int = 1
    lr: float = 0.05
    batch_size: int = 32
    codec_spec: CodecSpec | None = None
    rule: RoutingRule = field(default_factory=RoutingRule)
    network: NetworkModel = field(default_factory=lambda: NetworkModel(10e6))
    task: SyntheticTask = field(default_factory=SyntheticTask)
    seed: int = 7
    hidden: int = 64
    virtual_clock: bool = True
    compress_bps: float = VIRTUAL_COMPRESS_BPS
    decompress_bps: float = VIRTUAL_DECOMPRESS_BPS


@dataclass
class ClientComm:
    t_c: float
    t_d: float
    s_bytes: int
    s_prime_bytes: int
    transfer_seconds: float

    @property
    def total_seconds(self) -> float:
        return self.t_c + self.t_d + self.transfer_seconds


@dataclass
class RoundMetrics:
    round_index: int
    accuracy: float
    clients: list[ClientComm]
    wall_clock_seconds: float  # max over clients: clients run in parallel

    def mean(self, attr: str) -> float:
        return float(np.mean([getattr(c, attr) for c in self.clients]))


@dataclass
class ExperimentReport:
    codec_id: str
    epsilon: float
    rounds: list[RoundMetrics]
    final_accuracy: float
    total_s_bytes: int
    total_s_prime_bytes: int
    total_comm_seconds: float

    @property
    def mean_ratio(self) -> float:
        if not self.total_s_prime_bytes:
            return 0.0
        return self.total_s_bytes / self.total_s_prime_bytes


def _client_seed(cfg: FLConfig, round_idx: int, client: int):
    return (cfg.seed, 1000 + round_idx, client)


def run_round(
    cfg: FLConfig, global_state: StateDict, round_idx: int, data: TaskData
) -> tuple[StateDict, RoundMetrics]:
    """One communication round: local SGD, upload, aggregate, evaluate."""
    locals_, comms = [], []
    for i, client in enumerate(data.clients):
        trained = local_train(
            global_state,
            client,
            cfg.local_epochs,
            cfg.lr,
            cfg.batch_size,
            _client_seed(cfg, round_idx, i),
        )
        s_bytes = trained.payload_nbytes()
        if cfg.codec_spec is None:
            server_state = trained
            t_c = t_d = 0.0
            send_bytes = s_bytes
            s_prime = s_bytes
        else:
            t0 = time.perf_counter()
            update = compress_update(trained, cfg.codec_spec, cfg.rule)
            payload = update.to_bytes()
            t1 = time.perf_counter()
            server_state = decompress_update(payload)
            t2 = time.perf_counter()
            send_bytes = len(payload)
            s_prime = update.compressed_bytes
            if cfg.virtual_clock:
                # deterministic stand-in so reports are reproducible
                t_c = s_bytes / cfg.compress_bps
                t_d = s_bytes / cfg.decompress_bps
            else:
                t_c = t1 - t0
                t_d = t2 - t1
        clock = VirtualClock() if cfg.virtual_clock else RealClock()
        transfer = emulate_send(send_bytes, cfg.network, clock, client_id=i)
        locals_.append(server_state)
        comms.append(ClientComm(t_c, t_d, s_bytes, s_prime, transfer))
    weights = [len(c.y) for c in data.clients]
    new_state = fedavg_aggregate(locals_, weights)
    accuracy = evaluate(new_state, data.eval_x, data.eval_y)
    wall = max(c.total_seconds for c in comms)
    return new_state, RoundMetrics(round_idx, accuracy, comms, wall)


def run_experiment(cfg: FLConfig) -> ExperimentReport:
    """Full FedAvg run. Deterministic per config under the virtual clock."""
    if cfg.rounds < 1:
        raise InvalidConfig(f"rounds must be >= 1, got {cfg.rounds}")
    if cfg.n_clients < 1:
        raise InvalidConfig(f"n_clients must be >= 1, got {cfg.n_clients}")
    data = gen_task(cfg.task, cfg.n_clients)
    state = init_tiny_net(cfg.task.input_dim, cfg.hidden, cfg.task.num_classes, cfg.seed)
    rounds = []
    for r in range(cfg.rounds):
        state, metrics = run_round(cfg, state, r, data)
        rounds.append(metrics)
    return ExperimentReport(
        codec_id=cfg.codec_spec.codec_id if cfg.codec_spec else "none",
        epsilon=cfg.codec_spec.bound.epsilon if cfg.codec_spec else 0.0,
        rounds=rounds,
        final_accuracy=rounds[-1].accuracy,
        total_s_bytes=sum(c.s_bytes for m in rounds for c in m.clients),
        total_s_prime_bytes=sum(c.s_prime_bytes for m in rounds for c in m.clients),
        total_comm_seconds=sum(m.wall_clock_seconds for m in rounds),
    )


def sweep_epsilon(cfg: FLConfig, epsilons: list[float]) -> SelectionGrid:
    """Run the experiment once per epsilon and collect a selection grid.

    Also runs the uncompressed baseline to anchor the accuracy target.
    """
    if not epsilons:
        raise InvalidConfig("epsilon list must be non-empty")
    if cfg.codec_spec is None:
        raise InvalidConfig("sweep requires a codec in the config")
    baseline = run_experiment(replace(cfg, codec_spec=None))
    records, accuracies = [], []
    state_probe = None
    for eps in epsilons:
        spec = cfg.codec_spec.with_epsilon(eps)
        report = run_experiment(replace(cfg, codec_spec=spec))
        if state_probe is None:
            # one representative model for error statistics
            data = gen_task(cfg.task, cfg.n_clients)
            probe = init_tiny_net(
                cfg.task.input_dim, cfg.hidden, cfg.task.num_classes, cfg.seed
            )
            probe, _ = run_round(replace(cfg, codec_spec=None), probe, 0, data)
            state_probe = probe
        max_err, mean_err = _roundtrip_errors(state_probe, spec, cfg.rule)
        records.append(
            CodecBenchRecord(
                codec_id=spec.codec_id,
                epsilon=eps,
                compress_seconds=float(
                    np.mean([m.mean("t_c") for m in report.rounds])
                ),
                decompress_seconds=float(
                    np.mean([m.mean("t_d") for m in report.rounds])
                ),
                ratio=report.mean_ratio,
                max_abs_error=max_err,
                mean_abs_error=mean_err,
            )
        )
        accuracies.append(report.final_accuracy)
    model_state = init_tiny_net(
        cfg.task.input_dim, cfg.hidden, cfg.task.num_classes, cfg.seed
    )
    return SelectionGrid(
        candidates=[cfg.codec_spec],
        epsilons=list(epsilons),
        records=[records],
        original_bytes=model_state.payload_nbytes(),
        element_count=model_state.element_count(),
        accuracies=[accuracies],
        baseline_accuracy=baseline.final_accuracy,
    )


def _roundtrip_errors(state: StateDict, spec: CodecSpec, rule: RoutingRule):
    update = compress_update(state, spec, rule)
    restored = decompress_update(update.to_bytes())
    errs = []
    for rec in state:
        back = restored[rec.name]
        if rec.dtype == "f32":
            errs.append(
                np.abs(rec.data.astype(np.float64) - back.data.astype(np.float64))
            )
    if not errs:
        return 0.0, 0.0
    pooled = np.concatenate(errs)
    return float(pooled.max()), float(pooled.mean())
