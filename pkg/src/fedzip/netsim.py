"""Communication cost model, break-even analysis, bandwidth emulation,
and the codec / error-bound selection procedures.

The core decision rule: compressing pays off exactly when

    t_C + t_D + 8 * S' / B  <  8 * S / B

with S and S' in bytes and B in bits per second.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .ebcodec import CodecBenchRecord, CodecSpec
from .errors import NoBreakeven, NoFeasibleCandidate, NoFeasibleEpsilon


@dataclass(frozen=True)
class NetworkModel:
    """Uplink bandwidth, with optional per-client overrides (bps)."""

    bandwidth_bps: float
    per_client: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.bandwidth_bps > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_bps}")
        for cid, bw in self.per_client.items():
            if not bw > 0:
                raise ValueError(f"client {cid}: bandwidth must be positive, got {bw}")

    def bandwidth_for(self, client_id: int | None = None) -> float:
        if client_id is None:
            return self.bandwidth_bps
        return self.per_client.get(client_id, self.bandwidth_bps)

    def client_bandwidths(self) -> list[float]:
        """Per-client bandwidths, ordered by client id; one client if no overrides."""
        if not self.per_client:
            return [self.bandwidth_bps]
        return [self.per_client[cid] for cid in sorted(self.per_client)]


@dataclass(frozen=True)
class CostInputs:
    """One compression outcome: timings plus original/compressed sizes."""

    t_c: float
    t_d: float
    s_bytes: int
    s_prime_bytes: int

    def __post_init__(self):
        if self.t_c < 0 or self.t_d < 0:
            raise ValueError("timings must be non-negative")
        if self.s_bytes <= 0 or self.s_prime_bytes <= 0:
            raise ValueError("sizes must be positive")


def transfer_time(nbytes: float, model: NetworkModel, client_id: int | None = None) -> float:
    """Seconds to push `nbytes` through the link."""
    if nbytes < 0:
        raise ValueError(f"byte count must be non-negative, got {nbytes}")
    return nbytes * 8.0 / model.bandwidth_for(client_id)


def worthwhile(cost: CostInputs, model: NetworkModel) -> bool:
    """True when compress-then-send beats sending raw, strictly."""
    compressed = cost.t_c + cost.t_d + transfer_time(cost.s_prime_bytes, model)
    return compressed < transfer_time(cost.s_bytes, model)


def breakeven_bandwidth(cost: CostInputs) -> float:
    """Bandwidth (bps) where compressing and sending raw take equal time.

    Compression wins strictly below the returned value and loses at or
    above it.
    """
    if cost.s_prime_bytes >= cost.s_bytes:
        raise NoBreakeven(
            f"compressed size {cost.s_prime_bytes} >= original {cost.s_bytes}"
        )
    overhead = cost.t_c + cost.t_d
    if overhead <= 0:
        raise ValueError("t_c + t_d must be positive for a finite break-even")
    return 8.0 * (cost.s_bytes - cost.s_prime_bytes) / overhead


class VirtualClock:
    """Deterministic clock: sleep() advances time instead of waiting.

    Advances are serialized under a lock, so the final time after a set
    of sleeps does not depend on their interleaving.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        with self._lock:
            self._now += seconds


class RealClock:
    """Wall-clock time and real sleeping."""

    @staticmethod
    def now() -> float:
        return time.perf_counter()

    @staticmethod
    def sleep(seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


def emulate_send(
    nbytes: float,
    model: NetworkModel,
    clock,
    client_id: int | None = None,
) -> float:
    """Block (or advance a virtual clock) for the transfer and return the
    elapsed seconds as the clock saw them."""
    start = clock.now()
    clock.sleep(transfer_time(nbytes, model, client_id))
    return clock.now() - start


@dataclass
class SelectionGrid:
    """Benchmarks over a (codec candidate x epsilon) grid.

    `records[i][j]` measures candidate i at epsilons[j]; `accuracies`
    (same layout, optional) holds end-of-training accuracy per cell, and
    `baseline_accuracy` the uncompressed reference.
    """

    candidates: list[CodecSpec]
    epsilons: list[float]
    records: list[list[CodecBenchRecord]]
    original_bytes: int
    element_count: int
    accuracies: list[list[float]] | None = None
    baseline_accuracy: float | None = None

    def __post_init__(self):
        if len(self.records) != len(self.candidates):
            raise ValueError("records must have one row per candidate")
        for row in self.records:
            if len(row) != len(self.epsilons):
                raise ValueError("records grid must be rectangular")
        if self.accuracies is not None:
            if len(self.accuracies) != len(self.candidates) or any(
                len(row) != len(self.epsilons) for row in self.accuracies
            ):
                raise ValueError("accuracies grid must match records")
            for row in self.accuracies:
                if any(not 0.0 <= a <= 1.0 for a in row):
                    raise ValueError("accuracies must lie in [0, 1]")
        if self.baseline_accuracy is not None and not 0.0 <= self.baseline_accuracy <= 1.0:
            raise ValueError("baseline accuracy must lie in [0, 1]")


def _cell_feasible(rec: CodecBenchRecord, grid: SelectionGrid, model: NetworkModel) -> bool:
    overhead = rec.compress_seconds + rec.decompress_seconds
    raw_send = transfer_time(grid.original_bytes, model)
    return 0.0 < overhead < raw_send and 1.0 <= rec.ratio <= grid.element_count


def _end_to_end_seconds(rec: CodecBenchRecord, grid: SelectionGrid, model: NetworkModel) -> float:
    s_prime = grid.original_bytes / rec.ratio
    return rec.compress_seconds + rec.decompress_seconds + transfer_time(s_prime, model)


def pareto_front(grid: SelectionGrid, model: NetworkModel) -> list[tuple[int, int]]:
    """(candidate, epsilon) indices of feasible, non-dominated cells.

    A cell dominates another when its ratio is at least as high and its
    codec overhead at least as low, strictly better in one of the two.
    """
    cells = [
        (i, j)
        for i in range(len(grid.candidates))
        for j in range(len(grid.epsilons))
        if _cell_feasible(grid.records[i][j], grid, model)
    ]

    def stats(c):
        rec = grid.records[c[0]][c[1]]
        return rec.ratio, rec.compress_seconds + rec.decompress_seconds

    front = []
    for cell in cells:
        r, t = stats(cell)
        dominated = any(
            (ro >= r and to <= t) and (ro > r or to < t)
            for ro, to in (stats(o) for o in cells if o != cell)
        )
        if not dominated:
            front.append(cell)
    return front


def select_codec(
    grid: SelectionGrid, model: NetworkModel, policy: str = "end_to_end"
) -> CodecSpec:
    """Pick the (codec, epsilon) cell minimizing end-to-end update time.

    Only feasible cells compete; the winner always sits on the Pareto
    front because the objective improves with both higher ratio and
    lower overhead. Ties break toward higher ratio, then lexicographic
    codec id, then larger epsilon.
    """
    if policy != "end_to_end":
        raise ValueError(f"unknown selection policy {policy!r}")
    front = pareto_front(grid, model)
    if not front:
        raise NoFeasibleCandidate("every grid cell violates the constraints")

    def key(cell):
        i, j = cell
        rec = grid.records[i][j]
        return (
            _end_to_end_seconds(rec, grid, model),
            -rec.ratio,
            grid.candidates[i].codec_id,
            -grid.epsilons[j],
        )

    i, j = min(front, key=key)
    return grid.candidates[i].with_epsilon(grid.epsilons[j])


def client_cost_seconds(
    rec: CodecBenchRecord, grid: SelectionGrid, bandwidth_bps: float
) -> float:
    """Per-client end-to-end cost: compress + transfer compressed + decompress."""
    s_prime = grid.original_bytes / rec.ratio
    return rec.compress_seconds + rec.decompress_seconds + s_prime * 8.0 / bandwidth_bps


def select_epsilon(
    grid: SelectionGrid,
    model: NetworkModel,
    accuracy_slack: float,
    candidate_index: int = 0,
) -> float:
    """Largest-compression epsilon whose accuracy stays within slack of
    the uncompressed baseline, minimizing total per-client cost.

    Feasibility additionally requires each client's cost not to exceed
    the time to send the raw update. Ties break toward larger epsilon.
    """
    if accuracy_slack < 0:
        raise ValueError("accuracy slack must be non-negative")
    if grid.accuracies is None or grid.baseline_accuracy is None:
        raise ValueError("grid lacks accuracy data; run an epsilon sweep first")
    bandwidths = model.client_bandwidths()
    best = None
    for j, eps in enumerate(grid.epsilons):
        rec = grid.records[candidate_index][j]
        acc = grid.accuracies[candidate_index][j]
        if abs(grid.baseline_accuracy - acc) > accuracy_slack:
            continue
        costs = [client_cost_seconds(rec, grid, bw) for bw in bandwidths]
        raw = [grid.original_bytes * 8.0 / bw for bw in bandwidths]
        if any(c > r for c, r in zip(costs, raw)):
            continue
        total = sum(costs)
        if best is None or total < best[0] or (total == best[0] and eps > best[1]):
            best = (total, eps)
    if best is None:
        raise NoFeasibleEpsilon(
            f"no epsilon satisfies slack {accuracy_slack} and the cost bounds"
        )
    return best[1]
