"""Post-hoc analysis: reconstruction-error distributions with a Laplace
fit, and deterministic CSV / JSON-lines report emission.

The Laplace fit is the maximum-likelihood one: location is the sample
median, scale the mean absolute deviation around it. Goodness is the
mean absolute gap between the empirical CDF and the fitted CDF; it
measures resemblance, nothing stronger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ebcodec import CodecBenchRecord, CodecSpec, ErrorBound
from .errors import CorruptPayload, LengthMismatch
from .flsim import ExperimentReport
from .netsim import SelectionGrid
from .pipeline import PipelineBench


@dataclass
class ErrorDistribution:
    samples: np.ndarray  # original - reconstructed, float64
    bin_edges: np.ndarray
    counts: np.ndarray
    laplace_mu: float
    laplace_b: float
    goodness: float
    eps_abs: float


def laplace_cdf(x: np.ndarray, mu: float, b: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if b == 0:
        return (x >= mu).astype(np.float64)
    z = (x - mu) / b
    return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


def fit_laplace(samples: np.ndarray) -> tuple[float, float]:
    """Maximum-likelihood location and scale."""
    mu = float(np.median(samples))
    b = float(np.mean(np.abs(samples - mu)))
    return mu, b


def cdf_distance(samples: np.ndarray, mu: float, b: float) -> float:
    """Mean |empirical CDF - fitted CDF| over the sample points."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = xs.size
    ecdf = (np.arange(n) + 0.5) / n
    return float(np.mean(np.abs(ecdf - laplace_cdf(xs, mu, b))))


def error_distribution(
    original, reconstructed, bins: int = 101, eps_abs: float | None = None
) -> ErrorDistribution:
    """Histogram and Laplace fit of elementwise reconstruction errors.

    The histogram spans [-eps_abs, +eps_abs]; when no bound is supplied
    the observed maximum absolute error is used instead.
    """
    orig = np.asarray(original, dtype=np.float64).reshape(-1)
    recon = np.asarray(reconstructed, dtype=np.float64).reshape(-1)
    if orig.size != recon.size:
        raise LengthMismatch(f"{orig.size} original vs {recon.size} reconstructed")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    samples = orig - recon
    if eps_abs is None:
        eps_abs = float(np.abs(samples).max()) if samples.size else 0.0
    if eps_abs <= 0:
        eps_abs = np.finfo(np.float32).tiny
    counts, edges = np.histogram(samples, bins=bins, range=(-eps_abs, eps_abs))
    mu, b = fit_laplace(samples) if samples.size else (0.0, 0.0)
    goodness = cdf_distance(samples, mu, b) if samples.size else 0.0
    return ErrorDistribution(samples, edges, counts, mu, b, goodness, float(eps_abs))


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(rows: list[list], header: list[str]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _experiment_rows(rep: ExperimentReport):
    header = [
        "round",
        "accuracy",
        "s_bytes",
        "s_prime_bytes",
        "ratio",
        "t_c",
        "t_d",
        "transfer_seconds",
        "wall_clock_seconds",
    ]
    rows = []
    for m in rep.rounds:
        s = sum(c.s_bytes for c in m.clients)
        sp = sum(c.s_prime_bytes for c in m.clients)
        rows.append(
            [
                m.round_index,
                m.accuracy,
                s,
                sp,
                s / sp if sp else 0.0,
                m.mean("t_c"),
                m.mean("t_d"),
                m.mean("transfer_seconds"),
                m.wall_clock_seconds,
            ]
        )
    return header, rows


def _bench_rows(bench: PipelineBench):
    header = ["name", "route", "raw_bytes", "blob_bytes", "eps_abs", "max_abs_error"]
    rows = [
        [e.name, e.route, e.raw_bytes, e.blob_bytes, e.eps_abs, e.max_abs_error]
        for e in bench.entries
    ]
    return header, rows


def _grid_rows(grid: SelectionGrid):
    header = ["codec_id", "epsilon", "ratio", "t_c", "t_d", "accuracy"]
    rows = []
    for i, spec in enumerate(grid.candidates):
        for j, eps in enumerate(grid.epsilons):
            rec = grid.records[i][j]
            acc = grid.accuracies[i][j] if grid.accuracies else None
            rows.append(
                [
                    spec.codec_id,
                    eps,
                    rec.ratio,
                    rec.compress_seconds,
                    rec.decompress_seconds,
                    acc,
                ]
            )
    return header, rows


def render_report(obj, fmt: str = "csv") -> str:
    """Render an ExperimentReport, PipelineBench, or SelectionGrid.

    Output is deterministic: same object, same bytes.
    """
    if fmt not in ("csv", "json-lines"):
        raise ValueError(f"unknown report format {fmt!r}")
    if isinstance(obj, ExperimentReport):
        header, rows = _experiment_rows(obj)
        trailer = {
            "codec_id": obj.codec_id,
            "epsilon": obj.epsilon,
            "final_accuracy": obj.final_accuracy,
            "total_s_bytes": obj.total_s_bytes,
            "total_s_prime_bytes": obj.total_s_prime_bytes,
            "mean_ratio": obj.mean_ratio,
            "total_comm_seconds": obj.total_comm_seconds,
        }
    elif isinstance(obj, PipelineBench):
        header, rows = _bench_rows(obj)
        trailer = {
            "t_c": obj.t_c,
            "t_d": obj.t_d,
            "s_bytes": obj.s_bytes,
            "s_prime_bytes": obj.s_prime_bytes,
            "ratio": obj.ratio,
        }
    elif isinstance(obj, SelectionGrid):
        header, rows = _grid_rows(obj)
        trailer = {
            "original_bytes": obj.original_bytes,
            "element_count": obj.element_count,
            "baseline_accuracy": obj.baseline_accuracy,
        }
    else:
        raise TypeError(f"cannot render {type(obj).__name__}")
    if fmt == "csv":
        return _csv(rows, header)
    lines = [json.dumps({"meta": trailer}, sort_keys=True)]
    lines.extend(
        json.dumps(dict(zip(header, row)), sort_keys=True) for row in rows
    )
    return "\n".join(lines) + "\n"


def write_report(obj, path, fmt: str = "csv") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_report(obj, fmt))


# ---------------------------------------------------------------------------
# selection-grid persistence (JSON lines), for the select subcommand
# ---------------------------------------------------------------------------


def grid_to_jsonl(grid: SelectionGrid) -> str:
    meta = {
        "type": "selection_grid",
        "original_bytes": grid.original_bytes,
        "element_count": grid.element_count,
        "baseline_accuracy": grid.baseline_accuracy,
        "epsilons": grid.epsilons,
    }
    lines = [json.dumps(meta, sort_keys=True)]
    for i, spec in enumerate(grid.candidates):
        for j, eps in enumerate(grid.epsilons):
            rec = grid.records[i][j]
            cell = {
                "codec_id": spec.codec_id,
                "bound_mode": spec.bound.mode,
                "block_size": spec.block_size,
                "quant_radius": spec.quant_radius,
                "candidate": i,
                "epsilon": eps,
                "t_c": rec.compress_seconds,
                "t_d": rec.decompress_seconds,
                "ratio": rec.ratio,
                "max_abs_error": rec.max_abs_error,
                "mean_abs_error": rec.mean_abs_error,
                "accuracy": grid.accuracies[i][j] if grid.accuracies else None,
            }
            lines.append(json.dumps(cell, sort_keys=True))
    return "\n".join(lines) + "\n"


def grid_from_jsonl(text: str) -> SelectionGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CorruptPayload("empty selection grid file")
    meta = json.loads(lines[0])
    if meta.get("type") != "selection_grid":
        raise CorruptPayload("not a selection grid file")
    epsilons = list(meta["epsilons"])
    cells = [json.loads(ln) for ln in lines[1:]]
    by_candidate: dict[int, dict[float, dict]] = {}
    specs: dict[int, CodecSpec] = {}
    for cell in cells:
        i = cell["candidate"]
        specs.setdefault(
            i,
            CodecSpec(
                codec_id=cell["codec_id"],
                bound=ErrorBound(cell["bound_mode"], cell["epsilon"]),
                block_size=cell["block_size"],
                quant_radius=cell["quant_radius"],
            ),
        )
        by_candidate.setdefault(i, {})[cell["epsilon"]] = cell
    candidates, records, accuracies = [], [], []
    have_acc = all(
        c.get("accuracy") is not None for row in by_candidate.values() for c in row.values()
    )
    for i in sorted(by_candidate):
        row = by_candidate[i]
        if sorted(row) != sorted(epsilons):
            raise CorruptPayload(f"candidate {i} is missing epsilon cells")
        candidates.append(specs[i])
        records.append(
            [
                CodecBenchRecord(
                    codec_id=row[e]["codec_id"],
                    epsilon=e,
                    compress_seconds=row[e]["t_c"],
                    decompress_seconds=row[e]["t_d"],
                    ratio=row[e]["ratio"],
                    max_abs_error=row[e]["max_abs_error"],
                    mean_abs_error=row[e]["mean_abs_error"],
                )
                for e in epsilons
            ]
        )
        if have_acc:
            accuracies.append([row[e]["accuracy"] for e in epsilons])
    return SelectionGrid(
        candidates=candidates,
        epsilons=epsilons,
        records=records,
        original_bytes=meta["original_bytes"],
        element_count=meta["element_count"],
        accuracies=accuracies if have_acc else None,
        baseline_accuracy=meta.get("baseline_accuracy"),
    )
