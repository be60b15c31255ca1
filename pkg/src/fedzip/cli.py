"""fedzip command line: compress/decompress checkpoints, benchmark the
pipeline, sweep error bounds through the FedAvg simulator, and analyze
reconstruction error.

Exit codes: 0 success, 1 usage error, 2 data or codec error. Errors are
emitted as one JSON object per line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, flsim, netsim
from .ebcodec import CBT, PQ, CodecSpec, ErrorBound
from .errors import FedzipError
from .netsim import CostInputs, NetworkModel, transfer_time, worthwhile
from .pipeline import RoutingRule, compress_update, decompress_update, measure_pipeline
from .tensor_store import load_checkpoint, save_checkpoint

_CODEC_ALIASES = {"pq": PQ, "cbt": CBT}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise _UsageError(message)


def _add_codec_args(sp, with_codec_choice=True):
    if with_codec_choice:
        sp.add_argument("--codec", default="pq", help="pq or cbt (or a registered name)")
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--rel-eb", type=float, default=1e-2, help="relative error bound")
    group.add_argument("--abs-eb", type=float, default=None, help="absolute error bound")
    sp.add_argument("--block-size", type=int, default=256)
    sp.add_argument("--quant-radius", type=int, default=32768)


def _add_rule_args(sp):
    sp.add_argument("--threshold", type=int, default=1024,
                    help="min element count for the lossy route")
    sp.add_argument("--marker", default="weight",
                    help="substring a name must contain to route lossy")
    sp.add_argument("--force-lossless", action="append", default=[],
                    help="fnmatch pattern kept lossless (repeatable)")


def _codec_spec(args) -> CodecSpec:
    name = _CODEC_ALIASES.get(args.codec, args.codec)
    if args.abs_eb is not None:
        bound = ErrorBound("absolute", args.abs_eb)
    else:
        bound = ErrorBound("relative", args.rel_eb)
    return CodecSpec(name, bound, args.block_size, args.quant_radius)


def _rule(args) -> RoutingRule:
    return RoutingRule(args.marker, args.threshold, tuple(args.force_lossless))


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_compress(args) -> int:
    state = load_checkpoint(args.input)
    update = compress_update(state, _codec_spec(args), _rule(args))
    with open(args.output, "wb") as fh:
        fh.write(update.to_bytes())
    print(json.dumps({
        "entries": len(update.entries),
        "s_bytes": update.original_bytes,
        "s_prime_bytes": update.compressed_bytes,
        "ratio": update.ratio,
    }, sort_keys=True))
    return 0


def _cmd_decompress(args) -> int:
    with open(args.input, "rb") as fh:
        state = decompress_update(fh.read())
    save_checkpoint(state, args.output)
    print(json.dumps({
        "entries": len(state),
        "payload_bytes": state.payload_nbytes(),
    }, sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    state = load_checkpoint(args.input)
    bench = measure_pipeline(state, _codec_spec(args), _rule(args), args.reps)
    text = analysis.render_report(bench, args.format)
    _emit(text, args.out)
    if args.out:
        print(json.dumps({
            "t_c": bench.t_c,
            "t_d": bench.t_d,
            "s_bytes": bench.s_bytes,
            "s_prime_bytes": bench.s_prime_bytes,
            "ratio": bench.ratio,
        }, sort_keys=True))
    return 0


def _cmd_bench_net(args) -> int:
    try:
        lo, hi = (float(p) for p in args.bw_range.split(":"))
    except ValueError:
        raise _UsageError(f"--bw-range must look like 1e6:1e10, got {args.bw_range!r}")
    if not (0 < lo < hi):
        raise _UsageError("--bw-range bounds must be positive and increasing")
    s_bytes = int(args.size_mb * 1e6)
    s_prime = max(1, int(s_bytes / args.ratio))
    cost = CostInputs(args.tc, args.td, s_bytes, s_prime)
    rows = []
    for bw in np.geomspace(lo, hi, args.points):
        model = NetworkModel(float(bw))
        rows.append([
            float(bw),
            transfer_time(s_bytes, model),
            cost.t_c + cost.t_d + transfer_time(s_prime, model),
            worthwhile(cost, model),
        ])
    header = ["bandwidth", "time_uncompressed", "time_compressed", "worthwhile"]
    lines = [",".join(header)]
    lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _add_fl_args(sp):
    sp.add_argument("--clients", type=int, default=4)
    sp.add_argument("--rounds", type=int, default=20)
    sp.add_argument("--epochs", type=int, default=1)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--batch", type=int, default=32)
    sp.add_argument("--bw", type=float, default=10e6, help="network bandwidth, bps")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--classes", type=int, default=20)
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--hidden", type=int, default=64)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--samples-per-client", type=int, default=200)
    sp.add_argument("--real-clock", action="store_true",
                    help="really sleep for transfers instead of using virtual time")


def _fl_config(args, spec) -> flsim.FLConfig:
    task = flsim.SyntheticTask(
        seed=args.seed,
        num_classes=args.classes,
        input_dim=args.dim,
        noise_sigma=args.sigma,
        samples_per_client=args.samples_per_client,
    )
    return flsim.FLConfig(
        n_clients=args.clients,
        rounds=args.rounds,
        local_epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch,
        codec_spec=spec,
        rule=_rule(args),
        network=NetworkModel(args.bw),
        task=task,
        seed=args.seed,
        hidden=args.hidden,
        virtual_clock=not args.real_clock,
    )


def _cmd_fl_run(args) -> int:
    spec = None if args.codec == "none" else _codec_spec(args)
    report = flsim.run_experiment(_fl_config(args, spec))
    _emit(analysis.render_report(report, args.format), args.out)
    if args.out:
        print(json.dumps({
            "final_accuracy": report.final_accuracy,
            "mean_ratio": report.mean_ratio,
            "total_comm_seconds": report.total_comm_seconds,
        }, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    try:
        epsilons = [float(e) for e in args.eps.split(",") if e]
    except ValueError:
        raise _UsageError(f"--eps must be a comma-separated float list, got {args.eps!r}")
    if not epsilons:
        raise _UsageError("--eps lists no values")
    spec = _codec_spec(args)
    grid = flsim.sweep_epsilon(_fl_config(args, spec), epsilons)
    header = ["epsilon", "final_accuracy", "mean_ratio"]
    lines = [",".join(header)]
    for j, eps in enumerate(grid.epsilons):
        lines.append(",".join(repr(v) for v in
                              [eps, grid.accuracies[0][j], grid.records[0][j].ratio]))
    _emit("\n".join(lines) + "\n", args.out)
    if args.grid_out:
        with open(args.grid_out, "w", newline="") as fh:
            fh.write(analysis.grid_to_jsonl(grid))
    return 0


def _cmd_analyze_error(args) -> int:
    orig = load_checkpoint(args.original)
    recon = load_checkpoint(args.reconstructed)
    if orig.names() != recon.names():
        raise FedzipError("checkpoints hold different entries")

    def differing(a, b):
        return a.dtype == "f32" and a.data.tobytes() != b.data.tobytes()

    pairs = [(orig[n], recon[n]) for n in orig.names()]
    lines = []
    if args.per_entry:
        header = "entry,bin_left,bin_right,count"
        lines.append(header)
        for a, b in pairs:
            if not differing(a, b):
                continue
            dist = analysis.error_distribution(a.data, b.data, args.bins, args.eps_abs)
            for k in range(len(dist.counts)):
                lines.append(
                    f"{a.name},{dist.bin_edges[k]!r},{dist.bin_edges[k + 1]!r},{dist.counts[k]}"
                )
            lines.append(json.dumps({
                "entry": a.name,
                "mu": dist.laplace_mu,
                "b": dist.laplace_b,
                "goodness": dist.goodness,
                "eps_abs": dist.eps_abs,
            }, sort_keys=True))
    else:
        chunks = [
            (a.data.astype(np.float64), b.data.astype(np.float64))
            for a, b in pairs
            if differing(a, b)
        ]
        if chunks:
            o = np.concatenate([c[0] for c in chunks])
            r = np.concatenate([c[1] for c in chunks])
        else:
            o = r = np.zeros(0)
        dist = analysis.error_distribution(o, r, args.bins, args.eps_abs)
        lines.append("bin_left,bin_right,count")
        for k in range(len(dist.counts)):
            lines.append(f"{dist.bin_edges[k]!r},{dist.bin_edges[k + 1]!r},{dist.counts[k]}")
        lines.append(json.dumps({
            "mu": dist.laplace_mu,
            "b": dist.laplace_b,
            "goodness": dist.goodness,
            "eps_abs": dist.eps_abs,
        }, sort_keys=True))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_select(args) -> int:
    with open(args.grid) as fh:
        grid = analysis.grid_from_jsonl(fh.read())
    per_client = {}
    for spec in args.client_bw:
        try:
            cid, bw = spec.split("=")
            per_client[int(cid)] = float(bw)
        except ValueError:
            raise _UsageError(f"--client-bw must look like 0=5e6, got {spec!r}")
    model = NetworkModel(args.bw, per_client)
    if args.codec_only:
        chosen = netsim.select_codec(grid, model)
        print(json.dumps({
            "codec_id": chosen.codec_id,
            "epsilon": chosen.bound.epsilon,
        }, sort_keys=True))
    else:
        eps = netsim.select_epsilon(grid, model, args.slack)
        print(json.dumps({
            "codec_id": grid.candidates[0].codec_id,
            "epsilon": eps,
        }, sort_keys=True))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="fedzip", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("compress", help="checkpoint -> compressed update")
    sp.add_argument("input", help="input .fszt checkpoint")
    sp.add_argument("output", help="output .fszu update")
    _add_codec_args(sp)
    _add_rule_args(sp)
    sp.set_defaults(func=_cmd_compress)

    sp = sub.add_parser("decompress", help="compressed update -> checkpoint")
    sp.add_argument("input", help="input .fszu update")
    sp.add_argument("output", help="output .fszt checkpoint")
    sp.set_defaults(func=_cmd_decompress)

    sp = sub.add_parser("bench", help="time the pipeline on a checkpoint")
    sp.add_argument("input")
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    _add_codec_args(sp)
    _add_rule_args(sp)
    sp.set_defaults(func=_cmd_bench)

    sp = sub.add_parser("bench-net", help="break-even curve over bandwidths")
    sp.add_argument("--size-mb", type=float, required=True)
    sp.add_argument("--ratio", type=float, required=True)
    sp.add_argument("--tc", type=float, required=True, help="compress seconds")
    sp.add_argument("--td", type=float, required=True, help="decompress seconds")
    sp.add_argument("--bw-range", default="1e6:1e10")
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_bench_net)

    sp = sub.add_parser("fl-run", help="run the FedAvg simulation")
    sp.add_argument("--codec", default="pq", help="pq, cbt, or none")
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--rel-eb", type=float, default=1e-2)
    group.add_argument("--abs-eb", type=float, default=None)
    sp.add_argument("--block-size", type=int, default=256)
    sp.add_argument("--quant-radius", type=int, default=32768)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    _add_rule_args(sp)
    _add_fl_args(sp)
    sp.set_defaults(func=_cmd_fl_run)

    sp = sub.add_parser("sweep", help="epsilon sweep through the simulator")
    sp.add_argument("--eps", default="1e-1,1e-2,1e-3,1e-4")
    sp.add_argument("--out", default=None)
    sp.add_argument("--grid-out", default=None, help="also write the full grid (json-lines)")
    _add_codec_args(sp)
    _add_rule_args(sp)
    _add_fl_args(sp)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("analyze-error", help="reconstruction error histogram + fit")
    sp.add_argument("original", help="original .fszt")
    sp.add_argument("reconstructed", help="reconstructed .fszt")
    sp.add_argument("--bins", type=int, default=101)
    sp.add_argument("--eps-abs", type=float, default=None,
                    help="histogram half-range; observed max error if omitted")
    sp.add_argument("--per-entry", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_analyze_error)

    sp = sub.add_parser("select", help="pick codec or epsilon from a sweep grid")
    sp.add_argument("--grid", required=True, help="grid json-lines from sweep")
    sp.add_argument("--bw", type=float, required=True)
    sp.add_argument("--client-bw", action="append", default=[],
                    help="per-client override, id=bps (repeatable)")
    sp.add_argument("--slack", type=float, default=0.02)
    sp.add_argument("--codec-only", action="store_true")
    sp.set_defaults(func=_cmd_select)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        sys.stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return 1
    except (FedzipError, OSError, ValueError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
