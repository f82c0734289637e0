"""Command-line surface. Every subcommand emits CSV (stdout or --out).

Subcommands: classify, sweep, pareto, bench, hist.
Exit statuses: 0 success, 1 usage, 2 data/parse, 3 internal.
"""

import argparse
import csv
import sys
from time import perf_counter

import numpy as np

from . import bench as bench_mod
from .errors import DataError, EngineError, UsageError
from .exits import decide
from .formats import load_clip, load_model
from .head import BINARY, MULTICLASS
from .layers import offline_forward
from .stream import StreamState, naive_forward_per_frame
from .zoo import benchmark_network, random_clip

TRACE_HEADER = ["step", "class", "probability"]
SWEEP_HEADER = ["lambda", "seed", "error_rate", "net", "mean_decisive_frame"]
PARETO_HEADER = ["error_rate", "net"]
BENCH_HEADER = ["frame", "chunk", "stream_ms", "naive_ms"]
HIST_HEADER = ["decisive_frame", "count"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_csv(path, header, rows):
    def dump(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    if path is None or path == "-":
        dump(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            dump(fh)


def _parse_float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse float list {text!r}") from exc


def _dataset_from_args(args):
    cfg = bench_mod.SyntheticDatasetConfig(
        dim=args.dim,
        classes=args.classes,
        steps=args.steps,
        noise=args.noise,
        train_count=args.train,
        test_count=args.test,
        seed=args.seed,
        mode=args.data_mode,
    )
    return bench_mod.make_synthetic_dataset(cfg)


def _add_dataset_flags(p):
    p.add_argument("--dim", type=int, default=8, help="feature dimension")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--steps", type=int, default=16, help="sequence length")
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--train", type=int, default=160, help="training sample count")
    p.add_argument("--test", type=int, default=160, help="test sample count")
    p.add_argument("--data-mode", choices=[BINARY, MULTICLASS], default=BINARY)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=1.0, help="learning rate")


def cmd_classify(args):
    net = load_model(args.spec, args.weights)
    clip = load_clip(args.clip)
    if args.mode == "offline":
        trace = offline_forward(clip, net)
        report = decide(trace, args.tau)
    else:
        state = StreamState(net, tau=args.tau, retain_trace=True)
        for start in range(0, clip.shape[1], args.chunk):
            state.push(clip[:, start : start + args.chunk])
        report = state.report()
        trace = state.trace
    frame = "-" if report.decisive_frame is None else report.decisive_frame
    print(f"decision: {report.decision}")
    print(f"decisive_frame: {frame}")
    print(f"p: {report.aggregate_prob:.6f}")
    print(f"exit_time: {report.exit_time:.6f}")
    print(f"net: {report.net:.6f}")
    if args.out:
        rows = []
        if trace.mode == BINARY:
            for step, p in enumerate(trace.probs):
                rows.append([step, 1, f"{p:.9f}"])
        else:
            for step in range(trace.steps):
                for cls in range(trace.classes):
                    rows.append([step, cls, f"{trace.probs[step, cls]:.9f}"])
        _write_csv(args.out, TRACE_HEADER, rows)
    return 0


def cmd_sweep(args):
    dataset = _dataset_from_args(args)
    lams = _parse_float_list(args.lam)
    for lam in lams:
        if not 0.0 <= lam <= 1.0:
            raise UsageError(f"lambda values must lie in [0, 1], got {lam}")
    seeds = list(range(args.seed, args.seed + args.seeds))
    points = bench_mod.sweep_lambda(dataset, lams, seeds, epochs=args.epochs, learning_rate=args.lr)
    rows = [
        [p.lam, p.seed, f"{p.error_rate:.4f}", f"{p.mean_net:.6f}", f"{p.mean_decisive_frame:.4f}"]
        for p in points
    ]
    _write_csv(args.out, SWEEP_HEADER, rows)
    return 0


def cmd_pareto(args):
    with open(args.infile, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"error_rate", "net"} <= set(reader.fieldnames):
            raise DataError(f"{args.infile}: need columns error_rate and net")
        points = [(float(row["error_rate"]), float(row["net"])) for row in reader]
    if not points:
        raise UsageError(f"{args.infile}: no data rows")
    front = bench_mod.pareto_front(points)
    _write_csv(args.out, PARETO_HEADER, [[f"{e:.6f}", f"{n:.6f}"] for e, n in front])
    return 0


def cmd_bench(args):
    if args.spec and args.weights:
        net = load_model(args.spec, args.weights)
    else:
        net = benchmark_network(seed=args.seed)
    rng = np.random.default_rng(args.seed)
    clip = random_clip(rng, net, args.frames)
    rows = []
    naive_ms = {}
    _, naive_times = naive_forward_per_frame(clip, net)
    for frame, dt in enumerate(naive_times):
        naive_ms[frame] = dt * 1e3
    for chunk in (1, 4, 8):
        state = StreamState(net, retain_trace=False)
        for start in range(0, args.frames, chunk):
            t0 = perf_counter()
            state.push(clip[:, start : start + chunk])
            elapsed = (perf_counter() - t0) * 1e3
            frame = min(start + chunk, args.frames) - 1
            rows.append([frame, chunk, f"{elapsed:.4f}", f"{naive_ms[frame]:.4f}"])
    _write_csv(args.out, BENCH_HEADER, rows)
    return 0


def cmd_hist(args):
    dataset = _dataset_from_args(args)
    _, point = bench_mod.train_head(
        dataset, args.lam, args.epochs, args.lr, args.seed, tau=args.tau
    )
    rows = [[frame, count] for frame, count in enumerate(point.histogram) if count > 0]
    _write_csv(args.out, HIST_HEADER, rows)
    return 0


def build_parser():
    parser = _Parser(prog="exitstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a clip file with a saved model")
    p.add_argument("--spec", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--mode", choices=["offline", "stream"], default="offline")
    p.add_argument("--chunk", type=int, default=1, help="frames per push in stream mode")
    p.add_argument("--out", help="per-step trace CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="train heads across lambda values and seeds")
    p.add_argument("--lambda", dest="lam", default="0.1,1.0", help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed / dataset seed")
    _add_dataset_flags(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pareto", help="filter a sweep CSV to its Pareto front")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("bench", help="per-frame latency of streaming vs naive re-evaluation")
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec")
    p.add_argument("--weights")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("hist", help="decisive-frame histogram over a synthetic dataset")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_dataset_flags(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_hist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal faults
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
