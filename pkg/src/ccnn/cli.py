"""Command line: ``ccnn {trace,verify,train,complexity}``.

Exit status: 0 success, 1 verification failure, 2 usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis, netpbm, trace, verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("CCNN_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CCNN_SEED must be an integer, got {raw!r}") from None


def build_sequence(args) -> trace.SamplerSequence:
    if args.seq_file:
        try:
            seq = trace.read_sequence(args.seq_file)
        except trace.SequenceParseError as exc:
            raise UsageError(f"{args.seq_file}: {exc}") from None
        return seq[: args.steps] if args.steps is not None else seq
    steps = 0 if args.steps is None else args.steps
    if args.seq == "fixed":
        return trace.uniform_sequence(args.k, steps)
    if args.seq == "lattice":
        if args.k != 2:
            raise UsageError("the lattice sequence is defined for k=2 only")
        if steps == 0:
            return trace.SamplerSequence(())
        try:
            return trace.lattice_sequence(steps)
        except NotImplementedError as exc:
            raise UsageError(str(exc)) from None
    return trace.random_sequence(args.k, steps, args.seed)


def cmd_trace(args) -> int:
    if args.size < 1:
        raise UsageError("--size must be positive")
    if args.steps is not None and args.steps < 0:
        raise UsageError("--steps must be non-negative")
    seq = build_sequence(args)
    try:
        state = trace.apply_sequence(trace.TraceState.fresh(args.size, k=args.k), seq)
    except trace.TraceError as exc:
        raise UsageError(str(exc)) from None
    report = trace.coverage_stats(state)
    stats = report.as_dict()
    stats["submaps"] = list(state.shape)
    out = Path(args.out)
    netpbm.write(out, netpbm.render_mask(trace.position_mask(state)))
    if args.color:
        netpbm.write(out.with_suffix(".ppm"), netpbm.render_labels(trace.submap_index_image(state)))
    stats_path = Path(args.stats) if args.stats else out.with_suffix(".json")
    stats_path.write_text(json.dumps(stats) + "\n")
    if args.verbose:
        print(json.dumps(stats))
    else:
        print(json.dumps({k: stats[k] for k in ("samples", "rows_covered", "cols_covered", "block_discrepancy", "submaps")}))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run(args.suite, seed=args.seed)
    passed = all(r["passed"] for r in results)
    print(json.dumps({"passed": passed, "results": results}, indent=2 if args.verbose else None))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_train(args) -> int:
    from . import train

    def log(record):
        if args.verbose:
            print(json.dumps(record), file=sys.stderr)

    results = train.compare(epochs=args.epochs, seed=args.seed, n=args.samples, lr=args.lr, nesterov=args.nesterov, log=log)
    summary = {
        "parameters": results["parameters"],
        "ccnn_final_map": results["ccnn_final_map"],
        "final": {name: results[name][-1] for name in ("cnn", "ccnn")},
        "test_accuracy": {name: results[f"{name}_test_accuracy"] for name in ("cnn", "ccnn")},
    }
    diverged = any(r.get("diverged") for name in ("cnn", "ccnn") for r in results[name])
    summary["passed"] = results["parameters"]["cnn"] == results["parameters"]["ccnn"] and not diverged
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


_TABLE_TITLES = {
    "double": "channels doubled after each subsampling step",
    "constant": "channels constant",
    "sqrt2": "channels multiplied by sqrt(2) after each subsampling step",
}


def complexity_tables(max_steps: int) -> str:
    lines = []
    for rule in ("double", "constant", "sqrt2"):
        schemes = analysis.SCHEMES if rule != "sqrt2" else ("checkered",)
        lines.append(f"# {_TABLE_TITLES[rule]}")
        lines.append(f"{'scheme':<12}{'s':>3}  {'memory':>10}{'compute':>10}  {'measured':>20}")
        for scheme in schemes:
            measured = analysis.measured_profile(scheme, rule, max_steps)
            for s in range(max_steps + 1):
                prof = analysis.complexity_profile(scheme, rule, s)
                if rule == "sqrt2" and s % 2:
                    meas = "-"
                else:
                    meas = f"{measured[s][0]} {measured[s][1]}"
                lines.append(f"{scheme:<12}{s:>3}  {str(prof.memory_factor):>10}{str(prof.compute_factor):>10}  {meas:>20}")
        lines.append("")
    return "\n".join(lines)


def cmd_complexity(args) -> int:
    if args.max_steps < 0:
        raise UsageError("--max-steps must be non-negative")
    print(complexity_tables(args.max_steps), end="")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="render a sampling pattern")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--steps", type=int, default=None)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--seq", choices=("fixed", "lattice", "random"), default="fixed")
    src.add_argument("--seq-file", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, choices=(2, 3), default=2)
    p.add_argument("--out", default="trace.pgm")
    p.add_argument("--stats", default=None, help="stats JSON path (default: OUT with .json suffix)")
    p.add_argument("--color", action="store_true", help="also write a PPM coloured by submap")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train the toy network as CNN and CCNN")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--nesterov", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("complexity", help="print the complexity tables")
    p.add_argument("--max-steps", type=int, default=6)
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"ccnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ccnn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
