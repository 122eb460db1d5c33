"""Command-line interface: ``run``, ``estimate`` and ``bench``."""
import argparse
import json
import sys
from pathlib import Path

from .autodiff.network import MAX_JACOBIAN_ENTRIES
from .bench import METHODS, bench_csv, parse_sizes, run_bench
from .config import ConfigError, load_config
from .data.idx import IDXError
from .experiment import build_network, build_problem, run_experiment
from .jacnorm import frob_sq, oracle_frob_sq, oracle_spectral, spectral_norms
from .training import DivergenceError, load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


def _err(msg):
    print(f"jacreg: error: {msg}", file=sys.stderr)


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(cfg.output.dir)

    def progress(rec):
        if not args.quiet:
            print(
                f"epoch {rec.epoch}: train {rec.train_loss:.4f} test {rec.test_loss:.4f} "
                f"psnr {rec.psnr:.2f} spec_ja {rec.spectral_JA_max:.3f}",
                file=sys.stderr,
            )

    try:
        run_experiment(cfg, out, callback=progress)
    except DivergenceError as exc:
        _err(f"training diverged: {exc}")
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "divergence.json").write_text(json.dumps(exc.record, indent=2, default=float) + "\n")
        except OSError:
            pass
        return EXIT_DIVERGED
    except (OSError, IDXError) as exc:
        _err(f"I/O failure: {exc}")
        return EXIT_IO
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_estimate(args):
    if args.n < 1:
        _err("--n must be >= 1")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config).resolved()
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    try:
        prob = build_problem(cfg)
    except (OSError, IDXError) as exc:
        _err(f"I/O failure: {exc}")
        return EXIT_IO
    A = prob.operator
    net = build_network(cfg, A.out_dim, A.in_dim)
    try:
        load_checkpoint(args.checkpoint, net)
    except OSError as exc:
        _err(f"cannot read checkpoint: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _err(exc)
        return EXIT_CONFIG
    Y = prob.Y_test if len(prob.Y_test) else prob.Y_train
    if not 0 <= args.index < len(Y):
        _err(f"--index {args.index} out of range for {len(Y)} samples")
        return EXIT_CONFIG
    y = Y[args.index]
    op = A if args.target == "JA" else None
    if args.method == "spectral":
        est = float(spectral_norms(net, y, op, args.n, args.seed)[0])
    else:
        est = frob_sq(net, y, op, args.n, args.seed)
    print(f"target: {args.target}")
    print(f"method: {args.method}")
    print(f"n: {args.n}")
    print(f"estimate: {est!r}")
    small_op = op is None or A.in_dim * A.out_dim <= MAX_JACOBIAN_ENTRIES
    if net.output_dim * net.input_dim <= MAX_JACOBIAN_ENTRIES and small_op:
        exact = oracle_spectral(net, y, op) if args.method == "spectral" else oracle_frob_sq(net, y, op)
        rel = abs(est - exact) / exact if exact != 0 else abs(est - exact)
        print(f"oracle: {exact!r}")
        print(f"rel_error: {rel!r}")
    else:
        print("oracle: skipped (too large to materialise)")
    return EXIT_OK


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_bench(args):
    try:
        sizes = parse_sizes(args.sizes)
        methods = [m for m in args.methods.split(",") if m.strip()]
        rows = run_bench(sizes, methods, _int_list(args.n), args.batch, args.repeats, args.seed)
    except ValueError as exc:
        _err(exc)
        return EXIT_CONFIG
    sys.stdout.write(bench_csv(rows))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jacreg", description="Jacobian-regularised reconstruction networks."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train from a JSON config and write metrics.csv")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: output.dir from the config)")
    run.add_argument("--quiet", action="store_true", help="no per-epoch progress on stderr")
    run.set_defaults(func=cmd_run)

    est = sub.add_parser("estimate", help="Jacobian norm of a saved checkpoint")
    est.add_argument("checkpoint")
    est.add_argument("config")
    est.add_argument("--target", choices=["J", "JA"], default="J")
    est.add_argument("--method", choices=["spectral", "frobenius"], default="spectral")
    est.add_argument("--n", type=int, default=3, help="power iterations or projections")
    est.add_argument("--index", type=int, default=0, help="test sample to evaluate at")
    est.add_argument("--seed", type=int, default=0)
    est.set_defaults(func=cmd_estimate)

    bench = sub.add_parser("bench", help="time/memory table as CSV on stdout")
    bench.add_argument("--sizes", default="784:784", help="comma-separated p:q pairs")
    bench.add_argument("--methods", default=",".join(METHODS))
    bench.add_argument("--n", default="1,2,3,4", help="iteration/projection counts")
    bench.add_argument("--batch", type=int, default=1)
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
