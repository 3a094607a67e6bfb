"""CLI entry point for ncsvm."""

import argparse
import asyncio
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from ncsvm.admm import SolverConfig, fit, write_report_json, write_trace_csv
from ncsvm.bench import (
    default_grid,
    format_profile_table,
    format_table,
    parse_grid,
    profile_w_update,
    run_grid,
    write_bench_csv,
    write_profile_csv,
)
from ncsvm.config import NCSVMConfig
from ncsvm.data import SplitSpec, load_libsvm, parse_libsvm_features, stratified_split
from ncsvm.model import LinearModel
from ncsvm.penalty import PenaltyConfig, PenaltyKind, default_theta

# Failures reported as a one-line message instead of a traceback
CLI_ERRORS = (ValidationError, ValueError, RuntimeError, OSError)


def configure_logging(config: NCSVMConfig, verbose: bool = False) -> None:
    """Send log records to stderr; --verbose lowers the threshold to INFO."""
    level = logging.INFO if verbose else getattr(logging, config.log_level.upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _pick(value, default):
    return default if value is None else value


def solver_config(args: argparse.Namespace, config: NCSVMConfig) -> SolverConfig:
    """Merge command-line flags over settings into a validated SolverConfig."""
    kind = PenaltyKind(args.penalty)
    penalty = PenaltyConfig(
        kind=kind,
        lam=_pick(args.lam, config.lam),
        theta=_pick(args.theta, default_theta(kind)),
    )
    return SolverConfig(
        penalty=penalty,
        rho1=_pick(args.rho1, config.rho1),
        rho2=_pick(args.rho2, config.rho2),
        beta=_pick(args.beta, config.beta),
        epsilon=_pick(args.epsilon, config.epsilon),
        max_iters=_pick(args.max_iters, config.max_iters),
        seed=_pick(args.seed, config.seed),
    )


def _fit_options(config: NCSVMConfig) -> dict:
    return {
        "max_dense_dim": config.max_dense_dim,
        "dense_density": config.dense_gram_density,
        "jitter_scale": config.jitter_scale,
        "zero_tolerance": config.zero_tolerance,
    }


def _out_dir(args: argparse.Namespace, config: NCSVMConfig) -> Path:
    out_dir = Path(_pick(args.out_dir, config.out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def cmd_train(args: argparse.Namespace, config: NCSVMConfig) -> int:
    """Fit a model and write model.json, trace.csv and report.json."""
    try:
        cfg = solver_config(args, config)
        train = load_libsvm(args.data)
        test = load_libsvm(args.test_data, n_features=train.n_features) if args.test_data else None

        report = fit(train, cfg, eval_data=test, **_fit_options(config))

        out_dir = _out_dir(args, config)
        model_path = Path(args.model) if args.model else out_dir / "model.json"
        report.model.save(model_path)
        write_trace_csv(report, out_dir / "trace.csv")
        write_report_json(report, out_dir / "report.json")

        sparsity = report.model.coefficient_sparsity()
        print(
            f"✅ Trained {cfg.penalty.kind.value} model in {report.iterations} iterations "
            f"({report.terminated_by.value})"
        )
        print(f"Pre-computation: {report.precompute_seconds:.4f}s, iterations: {report.iterate_seconds:.4f}s")
        print(f"Train accuracy: {report.model.accuracy(train):.4f}")
        if test is not None:
            print(f"Test accuracy: {report.model.accuracy(test):.4f}")
        print(f"Zero coefficients: {sparsity.zero_count}/{sparsity.total}")
        print(f"Model written to: {model_path}")
        return 0

    except CLI_ERRORS as e:
        print(f"❌ Training failed: {e}", file=sys.stderr)
        return 1


def cmd_predict(args: argparse.Namespace, config: NCSVMConfig) -> int:
    """Write one +1/-1 prediction per line; print accuracy when labels are present."""
    try:
        if not args.model:
            raise ValueError("--model is required for predict")
        model = LinearModel.load(Path(args.model), zero_tolerance=config.zero_tolerance)
        with open(args.data, encoding="utf-8") as stream:
            features, labels = parse_libsvm_features(stream)

        predictions = model.predict(features)
        out_dir = _out_dir(args, config)
        output = out_dir / "predictions.txt"
        output.write_text(
            "".join("+1\n" if p > 0 else "-1\n" for p in predictions), encoding="utf-8"
        )

        print(f"✅ Wrote {len(predictions)} predictions to {output}")
        if labels is not None:
            print(f"Accuracy: {float((predictions == labels).mean()) if len(labels) else 0.0:.4f}")
        return 0

    except CLI_ERRORS as e:
        print(f"❌ Prediction failed: {e}", file=sys.stderr)
        return 1


def cmd_bench(args: argparse.Namespace, config: NCSVMConfig) -> int:
    """Run the (rho1, rho2) grid and write bench.csv."""
    try:
        base = solver_config(args, config)
        grid = parse_grid(args.grid) if args.grid else default_grid(config.grid_values)
        data = load_libsvm(args.data)
        if args.test_data:
            train, test = data, load_libsvm(args.test_data, n_features=data.n_features)
        else:
            split = SplitSpec(
                test_fraction=_pick(args.split_fraction, config.split_fraction),
                seed=base.seed,
            )
            train, test = stratified_split(data, split)

        result = asyncio.run(
            run_grid(train, test, base, grid, workers=config.bench_workers, **_fit_options(config))
        )

        out_dir = _out_dir(args, config)
        write_bench_csv(result, out_dir / "bench.csv")
        print(format_table(result))
        best = result.best
        if best is None:
            print("❌ Every grid point diverged", file=sys.stderr)
            return 1
        print(
            f"✅ Best: rho1={best.rho1:g} rho2={best.rho2:g}, test accuracy "
            f"{best.test_accuracy:.4f} in {best.iterations} iterations"
        )
        print(f"Results written to: {out_dir / 'bench.csv'}")
        return 0

    except CLI_ERRORS as e:
        print(f"❌ Benchmark failed: {e}", file=sys.stderr)
        return 1


def cmd_profile(args: argparse.Namespace, config: NCSVMConfig) -> int:
    """Compare the cached wide-data w-update with the dense-inverse update."""
    try:
        dims = [int(d) for d in args.dims.split(",") if d.strip()]
        rows = profile_w_update(
            n=args.n,
            dims=dims,
            iterations=args.iterations,
            seed=_pick(args.seed, config.seed),
        )
        out_dir = _out_dir(args, config)
        write_profile_csv(rows, out_dir / "profile.csv")
        print(format_profile_table(rows))
        print(f"✅ Profile written to: {out_dir / 'profile.csv'}")
        return 0

    except CLI_ERRORS as e:
        print(f"❌ Profiling failed: {e}", file=sys.stderr)
        return 1


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="LIBSVM training data")
    parser.add_argument("--test-data", help="LIBSVM test data")
    parser.add_argument(
        "--penalty", choices=[k.value for k in PenaltyKind], default=PenaltyKind.SCAD.value
    )
    parser.add_argument("--lambda", dest="lam", type=float, help="Penalty lambda (default 2^-6)")
    parser.add_argument("--theta", type=float, help="Penalty theta (default depends on penalty)")
    parser.add_argument("--rho1", type=float)
    parser.add_argument("--rho2", type=float)
    parser.add_argument("--beta", type=float, help="Proximal z-update weight (default 0)")
    parser.add_argument("--epsilon", type=float, help="Relative objective change tolerance")
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--model", help="Model JSON path (default OUT_DIR/model.json)")
    parser.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncsvm",
        description="ncsvm - ADMM training of nonconvex penalized linear SVMs",
    )
    parser.add_argument("--verbose", action="store_true", help="Log progress to stderr")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train = subparsers.add_parser("train", help="Fit a model on LIBSVM data")
    _add_solver_flags(train)

    predict = subparsers.add_parser("predict", help="Predict labels with a saved model")
    predict.add_argument("--data", required=True, help="LIBSVM data, labeled or not")
    predict.add_argument("--model", help="Model JSON written by train")
    predict.add_argument("--out-dir", dest="out_dir")

    bench = subparsers.add_parser("bench", help="Grid search over (rho1, rho2)")
    _add_solver_flags(bench)
    bench.add_argument("--split-fraction", dest="split_fraction", type=float)
    bench.add_argument("--grid", help='Pairs as "r1:r2,r1:r2,..." (default: full settings grid)')

    profile = subparsers.add_parser("profile", help="Time the w-update paths on dense data")
    profile.add_argument("--n", type=int, default=200, help="Number of samples")
    profile.add_argument("--dims", default="1000,2000,4000", help="Comma-separated feature counts")
    profile.add_argument("--iterations", type=int, default=20)
    profile.add_argument("--seed", type=int)
    profile.add_argument("--out-dir", dest="out_dir")

    return parser


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "profile": cmd_profile,
}


def main(argv: list[str] | None = None):
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        config = NCSVMConfig()
    except ValidationError as e:
        print(f"❌ Invalid NCSVM_ settings: {e}", file=sys.stderr)
        sys.exit(1)

    configure_logging(config, args.verbose)
    sys.exit(COMMANDS[args.command](args, config))


if __name__ == "__main__":
    main()
