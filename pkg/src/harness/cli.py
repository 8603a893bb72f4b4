# src/harness/cli.py
"""Command-line entry point: `python main.py <subcommand> [options]`."""

import argparse
import os
import sys
from contextlib import nullcontext, redirect_stdout
from dataclasses import replace
from typing import List, Optional

from src.channel.ofdm_channel import dump_cfr_magnitude, realize_channel
from src.harness.config import SPLITS, ExperimentConfig
from src.harness.dataset_store import generate_dataset, write_dataset
from src.harness.evaluation import (
    checkpoint_path,
    emit_complexity_table,
    run_experiment,
    sweep_n_ici,
)
from src.icinet.model import save_icinet
from src.icinet.predn import PreDnnConfig
from src.icinet.training import train_end_to_end, train_sequential
from src.io_utils import atomic_write_text
from src.settings import output_dir

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config (missing fields follow the preset)")
    parser.add_argument("--seed", type=int, default=None, help="base seed for every random stream")
    parser.add_argument("--preset", choices=("desk", "full"), default=None)
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icinet", description="ICI-aware OFDM channel estimation lab")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    p = commands.add_parser("generate-dataset", help="write one split as an ICIN file")
    _common(p)
    p.add_argument("--split", choices=SPLITS, required=True)
    p.add_argument("--out", help="output path (default: <output dir>/<split>.icin)")

    p = commands.add_parser("train", help="train ICINet and write an ICIW checkpoint")
    _common(p)
    p.add_argument("--mode", choices=("sequential", "e2e"), default="sequential")
    p.add_argument("--out-dir", help="checkpoint directory (default: output dir)")

    p = commands.add_parser("evaluate", help="MSE-vs-SNR report for every estimator")
    _common(p)
    p.add_argument("--out", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="report path (default: stdout)")
    p.add_argument("--checkpoint-dir", help="reuse/store trained checkpoints here")

    p = commands.add_parser("sweep-nici", help="PreDNN validation MSE per N_ICI")
    _common(p)
    p.add_argument("--values", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = commands.add_parser("count-complexity", help="MACs and parameters per network")
    _common(p)
    p.add_argument("--csv", action="store_true")

    p = commands.add_parser("dump-cfr", help="|H^(t)| of one test-channel realization as CSV")
    _common(p)
    p.add_argument("--symbol", type=int, default=0)
    p.add_argument("--doppler", type=float, default=None, help="max Doppler in Hz (default: test channel)")
    p.add_argument("--out", help="CSV path (default: <output dir>/cfr.csv)")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_json(args.config, seed=args.seed)
        if args.preset and args.preset != config.preset:
            raise UsageError(f"--preset {args.preset} conflicts with the config file preset {config.preset}")
        return config
    return ExperimentConfig.preset_named(args.preset or "desk", seed=args.seed or 0)


def _emit(text: str, path: Optional[str], verbose: bool) -> None:
    if path:
        atomic_write_text(path, text)
        if verbose:
            print(f"💾 Saved {path}")
    else:
        sys.stdout.write(text)


# ---------- subcommands ----------

def cmd_generate_dataset(args, config: ExperimentConfig, verbose: bool) -> None:
    dataset = generate_dataset(config, args.split, verbose=verbose)
    write_dataset(args.out or os.path.join(output_dir(), f"{args.split}.icin"), dataset, verbose)


def cmd_train(args, config: ExperimentConfig, verbose: bool) -> None:
    train_set = generate_dataset(config, "train", verbose=verbose).training_set()
    val_set = generate_dataset(config, "val", verbose=verbose).training_set()
    trainer = train_sequential if args.mode == "sequential" else train_end_to_end
    result = trainer(train_set, val_set, config.training, PreDnnConfig(n_ici=config.n_ici), verbose=verbose)

    kind = "icinet_seq" if args.mode == "sequential" else "icinet_e2e"
    path = checkpoint_path(args.out_dir or output_dir(), kind, config)
    save_icinet(path, result.model)
    result.save_traces(path[: -len(".iciw")] + ".traces.json")


def _progress_stream(report_path: Optional[str]):
    """Progress goes to stderr while the report itself is written to stdout."""
    return nullcontext() if report_path else redirect_stdout(sys.stderr)


def cmd_evaluate(args, config: ExperimentConfig, verbose: bool) -> None:
    with _progress_stream(args.output):
        report = run_experiment(config, checkpoint_dir=args.checkpoint_dir, verbose=verbose)
    _emit(report.to_csv() if args.out == "csv" else report.to_json(), args.output, verbose)


def cmd_sweep_nici(args, config: ExperimentConfig, verbose: bool) -> None:
    if any(v < 0 for v in args.values):
        raise UsageError(f"N_ICI values must be >= 0, got {args.values}")
    with _progress_stream(args.output):
        result = sweep_n_ici(args.values, config, verbose=verbose)
    _emit(result.to_csv(), args.output, verbose)


def cmd_count_complexity(args, config: ExperimentConfig, verbose: bool) -> None:
    table = emit_complexity_table(system=config.system)
    sys.stdout.write(table.to_csv() if args.csv else table.to_text())


def cmd_dump_cfr(args, config: ExperimentConfig, verbose: bool) -> None:
    if not 0 <= args.symbol < config.system.T:
        raise UsageError(f"--symbol must be in 0..{config.system.T - 1}, got {args.symbol}")
    doppler = config.test_channel.doppler_hz if args.doppler is None else args.doppler
    fading = replace(config.eval_fading(), doppler_max_hz=doppler, seed=config.derive_seed("test"))
    realization = realize_channel(config.system, config.test_profile(), fading)
    path = args.out or os.path.join(output_dir(), "cfr.csv")
    dump_cfr_magnitude(realization, args.symbol, config.system, path)
    if verbose:
        print(f"💾 Saved |H^({args.symbol})| ({config.system.K}×{config.system.K}) to {path}")


COMMANDS = {
    "generate-dataset": cmd_generate_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep-nici": cmd_sweep_nici,
    "count-complexity": cmd_count_complexity,
    "dump-cfr": cmd_dump_cfr,
}


def cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args)
        COMMANDS[args.command](args, config, verbose=not args.quiet)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
