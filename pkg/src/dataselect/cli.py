"""Command-line entry point.

Subcommands::

    dataselect analyze DATASET... [--epochs 50] [--format json] > report.json
    dataselect rank report.json [--ground-truth truth.csv]
    dataselect rank --fixtures ranks.csv [--exclude-prefix bad-]
    dataselect select report.json --k 3 [--horizon 10 --delta-r eri]
    dataselect gen-synth out.json --sigma 0.3 --seed 1
    dataselect check-gradients [--points 10]

Exit codes: 0 success, 2 partial success (some datasets failed), 1 fatal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import PolicyConfig, check_gradients, init_policy
from .data import load_dataset, normalize_actions, save_dataset
from .ranking import RankingError
from .report import (
    AnalysisConfig,
    AnalysisReport,
    analyze_paths,
    load_ground_truth,
    load_rank_fixtures,
    render_analysis,
    render_rank_table,
    render_selection,
    select_datasets,
    table_from_fixtures,
    table_from_report,
)
from .synth import MEAN_FNS, REWARD_FNS, SynthConfig, generate

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("dataselect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for partial success here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("text", "json", "csv"), default=None)
    p.add_argument("--output", "-o", help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dataselect", description="Data-quality indicators for offline RL dataset selection.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("analyze", help="compute ERI, EAS and coverage for datasets")
    p.add_argument("paths", nargs="*", help="dataset manifests (.json) or CSV files")
    p.add_argument("--discount", type=float)
    p.add_argument("--return-floor", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma-reduction", choices=("mean", "max"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-coverage", action="store_true", default=None)
    p.add_argument("--save-policies", help="directory for trained policy containers")
    p.add_argument("--pin-timestamp", help="fixed value for the report's generated_at field")
    _add_output(p)

    p = sub.add_parser("rank", help="rank datasets by ERI, EAS and COI; validate against TRI")
    p.add_argument("report", nargs="?", help="JSON report written by 'analyze'")
    p.add_argument("--fixtures", help="CSV name,eri_rank,eas_rank[,tri_rank] (skips training)")
    p.add_argument("--ground-truth", help="CSV name,r_algo of algorithm returns")
    p.add_argument("--exclude-prefix", action="append", default=None,
                   help="add a re-ranked Spearman row without datasets with this name prefix")
    _add_output(p)

    p = sub.add_parser("select", help="pick datasets by COI rank")
    p.add_argument("report", nargs="?")
    p.add_argument("--fixtures")
    p.add_argument("--k", type=int, help="number of datasets to select")
    p.add_argument("--horizon", type=int, help="payoff horizon H for the meta return")
    p.add_argument("--delta-r", help="assumed improvement per step: a number or 'eri'")
    p.add_argument("--fixed-cost", type=float, help="override the per-dataset fixed cost F")
    p.add_argument("--discount", type=float)
    _add_output(p)

    p = sub.add_parser("gen-synth", help="write a synthetic dataset with known stochasticity")
    p.add_argument("output_path", help="manifest path (.json) or .csv")
    p.add_argument("--state-dim", type=int)
    p.add_argument("--action-dim", type=int)
    p.add_argument("--n-trajectories", type=int)
    p.add_argument("--trajectory-length", type=int)
    p.add_argument("--mean-fn", choices=MEAN_FNS)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sigma-mix", type=float)
    p.add_argument("--mix-fraction", type=float)
    p.add_argument("--reward-fn", choices=REWARD_FNS)
    p.add_argument("--discount", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--name")

    p = sub.add_parser("check-gradients", help="finite-difference audit of the NLL gradient")
    p.add_argument("--dataset", help="take the batch from this dataset instead of random data")
    p.add_argument("--points", type=int, help="number of random parameter points")
    p.add_argument("--batch", type=int, help="transitions per batch")
    p.add_argument("--state-dim", type=int)
    p.add_argument("--action-dim", type=int)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--step", type=float, help="finite-difference step h")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int)
    return parser


DEFAULTS = {
    "format": "text",
    "epochs": 50,
    "batch_size": 256,
    "learning_rate": 1e-3,
    "hidden": [100, 100],
    "seed": 0,
    "sigma_reduction": "mean",
    "jobs": 1,
    "no_coverage": False,
    "state_dim": 3,
    "action_dim": 2,
    "n_trajectories": 200,
    "trajectory_length": 100,
    "mean_fn": "linear",
    "sigma": 0.3,
    "mix_fraction": 0.5,
    "reward_fn": "action-quadratic",
    "discount_synth": 1.0,
    "points": 10,
    "batch": 5,
    "step": 1e-4,
    "tolerance": 1e-3,
    "exclude_prefix": [],
}


def _resolve(args: argparse.Namespace, file_cfg: dict) -> argparse.Namespace:
    """Fill unset flags from the config file, then from built-in defaults."""
    for key, value in vars(args).items():
        if value is not None:
            continue
        if key in file_cfg:
            setattr(args, key, file_cfg[key])
        elif key in DEFAULTS:
            setattr(args, key, DEFAULTS[key])
    return args


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    if not args.paths:
        raise UsageError("analyze needs at least one dataset path")
    policy = PolicyConfig(
        hidden=tuple(args.hidden),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        sigma_reduction=args.sigma_reduction,
    )
    config = AnalysisConfig(
        policy=policy,
        discount=args.discount,
        return_floor=args.return_floor,
        coverage=not args.no_coverage,
        save_policies=args.save_policies,
    )
    report = analyze_paths(args.paths, config, jobs=args.jobs, pinned_timestamp=args.pin_timestamp)
    _emit(render_analysis(report, args.format), args.output)
    for err in report.errors:
        log.error("%s: %s", err["path"], err["error"])
    if report.status == "failed":
        return EXIT_FATAL
    return EXIT_PARTIAL if report.status == "partial" else EXIT_OK


def _load_table(args):
    if args.fixtures and args.report:
        raise UsageError("give either a report or --fixtures, not both")
    if args.fixtures:
        fx = load_rank_fixtures(args.fixtures)
        if getattr(args, "ground_truth", None):
            raise UsageError("--ground-truth applies to analysis reports; fixtures carry tri_rank directly")
        return table_from_fixtures(fx, getattr(args, "exclude_prefix", []) or []), None
    if not args.report:
        raise UsageError("a report path or --fixtures is required")
    report = AnalysisReport.load(args.report)
    truth = load_ground_truth(args.ground_truth) if getattr(args, "ground_truth", None) else None
    return table_from_report(report, truth, getattr(args, "exclude_prefix", []) or [])


def cmd_rank(args) -> int:
    table, _ = _load_table(args)
    _emit(render_rank_table(table, args.format), args.output)
    return EXIT_OK


def cmd_select(args) -> int:
    table, records = _load_table(args)
    delta_r = args.delta_r
    if delta_r is not None and delta_r != "eri":
        delta_r = float(delta_r)
    sel = select_datasets(
        table,
        k=args.k,
        records=records,
        horizon=args.horizon,
        delta_r=delta_r,
        fixed_cost=args.fixed_cost,
        discount=args.discount,
    )
    _emit(render_selection(sel, args.format), args.output)
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    config = SynthConfig(
        state_dim=args.state_dim,
        action_dim=args.action_dim,
        n_trajectories=args.n_trajectories,
        trajectory_length=args.trajectory_length,
        mean_fn=args.mean_fn,
        sigma_true=args.sigma,
        sigma_mix=args.sigma_mix,
        mix_fraction=args.mix_fraction,
        reward_fn=args.reward_fn,
        discount=args.discount if args.discount is not None else DEFAULTS["discount_synth"],
        seed=args.seed,
        name=args.name,
    )
    dataset, truth = generate(config)
    path = save_dataset(dataset, args.output_path)
    summary = {
        "path": str(path),
        "name": dataset.name,
        "n_transitions": dataset.n_transitions,
        "sigma_true": truth.sigma_true,
        "sigma_mix": truth.sigma_mix,
        "empirical_noise_std": truth.empirical_noise_std,
        "expected_return": truth.expected_return,
    }
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_check_gradients(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.dataset:
        d = load_dataset(args.dataset)
        idx = rng.choice(d.n_transitions, size=min(args.batch, d.n_transitions), replace=False)
        states = d.states[idx].astype(np.float64)
        actions = normalize_actions(d).values[idx]
        state_dim, action_dim = d.state_dim, d.action_dim
    else:
        state_dim, action_dim = args.state_dim, args.action_dim
        states = rng.normal(size=(args.batch, state_dim))
        actions = np.tanh(rng.normal(size=(args.batch, action_dim)))
    config = PolicyConfig(hidden=tuple(args.hidden), seed=args.seed)
    worst = 0.0
    for point in range(args.points):
        policy = init_policy(state_dim, action_dim, config, np.random.default_rng([args.seed, point]))
        # move the log-std head off its constant initial bias so its gradient is exercised
        policy.params["b_ls"] = np.random.default_rng([args.seed, point, 1]).uniform(-3, 1, size=action_dim)
        result = check_gradients(policy, states, actions, h=args.step)
        worst = max(worst, result.max_rel_error)
        print(
            f"point {point}: max relative error {result.max_rel_error:.3e} over {result.n_coords} coordinates "
            f"({result.n_kink_skipped} straddling a ReLU kink skipped)"
        )
    ok = worst < args.tolerance
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_FATAL


COMMANDS = {
    "analyze": cmd_analyze,
    "rank": cmd_rank,
    "select": cmd_select,
    "gen-synth": cmd_gen_synth,
    "check-gradients": cmd_check_gradients,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_FATAL
    file_cfg = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    _resolve(args, file_cfg)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dataselect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (RankingError, ValueError, OSError) as exc:
        print(f"dataselect {args.command}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
