"""Command-line entry points.

Subcommands:
  run      execute one scenario and write its report directory
  compare  run a scenario with the supervisor armed and disarmed
  train    fit the command classifier on the synthetic fusion corpus
  anova    one-way ANOVA over sample groups from a JSON file
  serve    run a scenario paced in real time with live clients

Exit codes: 0 success, 1 invalid input, 2 usage error, 3 episode did not
complete. Verbosity is controlled by the COACT_LOG_LEVEL environment
variable (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import mlp, report
from .bridge import BridgeServer
from .engine import compare_runs, run_episode
from .fusion import N_CLASSES, SLOTS, build_dataset, split_dataset
from .scenario import ScenarioError, load_scenario
from .stats import GroupSummary, one_way_anova, summarize

log = logging.getLogger("coact.cli")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_INCOMPLETE = 3


def _load_classifier(path: str | None):
    if path is None:
        return None
    model = mlp.load_model(path)

    def classify(values: np.ndarray) -> int:
        return int(model.predict(np.asarray(values, dtype=float)[None, :])[0])

    return classify


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    classifier = _load_classifier(args.model)
    result = run_episode(scenario, mode=args.mode, classifier=classifier)
    payload = report.render_run_report(
        result, scenario.iso.clearance, args.out, scenario.name
    )
    print(f"scenario: {scenario.name} mode: {result.mode}")
    print(
        f"execution {result.execution_time:.1f} s, downtime {result.downtime:.1f} s,"
        f" min separation {result.min_separation:.3f} m,"
        f" warnings {len(result.warning_times)}"
    )
    print(f"report written to {Path(args.out) / 'report.json'}")
    if not result.completed:
        print("episode did not complete before the timeout", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    classifier = _load_classifier(args.model)
    comparison = compare_runs(scenario, classifier=classifier)
    report.render_comparison_report(
        comparison, scenario.iso.clearance, args.out, scenario.name
    )
    print(f"scenario: {scenario.name}")
    print(
        f"baseline   execution {comparison.baseline.execution_time:.1f} s,"
        f" downtime {comparison.baseline.downtime:.1f} s"
    )
    print(
        f"predictive execution {comparison.predictive.execution_time:.1f} s,"
        f" downtime {comparison.predictive.downtime:.1f} s"
    )
    print(
        f"execution improved {100 * comparison.execution_improvement:.1f}%,"
        f" downtime reduced {100 * comparison.downtime_reduction:.1f}%"
    )
    print(f"report written to {Path(args.out) / 'report.json'}")
    if not (comparison.predictive.completed and comparison.baseline.completed):
        print("at least one episode did not complete", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    X, y = build_dataset(copies=args.copies, seed=args.seed)
    X_train, y_train, X_val, y_val = split_dataset(X, y)
    model = mlp.Mlp.init([SLOTS, 64, 64, N_CLASSES], seed=args.seed)
    config = mlp.TrainingConfig(
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        max_epochs=args.epochs,
        patience=args.patience,
        min_delta=args.min_delta,
        seed=args.seed,
    )
    result = mlp.train(model, X_train, y_train, X_val, y_val, config)
    accuracy = mlp.evaluate(result.model, X_val, y_val)
    mlp.save_model(result.model, args.out)
    print(
        f"trained {result.epochs_run} epochs"
        f" (best {result.best_epoch},"
        f" early stop {'yes' if result.stopped_early else 'no'})"
    )
    print(f"held-out accuracy {accuracy:.4f} on {len(y_val)} samples")
    print(f"model written to {args.out}")
    if args.curve:
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(result.train_losses, label="train")
        ax.plot(result.val_losses, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.curve, dpi=150)
        plt.close(fig)
        print(f"loss curve written to {args.curve}")
    return EXIT_OK


def _parse_anova_groups(path: str) -> list[GroupSummary]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "groups" not in data:
        raise ValueError("expected an object with a 'groups' list")
    groups = []
    for i, g in enumerate(data["groups"]):
        if not isinstance(g, dict):
            raise ValueError(f"groups[{i}]: expected an object")
        label = g.get("label", f"group {i + 1}")
        if "samples" in g:
            groups.append(summarize(g["samples"], label=label))
        elif all(k in g for k in ("count", "mean", "variance")):
            groups.append(
                GroupSummary(
                    count=int(g["count"]),
                    mean=float(g["mean"]),
                    variance=float(g["variance"]),
                    label=label,
                )
            )
        else:
            raise ValueError(
                f"groups[{i}]: needs 'samples' or count/mean/variance"
            )
    return groups


def cmd_anova(args: argparse.Namespace) -> int:
    groups = _parse_anova_groups(args.input)
    result = one_way_anova(groups, alpha=args.alpha)
    print(report.format_anova_table(result))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        payload = {
            "groups": [
                {
                    "label": g.label,
                    "count": g.count,
                    "sum": g.total,
                    "mean": g.mean,
                    "variance": g.variance,
                }
                for g in result.groups
            ],
            "ss_between": result.ss_between,
            "ss_within": result.ss_within,
            "df_between": result.df_between,
            "df_within": result.df_within,
            "ms_between": result.ms_between,
            "ms_within": result.ms_within,
            "f_stat": result.f_stat,
            "p_value": result.p_value,
            "f_crit": result.f_crit,
            "significant": result.significant,
        }
        report.write_report(payload, outdir / "anova.json")
        report.anova_figure(result, outdir / "group_means.png")
        print(f"report written to {outdir / 'anova.json'}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    classifier = _load_classifier(args.model)
    server = BridgeServer(
        scenario,
        host=args.host,
        port=args.port,
        classifier=classifier,
        rate=args.rate,
        websocket=args.ws,
    )
    try:
        result = server.run()
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_OK
    print(
        f"episode finished: execution {result.execution_time:.1f} s,"
        f" downtime {result.downtime:.1f} s"
    )
    return EXIT_OK if result.completed else EXIT_INCOMPLETE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coact",
        description="Speed-scaled human-robot collaboration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write a report")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", default="out", help="report directory")
    p_run.add_argument("--mode", choices=("predictive", "baseline"), default=None)
    p_run.add_argument("--model", default=None, help="trained classifier JSON")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="predictive vs baseline on one scenario")
    p_cmp.add_argument("scenario")
    p_cmp.add_argument("--out", default="out")
    p_cmp.add_argument("--model", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_train = sub.add_parser("train", help="train the command classifier")
    p_train.add_argument("--out", default="model.json")
    p_train.add_argument("--copies", type=int, default=40)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--epochs", type=int, default=2000)
    p_train.add_argument("--patience", type=int, default=100)
    p_train.add_argument("--learning-rate", type=float, default=4e-3)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--min-delta", type=float, default=0.0)
    p_train.add_argument("--curve", default=None, help="optional loss-curve PNG")
    p_train.set_defaults(func=cmd_train)

    p_anova = sub.add_parser("anova", help="one-way ANOVA over sample groups")
    p_anova.add_argument("input", help="JSON file with a 'groups' list")
    p_anova.add_argument("--out", default=None, help="optional report directory")
    p_anova.add_argument("--alpha", type=float, default=0.05)
    p_anova.set_defaults(func=cmd_anova)

    p_serve = sub.add_parser("serve", help="paced live session over TCP or WebSocket")
    p_serve.add_argument("scenario")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--rate", type=float, default=1.0, help="0 disables pacing")
    p_serve.add_argument("--ws", action="store_true", help="WebSocket transport")
    p_serve.add_argument("--model", default=None)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("COACT_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
