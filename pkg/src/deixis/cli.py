"""Command-line entry point.

Subcommands:
    run      execute scenarios, write CSV results, metrics, and figures
    weights  export the normalized recency-weight curves as CSV + figure
    replay   re-run scenarios against a recorded agent journal

Exit codes: 0 all expected outcomes met, 1 some scenario failed its
expectations, 2 usage error, 3 scenario validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .agent import replay_gateway
from .errors import ScenarioError
from .fusion import normalized_weights
from .harness import (
    RunConfig,
    RunResult,
    Scenario,
    TrialOutcome,
    aggregate_by_sigma,
    load_scenario,
    monte_carlo,
    run_scenario,
    serialize_policy,
    write_csv,
    write_metrics_csv,
    write_results_csv,
    write_sweep_csv,
)

DEFAULT_WEIGHT_WINDOWS = (2, 5, 10, 20)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deixis",
        description="Gaze + speech target selection and action planning, replayed from scenario files.",
        epilog=(
            "Remote agent settings come from DEIXIS_ENDPOINT, DEIXIS_API_KEY, "
            "and optionally DEIXIS_MODEL; values are never logged."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and write results, metrics, and figures")
    run.add_argument("scenarios", nargs="+", help="scenario JSON files")
    run.add_argument("--seed", type=int, default=None, help="override every scenario's seed")
    run.add_argument("--agent", choices=("mock", "remote"), default="mock", help="agent backend")
    run.add_argument(
        "--noise-sigma-cm",
        type=float,
        action="append",
        default=None,
        help="gaze jitter level in cm; repeat the flag to sweep several levels",
    )
    run.add_argument("--trials", type=int, default=1, help="Monte-Carlo trials per noise level")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="scenarios to run in parallel")
    run.add_argument("--journal", default=None, help="record agent traffic to this JSON-lines file")
    run.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    weights = sub.add_parser("weights", help="export normalized recency-weight curves")
    weights.add_argument(
        "--n-values",
        default=",".join(str(n) for n in DEFAULT_WEIGHT_WINDOWS),
        help="comma-separated window index bounds",
    )
    weights.add_argument("--out", default="out", help="output directory")
    weights.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    replay = sub.add_parser("replay", help="re-run scenarios against a recorded agent journal")
    replay.add_argument("journal", help="agent journal (JSON lines)")
    replay.add_argument("scenarios", nargs="+", help="scenario JSON files")
    replay.add_argument("--seed", type=int, default=None)
    replay.add_argument("--trials", type=int, default=1)
    replay.add_argument("--noise-sigma-cm", type=float, action="append", default=None)
    replay.add_argument("--out", default="out", help="output directory")
    replay.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    return parser


def _result_json(result: RunResult) -> dict:
    # timings are excluded: output files must be deterministic
    return {
        "scenario_id": result.scenario_id,
        "success": result.success,
        "failure_stage": result.failure_stage.value if result.failure_stage else None,
        "error": result.error,
        "gaze_error_cm": result.gaze_error_cm,
        "slots": [
            {
                "slot": s.index,
                "word": s.word,
                "category": s.category,
                "human_id": s.human_id,
                "robot_id": s.robot_id,
                "expected_id": s.expected_id,
                "correct": s.correct,
            }
            for s in result.slots
        ],
        "policy": serialize_policy(result.policy) if result.policy is not None else None,
    }


def _execute_batch(
    scenarios: list[Scenario],
    cfg: RunConfig,
    trials: int,
    sigmas: list[float],
    jobs: int,
) -> tuple[list[RunResult], list[TrialOutcome]]:
    def one(scenario: Scenario) -> tuple[RunResult, list[TrialOutcome]]:
        baseline = run_scenario(scenario, cfg)
        if baseline.failure_stage is not None:
            outcomes: list[TrialOutcome] = []
        else:
            outcomes = monte_carlo(scenario, trials, sigmas, cfg)
        return baseline, outcomes

    if jobs > 1 and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(one, scenarios))
    else:
        pairs = [one(s) for s in scenarios]
    baselines = [p[0] for p in pairs]
    outcomes = [o for p in pairs for o in p[1]]
    return baselines, outcomes


def _write_run_outputs(
    out_dir: Path,
    baselines: list[RunResult],
    outcomes: list[TrialOutcome],
    scenarios: list[Scenario],
    sigmas: list[float],
    figures: bool,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    baselines = sorted(baselines, key=lambda r: r.scenario_id)
    (out_dir / "run_results.json").write_text(
        json.dumps([_result_json(r) for r in baselines], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_results_csv([o for o in outcomes if o.sigma_cm == sigmas[0]], out_dir / "results.csv")
    if len(sigmas) > 1:
        write_sweep_csv(outcomes, out_dir / "sweep.csv")
    template_ids = {s.id: s.template_id for s in scenarios if s.template_id is not None}
    write_metrics_csv(outcomes, out_dir / "metrics.csv", template_ids)
    if figures and outcomes:
        from . import report

        metrics = aggregate_by_sigma(outcomes)
        report.save_success_bars(metrics, out_dir / "success_rates.png")
        if len(sigmas) > 1:
            report.save_noise_curves(metrics, out_dir / "noise_curve.png")


def _cmd_run(args: argparse.Namespace, gateway_override=None) -> int:
    scenarios = [load_scenario(p) for p in args.scenarios]
    sigmas = args.noise_sigma_cm if args.noise_sigma_cm else [0.0]
    cfg = RunConfig(
        agent_backend=getattr(args, "agent", "mock"),
        seed=args.seed,
        journal_path=getattr(args, "journal", None),
        gateway_override=gateway_override,
    )
    baselines, outcomes = _execute_batch(scenarios, cfg, args.trials, sigmas, getattr(args, "jobs", 1))
    _write_run_outputs(Path(args.out), baselines, outcomes, scenarios, sigmas, not args.no_figures)
    failed = [r for r in baselines if not r.success]
    for result in failed:
        stage = result.failure_stage.value if result.failure_stage else "expectations"
        print(f"FAIL {result.scenario_id}: {stage}" + (f" ({result.error})" if result.error else ""), file=sys.stderr)
    for result in baselines:
        if result.success:
            print(f"ok {result.scenario_id}")
    return 0 if not failed else 1


def _cmd_weights(args: argparse.Namespace) -> int:
    try:
        n_values = [int(v) for v in args.n_values.split(",") if v.strip()]
    except ValueError:
        print(f"invalid --n-values: {args.n_values!r}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for n_max in n_values:
        for n, weight in enumerate(normalized_weights(n_max)):
            rows.append([str(n_max), str(n), repr(float(weight))])
    write_csv(out_dir / "weights.csv", ("N", "n", "weight"), rows)
    if not args.no_figures:
        from . import report

        report.save_weight_curves(n_values, out_dir / "weights.png")
    print(f"wrote weight curves for N in {n_values} to {out_dir}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    gateway = replay_gateway(args.journal)
    args.journal = None  # never append to the journal being replayed
    args.agent = "mock"
    return _cmd_run(args, gateway_override=gateway)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "weights":
            return _cmd_weights(args)
        if args.command == "replay":
            return _cmd_replay(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable: argparse enforces the subcommand set")


if __name__ == "__main__":
    sys.exit(main())
