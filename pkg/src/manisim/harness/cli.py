"""Command line entry points: run, serve, validate, replay-check."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .replay import load_replay_track
from .scenario import ScenarioError, bundled_scenario_path, load_scenario


def _resolve_scenario(ref: str) -> Path:
    """Accept either a file path or the name of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return path
    try:
        return bundled_scenario_path(ref)
    except KeyError:
        return path


def _cmd_run(args: argparse.Namespace) -> int:
    from .runner import run_headless

    scenario = load_scenario(_resolve_scenario(args.scenario))
    log_path = Path(args.log) if args.log else Path(f"{scenario.name}-ticklog.csv")
    metrics_path = Path(args.metrics) if args.metrics else Path(f"{scenario.name}-metrics.csv")
    result = run_headless(scenario, log_path=log_path, metrics_path=metrics_path, tick_limit=args.ticks)
    if not args.quiet:
        for key, value in result.metrics.items():
            print(f"{key}={value}")
        print(f"ticklog={log_path}")
        print(f"metrics={metrics_path}")
    return 1 if result.metrics.get("failed") else 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .console import create_console_app

    scenario = load_scenario(_resolve_scenario(args.scenario))
    static_dir = Path(args.static) if args.static else None
    if static_dir is not None and not static_dir.is_dir():
        print(f"static directory not found: {static_dir}", file=sys.stderr)
        return 1
    app = create_console_app(scenario, tick_rate=args.tick_rate, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    status = 0
    for ref in args.scenarios:
        try:
            scenario = load_scenario(_resolve_scenario(ref))
        except FileNotFoundError:
            print(f"{ref}: file not found")
            status = 1
        except ScenarioError as exc:
            print(f"{ref}: INVALID: {exc}")
            status = 1
        else:
            sections = []
            if scenario.agents:
                sections.append(f"{len(scenario.agents)} agents")
            if scenario.arm is not None:
                sections.append("arm")
            if scenario.tool is not None:
                sections.append("tool")
            if scenario.guides:
                sections.append(f"{len(scenario.guides)} guides")
            print(f"{ref}: OK ({scenario.ticks} ticks, {', '.join(sections)})")
    return status


def _cmd_replay_check(args: argparse.Namespace) -> int:
    try:
        track = load_replay_track(args.track)
    except FileNotFoundError:
        print(f"{args.track}: file not found")
        return 1
    except ScenarioError as exc:
        print(f"{args.track}: INVALID: {exc}")
        return 1
    dts = track.times[1:] - track.times[:-1] if len(track) > 1 else []
    print(f"{args.track}: OK")
    print(f"frames={len(track)}")
    print(f"duration={track.duration}")
    if len(dts):
        print(f"dt_min={dts.min()} dt_max={dts.max()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manisim",
        description="Deterministic multi-agent reach/visibility simulation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless and write its tick log")
    run.add_argument("scenario", help="scenario file path or bundled name (trap, drill, table)")
    run.add_argument("--ticks", type=int, default=None, help="stop after this many ticks")
    run.add_argument("--log", default=None, help="tick log CSV output path")
    run.add_argument("--metrics", default=None, help="metrics CSV output path")
    run.add_argument("--quiet", action="store_true", help="suppress the summary printout")
    run.set_defaults(func=_cmd_run)

    serve = sub.add_parser("serve", help="serve the console endpoint for a scenario")
    serve.add_argument("scenario", help="scenario file path or bundled name")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--tick-rate", type=float, default=100.0, help="real-time ticks per second")
    serve.add_argument("--static", default=None, help="directory of console UI files to serve at /")
    serve.set_defaults(func=_cmd_serve)

    validate = sub.add_parser("validate", help="check scenario files without running them")
    validate.add_argument("scenarios", nargs="+")
    validate.set_defaults(func=_cmd_validate)

    replay = sub.add_parser("replay-check", help="inspect a replay track file")
    replay.add_argument("track")
    replay.set_defaults(func=_cmd_replay_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
