"""Command line interface.

``run`` and ``replay`` drive the core directly (headless runs must stay
deterministic and CI-fast); ``serve`` hosts the FastAPI service; the analysis
subcommands are thin clients of the same request/response models the service
exposes.

Exit codes: 0 success, 2 scenario or flag error, 3 mission fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .errors import FirejetError, ScenarioInvalid, Unreachable, VersionMismatch

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_FAULT = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioInvalid, VersionMismatch) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_SCENARIO
    except FirejetError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_FAULT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="firejet",
                                description="Turntable-ladder firefighting simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario with the scripted operator")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--headless", action="store_true",
                     help="run as fast as possible (default)")
    run.add_argument("--paced", action="store_true", help="lock to wall clock")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", type=Path, default=None, help="log/metrics directory")
    run.add_argument("--max-sim-s", type=float, default=600.0)
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="host the scenario as a network service")
    serve.add_argument("--scenario", required=True, type=Path)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--tcp-port", type=int, default=None,
                       help="raw stream port (default: port+1)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--seed", type=int, default=None)
    serve.add_argument("--out", type=Path, default=None)
    serve.add_argument("--time-scale", type=float, default=1.0)
    serve.add_argument("--console-dir", type=Path, default=None,
                       help="static console build to mount at /console")
    serve.set_defaults(func=cmd_serve)

    replay = sub.add_parser("replay", help="recompute metrics; optionally re-serve")
    replay.add_argument("--log", required=True, type=Path)
    replay.add_argument("--port", type=int, default=None)
    replay.add_argument("--time-scale", type=float, default=1.0)
    replay.set_defaults(func=cmd_replay)

    solve = sub.add_parser("solve", help="inverse ballistics for one target")
    solve.add_argument("--target", required=True,
                       help="target ENU as E,N,U meters")
    solve.add_argument("--origin", default="0,0,0", help="nozzle ENU as E,N,U")
    solve.add_argument("--speed", type=float, default=None, help="exit speed m/s")
    solve.add_argument("--pressure", type=float, default=None, help="pascal")
    solve.add_argument("--drag", type=float, default=0.0, help="drag coeff 1/m")
    solve.add_argument("--arc", choices=["low", "high"], default="low")
    solve.set_defaults(func=cmd_solve)

    funnel = sub.add_parser("funnel", help="funnel parameters and cross-section")
    funnel.add_argument("--scenario", required=True, type=Path)
    funnel.add_argument("--margin", type=float, default=None)
    funnel.add_argument("--ceiling", type=float, default=None)
    funnel.set_defaults(func=cmd_funnel)

    dev = sub.add_parser("deviation", help="angle error to landing deviation table")
    dev.add_argument("--range", dest="ranges", required=True,
                     help="range(s) in meters, comma separated")
    dev.add_argument("--yaw-err", type=float, default=0.0)
    dev.add_argument("--pitch-err", type=float, default=0.0)
    dev.add_argument("--speed", type=float, default=None,
                     help="exit speed m/s (default: 45 deg shot reaching the range)")
    dev.add_argument("--drag", type=float, default=0.0)
    dev.set_defaults(func=cmd_deviation)

    return p


def cmd_run(args) -> int:
    from .runner import MissionRunner
    from .scenario import Scenario

    scenario = Scenario.load(args.scenario)
    log_path = None
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        log_path = args.out / "run_log.jsonl"
    runner = MissionRunner(scenario, seed_override=args.seed, log_path=log_path)

    if args.paced:
        dt = runner.world.config.dt
        ticks = int(args.max_sim_s / dt)
        t0 = time.monotonic()
        for i in range(ticks):
            runner.tick()
            if runner.gcs.state.value in ("Finished", "Fault"):
                break
            lag = (i + 1) * dt - (time.monotonic() - t0)
            if lag > 0:
                time.sleep(lag)
        metrics = runner.metrics_acc.finalize()
        runner.close()
    else:
        metrics = runner.run_headless(max_sim_s=args.max_sim_s)

    if args.out is not None:
        (args.out / "metrics.json").write_text(
            json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    if metrics.final_state != "Finished":
        return EXIT_FAULT
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .scenario import Scenario
    from .service import create_app

    scenario = Scenario.load(args.scenario)
    console_dir = args.console_dir
    if console_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        console_dir = candidate if candidate.is_dir() else None
    tcp_port = args.tcp_port if args.tcp_port is not None else args.port + 1
    app = create_app(scenario, seed_override=args.seed, out_dir=args.out,
                     time_scale=args.time_scale, console_dir=console_dir,
                     tcp_host=args.host, tcp_port=tcp_port)
    print(f"serving scenario on http://{args.host}:{args.port} "
          f"(ws at /ws, stream on tcp:{tcp_port})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .metrics import metrics_from_records, read_log, state_dwell_times

    records = read_log(args.log)
    if not records:
        print("error: empty log", file=sys.stderr)
        return EXIT_SCENARIO
    metrics = metrics_from_records(records)
    dwell = state_dwell_times(records)
    print(json.dumps({"metrics": metrics.to_dict(),
                      "state_dwell_s": {k: round(v, 2) for k, v in dwell.items()}},
                     indent=2, sort_keys=True))
    if args.port is not None:
        import uvicorn

        from .service import create_replay_app

        app = create_replay_app(args.log, time_scale=args.time_scale)
        print(f"re-serving log on ws://127.0.0.1:{args.port}/ws")
        uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return EXIT_OK


def _parse_triple(text: str):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected E,N,U triple, got {text!r}")
    return tuple(parts)


def cmd_solve(args) -> int:
    from .service import SolveRequest, solve_to_response

    try:
        req = SolveRequest(
            target_enu=_parse_triple(args.target),
            origin_enu=_parse_triple(args.origin),
            exit_speed_mps=args.speed,
            pressure_pa=args.pressure,
            drag_coeff=args.drag,
            arc=args.arc,
        )
        resp = solve_to_response(req)
    except Unreachable as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_FAULT
    except ValueError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_SCENARIO
    print(resp.model_dump_json(indent=2))
    return EXIT_OK


def cmd_funnel(args) -> int:
    from .scenario import Scenario
    from .service import FunnelRequest, funnel_to_response

    scenario = Scenario.load(args.scenario)
    grid = scenario.build_grid()
    resp = funnel_to_response(scenario, grid, FunnelRequest(
        margin_m=args.margin, ceiling_m=args.ceiling))
    data = resp.model_dump()
    section = data.pop("ascii_section")
    print(json.dumps(data, indent=2, sort_keys=True))
    print("\n".join(section))
    return EXIT_OK


def cmd_deviation(args) -> int:
    from .service import DeviationRequest, deviation_to_response

    try:
        ranges = [float(r) for r in args.ranges.split(",")]
    except ValueError:
        print(f"error: bad --range value {args.ranges!r}", file=sys.stderr)
        return EXIT_SCENARIO
    print(f"{'range_m':>8} {'yaw_err':>8} {'pitch_err':>9} "
          f"{'lateral_m':>9} {'downrange_m':>11} {'deviation_m':>11}")
    for r in ranges:
        resp = deviation_to_response(DeviationRequest(
            range_m=r, yaw_err_deg=args.yaw_err, pitch_err_deg=args.pitch_err,
            exit_speed_mps=args.speed, drag_coeff=args.drag))
        print(f"{r:8.1f} {args.yaw_err:8.3f} {args.pitch_err:9.3f} "
              f"{resp.lateral_m:9.3f} {resp.downrange_m:11.3f} "
              f"{resp.deviation_m:11.3f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
