"""Command line front end.

Verbs:
  run            simulate a scenario, write telemetry, optionally render a report
  fit            fit the torque law to a current/torque CSV
  metrics        density-style figures of merit for one clutch build
  export         convert telemetry between the CSV and JSON forms
  report         render figures and a summary from recorded telemetry
  replay         stream recorded telemetry over the live bridge protocol
  serve          run a scenario live behind the WebSocket bridge
  calibrate-env  tune object stiffness to hit windowed torque targets

Exit codes: 0 success, 1 runtime failure, 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from mrteleop.calibrate import CalibrationTarget, calibrate_scenario
from mrteleop.clutch import (
    ClutchSpec,
    fit_hill,
    performance_metrics,
    read_current_torque_csv,
)
from mrteleop.scenario_io import (
    ScenarioError,
    fixture_names,
    load_scenario_file,
    resolve_scenario_source,
    scenario_from_dict,
    write_scenario_dict,
)
from mrteleop.session import (
    Session,
    count_collision_events,
    export_telemetry,
    import_telemetry,
)

__all__ = ["build_parser", "main"]


def _load_scenario(spec: str):
    path = resolve_scenario_source(spec)
    return load_scenario_file(path)


def _cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.duration is not None:
        scenario = replace(scenario, duration=args.duration)
    session = Session(scenario)
    records = session.run()
    export_telemetry(records, args.out, format="csv")
    written = [args.out]
    if args.json_out:
        export_telemetry(records, args.json_out, format="structured")
        written.append(args.json_out)
    if args.report:
        from mrteleop.report import render_report

        written += render_report(records, args.report,
                                 wmap=scenario.workspace_map, cal=scenario.semg_cal)
    if not args.quiet:
        print(f"{scenario.name}: {len(records)} ticks, "
              f"{count_collision_events(records)} collision(s)")
        for path in written:
            print(f"  wrote {path}")
    return 0


def _cmd_fit(args) -> int:
    currents, torques = read_current_torque_csv(args.input)
    result = fit_hill(currents, torques)
    doc = {
        "v_max_nm": result.params.v_max,
        "k_a": result.params.k,
        "n": result.params.n,
        "rmse_nm": result.rmse,
        "mae_nm": result.mae,
        "nrmse": result.nrmse,
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"v_max={result.params.v_max:.4f} N m  k={result.params.k:.4f} A  "
          f"n={result.params.n:.4f}")
    print(f"rmse={result.rmse:.4f} N m  mae={result.mae:.4f} N m  "
          f"nrmse={100 * result.nrmse:.2f}%")
    return 0


def _cmd_metrics(args) -> int:
    spec = ClutchSpec(max_torque=args.torque, mass=args.mass,
                      volume=args.volume, dissipated_power=args.power)
    m = performance_metrics(spec)
    print(f"torque/mass:   {m['tmr']:.6g} N m/kg")
    print(f"torque/volume: {m['tvr']:.6g} N m/m^3")
    print(f"torque/power:  {m['tpr']:.6g} N m/W")
    if args.json:
        print(json.dumps(m))
    return 0


def _cmd_export(args) -> int:
    records = import_telemetry(args.input)
    export_telemetry(records, args.out, format=args.format)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_report(args) -> int:
    from mrteleop.report import render_report

    records = import_telemetry(args.input)
    wmap = None
    cal = None
    if args.scenario:
        scenario = _load_scenario(args.scenario)
        wmap = scenario.workspace_map
        cal = scenario.semg_cal
    for path in render_report(records, args.outdir, wmap=wmap, cal=cal):
        print(f"wrote {path}")
    return 0


def _cmd_replay(args) -> int:
    from mrteleop.bridge import ReplaySource, serve_bridge

    records = import_telemetry(args.input)
    source = ReplaySource(records, rate=args.rate, speed=args.speed,
                          name=args.input)
    source.start()
    print(f"replaying {len(records)} records on ws://{args.host}:{args.port}/ws")
    serve_bridge(source, host=args.host, port=args.port)
    return 0


def _cmd_serve(args) -> int:
    from mrteleop.bridge import SimulationHost, serve_bridge

    scenario = _load_scenario(args.scenario)

    def loader(name):
        return _load_scenario(name)

    host = SimulationHost(scenario, realtime=not args.as_fast, speed=args.speed,
                          scenario_loader=loader)
    host.start()
    print(f"serving {scenario.name!r} on ws://{args.host}:{args.port}/ws "
          f"(health at http://{args.host}:{args.port}/healthz)")
    serve_bridge(host, host=args.host, port=args.port)
    return 0


def _parse_target(text: str) -> CalibrationTarget:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"target must look like OBJ:WINDOW:RMS, got {text!r}")
    try:
        return CalibrationTarget(object_index=int(parts[0]),
                                 window_index=int(parts[1]),
                                 rms_torque=float(parts[2]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _cmd_calibrate_env(args) -> int:
    path = resolve_scenario_source(args.scenario)
    with open(path) as fh:
        doc = json.load(fh)
    log = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    tuned, results = calibrate_scenario(doc, args.target, tol=args.tol,
                                        max_iters=args.max_iters,
                                        passes=args.passes, log=log)
    for r in results:
        status = "ok" if r.converged else "NOT CONVERGED"
        print(f"objects[{r.target.object_index}] -> window {r.target.window_index}: "
              f"k={r.stiffness:.6g} N/m rms={r.achieved:.4f} N m "
              f"(target {r.target.rms_torque}) in {r.iterations} runs [{status}]")
    write_scenario_dict(tuned, args.out)
    print(f"wrote {args.out}")
    return 0 if all(r.converged for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrteleop",
        description="deterministic force feedback teleoperation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    try:
        bundled = ", ".join(fixture_names()) or "none bundled"
    except OSError:
        bundled = "none bundled"

    p = sub.add_parser("run", help="simulate a scenario and write telemetry")
    p.add_argument("--scenario", required=True,
                   help=f"scenario file or bundled name ({bundled})")
    p.add_argument("--out", required=True, help="telemetry CSV path")
    p.add_argument("--json-out", help="also write the structured JSON form")
    p.add_argument("--report", metavar="DIR", help="render figures and summary into DIR")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--duration", type=float, help="override the run length (s)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("fit", help="fit the torque law to current/torque samples")
    p.add_argument("--input", required=True, help="CSV with current_a,torque_nm columns")
    p.add_argument("--out", help="write fitted parameters as JSON")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("metrics", help="figures of merit for one clutch build")
    p.add_argument("--torque", type=float, default=ClutchSpec().max_torque)
    p.add_argument("--mass", type=float, default=ClutchSpec().mass)
    p.add_argument("--volume", type=float, default=ClutchSpec().volume)
    p.add_argument("--power", type=float, default=ClutchSpec().dissipated_power)
    p.add_argument("--json", action="store_true", help="also print machine readable form")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("export", help="convert telemetry between formats")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "structured"), required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("report", help="render figures from recorded telemetry")
    p.add_argument("--input", required=True, help="telemetry CSV or JSON")
    p.add_argument("--outdir", required=True)
    p.add_argument("--scenario", help="scenario for the workspace map and sEMG curve")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("replay", help="stream recorded telemetry over the bridge")
    p.add_argument("--input", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--rate", type=float, default=500.0, help="record rate of the input (Hz)")
    p.add_argument("--speed", type=float, default=1.0, help="playback speed multiplier")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="run a scenario live behind the bridge")
    p.add_argument("--scenario", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--as-fast", action="store_true",
                   help="tick without wall clock pacing")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("calibrate-env", help="tune object stiffness to torque targets")
    p.add_argument("--scenario", required=True)
    p.add_argument("--target", action="append", required=True, type=_parse_target,
                   metavar="OBJ:WINDOW:RMS",
                   help="object index, collision window index, target RMS torque (N m); repeatable")
    p.add_argument("--out", required=True, help="write the tuned scenario here")
    p.add_argument("--tol", type=float, default=0.01, help="relative RMS tolerance")
    p.add_argument("--max-iters", type=int, default=24, help="runs per target")
    p.add_argument("--passes", type=int, default=1, help="sweeps over all targets")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_calibrate_env)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except (ScenarioError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
