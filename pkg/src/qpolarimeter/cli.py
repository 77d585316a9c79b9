"""Command-line interface.

Subcommands:

* ``tomo``             - offline reconstruction of a counts file into a report
  plus Re/Im bar charts (PNG and ASCII).
* ``simulate-counts``  - generate a counts file from a configurable source.
* ``montecarlo``       - precision curves versus ensemble size or total time.
* ``serve``            - run the live engine behind the WebSocket service.
* ``replay``           - serve a captured session file.

Global flags: ``--seed``, ``--config <file>`` (versioned JSON document,
see ``qpolarimeter.wire.default_config``), ``--format json|csv``.
All outputs are deterministic for identical flags and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import charts, wire
from .engine import EngineConfig, SourceState, TARGET_STATES, source_density
from .measurement import (
    CountRecord,
    NoiseModel,
    build_measurement_matrix,
    canonical_settings,
    expected_counts,
    read_count_records,
    simulate_counts,
    write_count_records,
)
from .quantum import DensityMatrix, concurrence, density_from_pure, fidelity, purity
from .reconstruction import RankDeficientError, lls_reconstruct, ml_reconstruct
from .server import PolarimeterService
from .simlab import (
    PRESET_PROFILES,
    InfeasibleTimeError,
    ensemble_size,
    points_to_csv,
    points_to_json,
    precision_curve,
)

_SETTINGS_NAMES = {"canonical-9": 9, "canonical-36": 36}


def _state_from_name(name: str) -> DensityMatrix:
    if name in TARGET_STATES:
        return density_from_pure(TARGET_STATES[name])
    if name == "mixed":
        return DensityMatrix(np.eye(4) / 4)
    if name.startswith("theta="):
        return source_density(SourceState(theta=float(name.split("=", 1)[1])))
    raise ValueError(f"unknown state {name!r}; use one of {sorted(TARGET_STATES)}, mixed, theta=<rad>")


def _noise_with_overrides(config: dict, args) -> NoiseModel:
    noise = wire.noise_from_config(config)
    overrides = {}
    for field in ("pair_rate", "car", "dark_rate", "gate_rate", "eta"):
        value = getattr(args, field.replace("-", "_"), None)
        if value is not None:
            overrides[field] = value
    return replace(noise, **overrides) if overrides else noise


def _cmd_tomo(args, config: dict) -> int:
    try:
        with open(args.counts, encoding="utf-8") as fh:
            records, meta = read_count_records(fh)
    except OSError as exc:
        print(f"tomo: cannot read counts file: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"tomo: {args.counts}: {exc}", file=sys.stderr)
        return 2
    if not records:
        print("tomo: counts file holds no records", file=sys.stderr)
        return 2

    settings_name = args.settings or meta.get("settings", "canonical-9")
    if settings_name not in _SETTINGS_NAMES:
        print(f"tomo: unknown settings list {settings_name!r}", file=sys.stderr)
        return 2
    settings = canonical_settings(_SETTINGS_NAMES[settings_name], dwell=records[0].dwell)
    matrix = build_measurement_matrix(settings)

    reconstruct = ml_reconstruct if args.method == "ml" else lls_reconstruct
    try:
        report = reconstruct(
            matrix,
            records,
            subtract_accidentals=not args.no_subtract,
            normalize_per_setting=not args.raw_counts,
        )
    except RankDeficientError as exc:
        print(f"tomo: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"tomo: reconstruction failed: {exc}", file=sys.stderr)
        return 1

    document = {
        "method": report.method,
        "rho": wire.density_to_wire(report.rho),
        "raw_stokes": [float(x) for x in np.asarray(report.raw_stokes).reshape(16)],
        "truncated_mass": report.truncated_mass,
        "residual": report.residual,
        "flags": list(report.flags),
        "purity": purity(report.rho),
        "concurrence": concurrence(report.rho),
        "settings": settings_name,
        "records": len(records),
    }
    if args.target:
        document["target"] = args.target
        document["fidelity"] = fidelity(report.rho, _state_from_name(args.target))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")
    print(f"tomo: {report.method} solve in {report.solve_time * 1e3:.2f} ms -> {args.out}", file=sys.stderr)

    if args.chart:
        charts.save_density_chart(report.rho, args.chart + ".png")
        with open(args.chart + ".txt", "w", encoding="utf-8") as fh:
            fh.write(charts.ascii_density(report.rho))
    print(charts.ascii_density(report.rho), end="")
    return 0


def _cmd_simulate_counts(args, config: dict) -> int:
    try:
        rho = _state_from_name(args.state)
    except ValueError as exc:
        print(f"simulate-counts: {exc}", file=sys.stderr)
        return 2
    noise = _noise_with_overrides(config, args)
    if args.n_per_setting is not None:
        dwell = args.n_per_setting / (noise.pair_rate * noise.eta**2)
    else:
        dwell = args.dwell
    settings = canonical_settings(args.m, dwell=dwell)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if args.exact:
        records = []
        for i, s in enumerate(settings):
            ec = expected_counts(rho, s, noise)
            records.append(CountRecord(
                setting_id=s.id,
                counts=tuple(int(round(c)) for c in ec.total),
                expected_accidentals=tuple(float(b) for b in ec.background),
                dwell=s.dwell,
                timestamp=(i + 1) * dwell,
                uid=i,
            ))
    else:
        records = [simulate_counts(rho, s, noise, rng, timestamp=(i + 1) * dwell, uid=i)
                   for i, s in enumerate(settings)]
    with open(args.out, "w", encoding="utf-8") as fh:
        write_count_records(fh, records, settings, settings_name=f"canonical-{args.m}", seed=seed)
    print(f"simulate-counts: wrote {len(records)} records -> {args.out}", file=sys.stderr)
    return 0


def _cmd_montecarlo(args, config: dict) -> int:
    try:
        rho = _state_from_name(args.state)
    except ValueError as exc:
        print(f"montecarlo: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    noise = _noise_with_overrides(config, args)

    if args.t_values:
        rows = []
        try:
            for name in args.profiles.split(","):
                profile = PRESET_PROFILES[name.strip()]
                n_values = [ensemble_size(profile, t) for t in args.t_values]
                prof_noise = replace(noise, pair_rate=profile.pair_rate, eta=profile.eta)
                points = precision_curve(rho, n_values, args.trials, args.estimator, prof_noise, seed)
                rows.extend((name.strip(), t, p) for t, p in zip(args.t_values, points))
        except KeyError as exc:
            print(f"montecarlo: unknown profile {exc}", file=sys.stderr)
            return 2
        except InfeasibleTimeError as exc:
            print(f"montecarlo: {exc}", file=sys.stderr)
            return 2
        payload = [
            {"profile": name, "t": t, "n": p.n, "mean_fidelity": p.mean_fidelity,
             "std_fidelity": p.std_fidelity, "trials": p.trials, "estimator": p.estimator}
            for name, t, p in rows
        ]
        with open(args.out, "w", encoding="utf-8") as fh:
            if args.format == "json":
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            else:
                fh.write("profile,t,n,mean_fidelity,std_fidelity,trials,estimator\n")
                for d in payload:
                    fh.write(
                        f"{d['profile']},{d['t']!r},{d['n']!r},{d['mean_fidelity']!r},"
                        f"{d['std_fidelity']!r},{d['trials']},{d['estimator']}\n"
                    )
        if args.plot:
            _plot_time_curves(payload, args.plot)
        return 0

    if not args.n_values:
        print("montecarlo: provide --n-values or --t-values", file=sys.stderr)
        return 2
    points = precision_curve(rho, args.n_values, args.trials, args.estimator, noise, seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        if args.format == "json":
            points_to_json(points, fh)
        else:
            points_to_csv(points, fh)
    if args.plot:
        _plot_n_curve(points, args.plot)
    print(f"montecarlo: wrote {len(points)} points -> {args.out}", file=sys.stderr)
    return 0


def _plot_n_curve(points, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    ax.errorbar([p.n for p in points], [p.mean_fidelity for p in points],
                yerr=[p.std_fidelity for p in points], marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("ensemble size N")
    ax.set_ylabel("mean fidelity")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_time_curves(rows, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    profiles = sorted({d["profile"] for d in rows})
    for name in profiles:
        sub = [d for d in rows if d["profile"] == name]
        ax.errorbar([d["t"] for d in sub], [d["mean_fidelity"] for d in sub],
                    yerr=[d["std_fidelity"] for d in sub], marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("total tomography time T (s)")
    ax.set_ylabel("mean fidelity")
    ax.legend()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _engine_setup(args, config: dict) -> tuple[EngineConfig, SourceState]:
    engine_config = wire.engine_from_config(config)
    source = wire.source_from_config(config)
    if args.seed is not None:
        engine_config = replace(engine_config, seed=args.seed)
    if args.window is not None:
        engine_config = replace(engine_config, window_m=args.window)
    if args.pacing is not None:
        engine_config = replace(engine_config, pacing=args.pacing)
    if args.theta is not None:
        source = replace(source, theta=args.theta)
    if args.car is not None:
        source = replace(source, car=args.car)
    if args.rate is not None:
        source = replace(source, pair_rate=args.rate)
    return engine_config, source


def _cmd_serve(args, config: dict) -> int:
    import asyncio

    engine_config, source = _engine_setup(args, config)
    host = args.host or config["serve"]["host"]
    port = args.port if args.port is not None else config["serve"]["port"]
    capture = open(args.capture, "w", encoding="utf-8") if args.capture else None
    service = PolarimeterService(engine_config, source, host=host, port=port, capture_stream=capture)
    print(f"serve: engine window_m={engine_config.window_m} pacing={engine_config.pacing} "
          f"on ws://{host}:{port}", file=sys.stderr)
    try:
        asyncio.run(service.run())
    except KeyboardInterrupt:
        pass
    finally:
        if capture is not None:
            capture.close()
    return 0


def _cmd_replay(args, config: dict) -> int:
    import asyncio

    try:
        with open(args.capture, encoding="utf-8") as fh:
            frames = wire.read_capture(fh)
    except (OSError, wire.SchemaError) as exc:
        print(f"replay: {exc}", file=sys.stderr)
        return 2
    engine_config = wire.engine_from_config(config)
    host = args.host or config["serve"]["host"]
    port = args.port if args.port is not None else config["serve"]["port"]
    interval = 0.0 if args.fast else args.interval
    service = PolarimeterService(
        engine_config, host=host, port=port, replay_frames=frames, replay_interval=interval
    )
    print(f"replay: {len(frames)} frames on ws://{host}:{port}", file=sys.stderr)
    try:
        asyncio.run(service.run())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpolarimeter", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--config", default=None, help="JSON config document")
    parser.add_argument("--format", choices=("json", "csv"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True)

    tomo = sub.add_parser("tomo", help="reconstruct a density matrix from a counts file")
    tomo.add_argument("counts")
    tomo.add_argument("--settings", choices=sorted(_SETTINGS_NAMES), default=None)
    tomo.add_argument("--method", choices=("lls", "ml"), default="lls")
    tomo.add_argument("--no-subtract", action="store_true", help="skip accidental subtraction")
    tomo.add_argument("--raw-counts", action="store_true", help="fit raw counts with an implicit intensity")
    tomo.add_argument("--target", default=None, help="report fidelity to this state")
    tomo.add_argument("--out", default="report.json")
    tomo.add_argument("--chart", default=None, help="write <prefix>.png and <prefix>.txt")

    sim = sub.add_parser("simulate-counts", help="write a simulated counts file")
    sim.add_argument("--state", default="phi+")
    sim.add_argument("--m", type=int, choices=(9, 36), default=9)
    sim.add_argument("--n-per-setting", type=float, default=None,
                     help="expected detected pairs per setting (sets the dwell)")
    sim.add_argument("--dwell", type=float, default=0.08)
    sim.add_argument("--exact", action="store_true",
                     help="write exact expected counts instead of Poisson draws")
    for flag in ("--pair-rate", "--car", "--dark-rate", "--gate-rate", "--eta"):
        sim.add_argument(flag, type=float, default=None)
    sim.add_argument("--out", default="counts.csv")

    mc = sub.add_parser("montecarlo", help="precision curves vs ensemble size or time")
    mc.add_argument("--state", default="phi+")
    mc.add_argument("--n-values", type=lambda s: [float(x) for x in s.split(",")], default=None)
    mc.add_argument("--t-values", type=lambda s: [float(x) for x in s.split(",")], default=None)
    mc.add_argument("--profiles", default="polarimeter,freespace")
    mc.add_argument("--trials", type=int, default=500)
    mc.add_argument("--estimator", choices=("LLS", "ML"), default="LLS")
    for flag in ("--pair-rate", "--car", "--dark-rate", "--gate-rate", "--eta"):
        mc.add_argument(flag, type=float, default=None)
    mc.add_argument("--out", default="curve.csv")
    mc.add_argument("--plot", default=None)

    serve_p = sub.add_parser("serve", help="run the live streaming service")
    serve_p.add_argument("--host", default=None)
    serve_p.add_argument("--port", type=int, default=None)
    serve_p.add_argument("--theta", type=float, default=None)
    serve_p.add_argument("--car", type=float, default=None)
    serve_p.add_argument("--rate", type=float, default=None)
    serve_p.add_argument("--window", type=int, default=None)
    serve_p.add_argument("--pacing", choices=("realtime", "fast"), default=None)
    serve_p.add_argument("--capture", default=None, help="write every frame to this JSONL file")

    replay_p = sub.add_parser("replay", help="serve a captured session file")
    replay_p.add_argument("capture")
    replay_p.add_argument("--host", default=None)
    replay_p.add_argument("--port", type=int, default=None)
    replay_p.add_argument("--interval", type=float, default=0.1)
    replay_p.add_argument("--fast", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = wire.load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"qpolarimeter: bad config: {exc}", file=sys.stderr)
        return 2
    handlers = {
        "tomo": _cmd_tomo,
        "simulate-counts": _cmd_simulate_counts,
        "montecarlo": _cmd_montecarlo,
        "serve": _cmd_serve,
        "replay": _cmd_replay,
    }
    return handlers[args.command](args, config)


if __name__ == "__main__":
    sys.exit(main())
