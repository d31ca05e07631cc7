"""Command-line entry point: simulate, train, analyze logs, parse
problem specs, verify the reference statistics tables, and emit CSV/SVG
reports.

Exit codes: 0 success, 1 runtime/config failure, 2 input/parse failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import importlib.resources
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import plotting, replay
from .config import (
    ConfigError,
    RunManifest,
    dump_defaults,
    env_seed,
    load_configs,
)
from .episode import EpisodeRunner
from .fairness import PRESETS, SpecParseError, format_spec, parse_spec
from .replay import (
    SIDE_AGENT,
    DegenerateInput,
    DegenerateLog,
    FormatError,
    LogHeader,
    ReplayLog,
)
from .sim import SimConfigError
from .rl.train import (
    TrainConfig,
    random_step,
    run_experiment,
    scripted_greedy_action,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2

# Expected aggregate statistics for the bundled replay tables, with
# tolerances.  Metric keys follow replay.TABLE_COLUMNS; nc_epm_* are
# derived (EPM times non-camera rate).
TABLE_TARGETS = {
    "protoss": {
        "epm_agent": (182.10, 0.5),
        "epm_player": (154.17, 0.5),
        "apm_agent": (200.17, 0.5),
        "apm_player": (247.28, 0.5),
        "co_agent": (322.79, 0.5),
        "ao_agent": (969.55, 0.5),
        "ncr_agent": (0.6823, 0.001),
        "co_player": (859.13, 0.5),
        "ao_player": (1747.41, 0.5),
        "ncr_player": (0.5088, 0.001),
        "nc_epm_agent": (124.2, 0.1),
        "nc_epm_player": (78.4, 0.1),
    },
    "terran": {
        "epm_agent": (176.0, 0.5),
        "epm_player": (179.0, 0.5),
        "apm_agent": (193.0, 0.5),
        "apm_player": (292.0, 0.5),
        "ncr_agent": (0.635, 0.001),
        "ncr_player": (0.529, 0.001),
    },
    "zerg": {
        "epm_agent": (202.0, 0.5),
        "epm_player": (166.0, 0.5),
        "apm_agent": (248.0, 0.5),
        "apm_player": (242.0, 0.5),
        "ncr_agent": (0.627, 0.001),
        "ncr_player": (0.537, 0.001),
    },
}

TABLE_FILES = {race: f"replay_stats_{race}.csv" for race in TABLE_TARGETS}


def packaged_data_dir() -> str:
    return str(importlib.resources.files("fairrts").joinpath("data"))


def _print_err(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- spec


def cmd_spec(args) -> int:
    if args.preset is not None:
        if args.preset not in PRESETS:
            _print_err(
                f"unknown preset {args.preset!r}; "
                f"choose from {', '.join(sorted(PRESETS))}"
            )
            return EXIT_INPUT
        text = PRESETS[args.preset]
    elif args.text is not None:
        text = args.text
    else:
        _print_err("provide a spec string or --preset NAME")
        return EXIT_INPUT
    try:
        spec = parse_spec(text)
    except SpecParseError as exc:
        _print_err(text)
        _print_err(" " * exc.pos + "^")
        _print_err(f"error: {exc}")
        return EXIT_INPUT
    print(format_spec(spec))
    print(f"  interface:        {spec.interface}")
    print(f"  human data level: {spec.human_data_level}")
    limit = "none" if spec.epm_limit is None else str(spec.epm_limit)
    print(f"  EPM limit:        {limit}")
    camera = {"C0": "real (C_0)", "C1": "virtual (C_1)", None: "none"}[
        spec.camera_mode
    ]
    print(f"  camera mode:      {camera}")
    print(f"  precision:        {spec.precision:.2f}")
    return EXIT_OK


# ----------------------------------------------------------------- sim


def _run_policy_episode(sim_cfg, spec, seed, step_mul, policy, train_cfg):
    runner = EpisodeRunner(sim_cfg, spec, seed, step_mul=step_mul)
    rng = np.random.default_rng(seed)
    while not runner.done:
        if policy == "scripted":
            action = scripted_greedy_action(runner.state)
        else:
            action = random_step(
                runner.state, runner.ui, spec.interface, train_cfg, rng
            )
        runner.step(action)
    return runner


def cmd_sim(args) -> int:
    try:
        sim_cfg, train_cfg = load_configs(args.config)
        if args.steps is not None:
            sim_cfg = dataclasses.replace(sim_cfg, max_steps=args.steps)
        sim_cfg.validate()
    except (ConfigError, SimConfigError) as exc:
        _print_err(f"config error: {exc}")
        return EXIT_RUNTIME
    try:
        spec = parse_spec(args.spec)
    except SpecParseError as exc:
        _print_err(f"bad spec: {exc}")
        return EXIT_INPUT
    try:
        seed = env_seed(args.seed)
    except ConfigError as exc:
        _print_err(str(exc))
        return EXIT_RUNTIME

    runner = _run_policy_episode(
        sim_cfg, spec, seed, args.step_mul, args.policy, train_cfg
    )

    manifest = RunManifest(
        subcommand="sim",
        spec=format_spec(spec),
        config_path=args.config or "",
        seed=seed,
        output_dir=os.path.dirname(args.output) or ".",
        parameters={
            "policy": args.policy,
            "step_mul": args.step_mul,
            "steps": sim_cfg.max_steps,
        },
    )
    header = LogHeader(
        spec=format_spec(spec),
        seed=seed,
        config_hash=runner.state.cfg.hash(),
        sides=(SIDE_AGENT,),
        steps_per_second=sim_cfg.steps_per_second,
        duration_steps=runner.state.step,
        manifest=manifest.to_json(),
    )
    log = ReplayLog(header=header, records=tuple(runner.records))
    try:
        with open(args.output, "wb") as f:
            f.write(replay.write_log(log))
    except OSError as exc:
        _print_err(f"cannot write {args.output!r}: {exc}")
        return EXIT_RUNTIME

    rejected = sum(1 for r in runner.records if r.was_rejected)
    effective = sum(
        1 for r in runner.records if r.is_effective and not r.was_rejected
    )
    print(f"wrote {args.output}")
    print(f"policy:            {args.policy}")
    print(f"seed:              {seed}")
    print(f"steps simulated:   {runner.state.step}")
    print(f"final workers:     {runner.state.worker_count()}")
    print(f"episode return:    {runner.total_reward}")
    print(f"actions issued:    {len(runner.records)}")
    print(f"effective actions: {effective}")
    print(f"rejected actions:  {rejected}")
    return EXIT_OK


# --------------------------------------------------------------- train


def _write_curve_csv(path: str, curve, manifest: RunManifest) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# manifest: {manifest.to_json()}\n")
        writer = csv.writer(f)
        writer.writerow(
            [
                "episode",
                "return",
                "total_loss",
                "policy_loss",
                "value_loss",
                "entropy_loss",
            ]
        )
        for e in curve.episodes:
            writer.writerow(
                [
                    e.episode,
                    repr(float(e.ret)),
                    repr(float(e.total_loss)),
                    repr(float(e.policy_loss)),
                    repr(float(e.value_loss)),
                    repr(float(e.entropy_loss)),
                ]
            )


def cmd_train(args) -> int:
    try:
        sim_cfg, train_cfg = load_configs(args.config)
    except (ConfigError, SimConfigError) as exc:
        _print_err(f"config error: {exc}")
        return EXIT_RUNTIME
    spec_text = args.spec or PRESETS[
        "level1" if args.interface == "raw" else "level4"
    ]
    try:
        spec = parse_spec(spec_text)
    except SpecParseError as exc:
        _print_err(f"bad spec: {exc}")
        return EXIT_INPUT
    if spec.interface != args.interface:
        _print_err(
            f"spec interface {spec.interface!r} does not match "
            f"requested interface {args.interface!r}"
        )
        return EXIT_INPUT
    try:
        train_cfg.seed = env_seed(
            args.seed if args.seed is not None else train_cfg.seed
        )
    except ConfigError as exc:
        _print_err(str(exc))
        return EXIT_RUNTIME
    if args.episodes < 0:
        _print_err("--episodes must be >= 0")
        return EXIT_RUNTIME

    try:
        os.makedirs(args.output_dir, exist_ok=True)
    except OSError as exc:
        _print_err(f"cannot create {args.output_dir!r}: {exc}")
        return EXIT_RUNTIME

    curve = run_experiment(
        args.interface, args.episodes, train_cfg, spec, sim_cfg
    )
    manifest = RunManifest(
        subcommand="train",
        spec=format_spec(spec),
        config_path=args.config or "",
        seed=train_cfg.seed,
        output_dir=args.output_dir,
        parameters={
            "interface": args.interface,
            "episodes": args.episodes,
        },
    )
    csv_path = os.path.join(args.output_dir, f"curve_{args.interface}.csv")
    svg_path = os.path.join(args.output_dir, f"curve_{args.interface}.svg")
    _write_curve_csv(csv_path, curve, manifest)
    plotting.save_learning_curve(
        {f"{args.interface} interface": curve.returns()},
        svg_path,
        title=f"Training curve, {format_spec(spec)}",
        manifest=manifest.to_json(),
    )
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    if curve.episodes:
        first = curve.returns()[:10]
        last = curve.returns()[-10:]
        print(f"episodes:               {len(curve.episodes)}")
        print(f"mean return, first 10:  {sum(first) / len(first):.3f}")
        print(f"mean return, final 10:  {sum(last) / len(last):.3f}")
    else:
        print("episodes:               0")
    return EXIT_OK


# ------------------------------------------------------------- analyze


def _load_and_analyze(path: str):
    with open(path, "rb") as f:
        log = replay.read_log(f.read())
    return log, replay.analyze_log(log, label=os.path.basename(path))


def _metric_lines(report) -> list[str]:
    lines = []
    for side, m in report.sides.items():
        lines.append(f"  side {side!r}:")
        rows = [
            ("APM", m.apm, "{:.2f}"),
            ("EPM", m.epm, "{:.2f}"),
            ("camera ops (CO)", m.co, "{:.2f}"),
            ("all effective ops (AO)", m.ao, "{:.2f}"),
            ("non-camera rate (NCR)", m.ncr, "{:.4f}"),
            ("non-camera EPM", m.nc_epm, "{:.2f}"),
        ]
        for name, val, fmt in rows:
            shown = "-" if val is None else fmt.format(val)
            lines.append(f"    {name:<24}{shown}")
    return lines


def cmd_analyze(args) -> int:
    try:
        with ThreadPoolExecutor(max_workers=max(args.workers, 1)) as pool:
            results = list(pool.map(_load_and_analyze, args.logs))
    except FileNotFoundError as exc:
        _print_err(f"cannot read log: {exc}")
        return EXIT_INPUT
    except (FormatError, DegenerateLog) as exc:
        _print_err(f"bad log: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _print_err(f"cannot read log: {exc}")
        return EXIT_RUNTIME

    reports = []
    for (log, report), path in zip(results, args.logs):
        reports.append(report)
        print(f"{path} ({log.duration_seconds():.0f} game seconds)")
        print("\n".join(_metric_lines(report)))
    if len(reports) > 1:
        try:
            agg = replay.aggregate(reports)
        except DegenerateInput as exc:
            print(f"aggregate: skipped ({exc})")
            return EXIT_OK
        print(
            f"aggregate over {agg.n_reports} logs"
            f" ({agg.n_excluded} incomplete excluded)"
        )
        print("\n".join(_metric_lines(agg)))
    return EXIT_OK


# -------------------------------------------------- verify tables


def _table_checks(csv_dir: str):
    """Yield (label, computed, expected, tolerance) for every target."""
    for race, targets in TABLE_TARGETS.items():
        path = os.path.join(csv_dir, TABLE_FILES[race])
        reports = replay.ingest_table_csv(path)
        agg = replay.aggregate(reports)
        for metric, (expected, tol) in targets.items():
            if metric.startswith("nc_epm_"):
                side = metric.removeprefix("nc_epm_")
                value = agg.sides[side].nc_epm
            else:
                side, attr = replay.TABLE_COLUMNS[metric]
                value = getattr(agg.sides[side], attr)
            yield f"{race}.{metric}", value, expected, tol
        # every complete row's NCR must equal 1 - CO/AO
        for report in reports:
            if not report.complete():
                continue
            for side, m in report.sides.items():
                yield (
                    f"{race}.row{report.label}.ncr_{side}",
                    1.0 - m.co / m.ao,
                    m.ncr,
                    0.001,
                )


def cmd_verify_tables(args) -> int:
    csv_dir = args.csv_dir or packaged_data_dir()
    failures = 0
    total = 0
    try:
        for label, value, expected, tol in _table_checks(csv_dir):
            total += 1
            ok = abs(value - expected) <= tol
            status = "PASS" if ok else "FAIL"
            if not ok:
                failures += 1
            if ok and label.count(".row"):
                continue  # per-row checks are only printed on failure
            print(
                f"{status} {label}: computed {value:.4f},"
                f" expected {expected} (tolerance {tol})"
            )
    except FileNotFoundError as exc:
        _print_err(f"missing table CSV: {exc}")
        return EXIT_INPUT
    except (FormatError, DegenerateInput) as exc:
        _print_err(f"bad table CSV: {exc}")
        return EXIT_INPUT
    reports = replay.ingest_table_csv(
        os.path.join(csv_dir, TABLE_FILES["protoss"])
    )
    ratios = replay.apm_epm_ratio(reports)
    for side, r in ratios.items():
        print(
            f"info protoss.apm_epm_ratio[{side}]:"
            f" ratio of means {r['ratio_of_means']:.4f},"
            f" mean of ratios {r['mean_of_ratios']:.4f}"
        )
    print(f"{total - failures}/{total} checks passed")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


# -------------------------------------------------------------- report


def cmd_report(args) -> int:
    csv_dir = args.csv_dir or packaged_data_dir()
    try:
        os.makedirs(args.output_dir, exist_ok=True)
    except OSError as exc:
        _print_err(f"cannot create {args.output_dir!r}: {exc}")
        return EXIT_RUNTIME
    manifest = RunManifest(
        subcommand="report",
        config_path="",
        seed=0,
        output_dir=args.output_dir,
        parameters={"csv_dir": csv_dir, "logs": list(args.logs)},
    )

    try:
        tables = {
            race: replay.aggregate(
                replay.ingest_table_csv(os.path.join(csv_dir, fname))
            )
            for race, fname in TABLE_FILES.items()
        }
    except FileNotFoundError as exc:
        _print_err(f"missing table CSV: {exc}")
        return EXIT_INPUT
    except (FormatError, DegenerateInput) as exc:
        _print_err(f"bad table CSV: {exc}")
        return EXIT_INPUT

    summary_path = os.path.join(args.output_dir, "summary.csv")
    with open(summary_path, "w", newline="") as f:
        f.write(f"# manifest: {manifest.to_json()}\n")
        writer = csv.writer(f)
        writer.writerow(
            ["source", "side", "apm", "epm", "co", "ao", "ncr", "nc_epm"]
        )
        for race, agg in tables.items():
            for side, m in agg.sides.items():
                writer.writerow(
                    [race, side]
                    + [
                        "" if v is None else f"{v:.4f}"
                        for v in (m.apm, m.epm, m.co, m.ao, m.ncr, m.nc_epm)
                    ]
                )

    races = list(tables)
    bars_path = os.path.join(args.output_dir, "rates.svg")
    plotting.save_metric_bars(
        races,
        {
            "agent EPM": [tables[r].sides["agent"].epm for r in races],
            "player EPM": [tables[r].sides["player"].epm for r in races],
            "agent APM": [tables[r].sides["agent"].apm for r in races],
            "player APM": [tables[r].sides["player"].apm for r in races],
        },
        bars_path,
        title="Mean action rates per matchup table",
        ylabel="actions per minute",
        manifest=manifest.to_json(),
    )
    written = [summary_path, bars_path]

    for i, log_path in enumerate(args.logs):
        try:
            log, report = _load_and_analyze(log_path)
        except (OSError, FormatError, DegenerateLog) as exc:
            _print_err(f"bad log {log_path!r}: {exc}")
            return EXIT_INPUT
        for side in log.header.sides:
            m = report.sides[side]
            if m.instant_apm is None:
                continue
            seconds = list(range(1, len(m.instant_apm) + 1))
            out = os.path.join(
                args.output_dir, f"timeline_{i}_{side}.svg"
            )
            plotting.save_rate_timeline(
                seconds,
                list(m.instant_apm),
                list(m.instant_epm),
                out,
                title=f"{os.path.basename(log_path)} ({side})",
                manifest=manifest.to_json(),
            )
            written.append(out)

    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairrts",
        description=(
            "Economy-prototype experiments: simulate, train, and analyze "
            "action-rate fairness constraints."
        ),
    )
    parser.add_argument(
        "--dump-defaults",
        action="store_true",
        help="print the default configuration file and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p_spec = sub.add_parser("spec", help="parse and pretty-print a problem spec")
    p_spec.add_argument("text", nargs="?", help="spec string, e.g. 'SC^r_3{E_180, C_1, P_1.00}'")
    p_spec.add_argument("--preset", help="named preset (level1..level4)")

    p_sim = sub.add_parser("sim", help="run one episode and write a replay log")
    p_sim.add_argument("--config", help="configuration file")
    p_sim.add_argument("--seed", type=int, default=1)
    p_sim.add_argument(
        "--policy", choices=("scripted", "random"), default="scripted"
    )
    p_sim.add_argument("--spec", default=PRESETS["level1"])
    p_sim.add_argument("--steps", type=int, help="override episode length")
    p_sim.add_argument(
        "--step-mul",
        type=int,
        default=4,
        help="simulation steps per agent decision",
    )
    p_sim.add_argument("-o", "--output", default="episode.frlog")

    p_train = sub.add_parser("train", help="train an agent and write its curve")
    p_train.add_argument("interface", choices=("raw", "human"))
    p_train.add_argument("--episodes", type=int, default=100)
    p_train.add_argument("--spec", help="problem spec (defaults per interface)")
    p_train.add_argument("--config", help="configuration file")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("-o", "--output-dir", default=".")

    p_an = sub.add_parser("analyze", help="compute metrics from replay logs")
    p_an.add_argument("logs", nargs="+")
    p_an.add_argument(
        "--workers", type=int, default=4, help="parallel log readers"
    )

    p_ver = sub.add_parser(
        "verify-paper-tables",
        help="check the bundled statistics tables against expected means",
    )
    p_ver.add_argument(
        "csv_dir", nargs="?", help="directory of table CSVs (default: bundled)"
    )

    p_rep = sub.add_parser(
        "report", help="emit CSV summary and SVG figures"
    )
    p_rep.add_argument("--csv-dir", help="directory of table CSVs")
    p_rep.add_argument("--logs", nargs="*", default=[])
    p_rep.add_argument("-o", "--output-dir", default="report")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_defaults:
        sys.stdout.write(dump_defaults())
        return EXIT_OK
    handlers = {
        "spec": cmd_spec,
        "sim": cmd_sim,
        "train": cmd_train,
        "analyze": cmd_analyze,
        "verify-paper-tables": cmd_verify_tables,
        "report": cmd_report,
    }
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
