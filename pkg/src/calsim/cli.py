"""Command-line entry point: ``calsim <subcommand> ...``.

Exit codes: 0 success, 1 episode failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from . import __version__
from .benchmark import SuiteError, load_suite, run_benchmark, suite_config, summary_table
from .config import ConfigError, dump, resolve
from .controller import ziegler_nichols_gains
from .infractions import count_by_kind
from .scenarios import ScenarioError, load_scenario
from .simulation import run_episode
from .town import TownError, load_town
from .tuning import ProbePlant, probe

log = logging.getLogger("calsim")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML config file (controller/vehicle/perception/episode sections)")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value; bare keys refer to the controller section")
    p.add_argument("--perception", help="clean | train | test | path to a perception YAML file")
    p.add_argument("--cruise-cap", type=float, metavar="KMH")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", metavar="DIR")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="calsim", description="Affordance-driven urban driving simulator and benchmark.")
    ap.add_argument("--version", action="version", version=f"calsim {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    ep = sub.add_parser("run-episode", help="run one scenario and write its trace")
    ep.add_argument("--scenario", default="demo", help="built-in scenario name or scenario file")
    ep.add_argument("--town", help="replace the scenario's town (built-in name or town file)")
    _common(ep)

    bm = sub.add_parser("run-benchmark", help="run a benchmark suite and write report files")
    bm.add_argument("--suite", default="desk", help="built-in suite name or suite file")
    bm.add_argument("--town", action="append", help="restrict/replace the suite towns (repeatable)")
    bm.add_argument("--parallel", type=int, default=1, metavar="N")
    bm.add_argument("--episodes", type=int, help="episodes per cell (default from the suite)")
    bm.add_argument("--no-fair", action="store_true", help="disable the 20 km/h cruise cap")
    _common(bm)

    tp = sub.add_parser("tune-probe", help="ultimate-gain oscillation probe and gain formulas")
    tp.add_argument("--ku", type=float)
    tp.add_argument("--tu", type=float)
    tp.add_argument("--kp-max", type=float, default=50.0)
    tp.add_argument("--kp-start", type=float, default=0.05)
    tp.add_argument("--lag-steps", type=int, default=ProbePlant.lag_steps)
    tp.add_argument("--classical", action="store_true", help="classical gain formulas instead of the stored ones")

    cf = sub.add_parser("config", help="configuration utilities")
    cf_sub = cf.add_subparsers(dest="config_cmd", parser_class=_Parser)
    d = cf_sub.add_parser("dump", help="print the effective config (defaults unless overridden)")
    d.add_argument("--config")
    d.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE")
    d.add_argument("--perception")
    d.add_argument("--cruise-cap", type=float)
    return ap


def _echo(out: Path, name: str, doc) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(yaml.safe_dump(doc, sort_keys=False))


def cmd_run_episode(args) -> int:
    scn = load_scenario(args.scenario)
    if args.town:
        scn = dataclasses.replace(scn, town=load_town(args.town))
        for lane in [scn.start.lane] + ([scn.goal.lane] if scn.goal else []):
            if lane not in scn.town.lanes:
                raise UsageError(f"lane {lane!r} of scenario {scn.name!r} not in town {args.town!r}")
    cfg = resolve(args.config, args.sets, base=scn.config, perception=args.perception, cruise_cap=args.cruise_cap)
    spec = scn.episode(cfg, seed=args.seed)
    out = Path(args.out)
    _echo(out, "config.yaml", {**cfg, "seed": spec.seed, "scenario": args.scenario,
                                "town": args.town or (scn.town if isinstance(scn.town, str) else scn.town.name)})
    trace = run_episode(spec)
    path = trace.write(out / "trace.csv")
    counts = {k: v for k, v in count_by_kind(trace.events).items() if v}
    print(f"{scn.name}: {'success' if trace.success else 'failure'} ({trace.reason}) "
          f"distance={trace.distance_m / 1000.0:.3f} km time={trace.duration:.2f} s "
          f"infractions={sum(counts.values())} {counts if counts else ''}".rstrip())
    log.info("trace written to %s", path)
    return EXIT_OK if trace.success else EXIT_FAIL


def cmd_run_benchmark(args) -> int:
    if args.parallel < 1:
        raise UsageError("--parallel must be >= 1")
    suite = load_suite(args.suite)
    kw = {}
    if args.town:
        kw["towns"] = tuple(args.town)
    if args.episodes is not None:
        kw["episodes"] = args.episodes
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.no_fair:
        kw["fair"] = False
    try:
        suite = dataclasses.replace(suite, **kw)
    except SuiteError as exc:
        raise UsageError(str(exc)) from exc
    for town in suite.towns:
        load_town(town)
    cfg = suite_config(suite, resolve(args.config, args.sets, perception=args.perception,
                                      cruise_cap=args.cruise_cap))
    out = Path(args.out)
    _echo(out, "config.yaml", cfg)
    _echo(out, "suite.yaml", {**dataclasses.asdict(suite), "tasks": list(suite.tasks),
                              "tiers": list(suite.tiers), "towns": list(suite.towns)})
    report = run_benchmark(suite, cfg, parallel=args.parallel,
                           progress=lambda r: log.info("%s [%s] %s", r.id, r.tier, r.reason))
    report.write(out)
    print(summary_table(report))
    return EXIT_OK


def cmd_tune_probe(args) -> int:
    if (args.ku is None) != (args.tu is None):
        raise UsageError("--ku and --tu must be given together")
    if args.ku is not None:
        try:
            g = ziegler_nichols_gains(args.ku, args.tu, args.classical)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        print(f"Ku={args.ku:g} Tu={args.tu:g} -> kp={g.kp:g} ki={g.ki:g} kd={g.kd:g}")
        return EXIT_OK
    res = probe(ProbePlant(lag_steps=args.lag_steps), kp_start=args.kp_start, kp_max=args.kp_max,
                classical=args.classical)
    if not res.conclusive:
        print(f"inconclusive: {res.message}")
        return EXIT_FAIL
    g = res.gains
    print(f"Ku={res.ku:.6g} Tu={res.tu:.6g} -> kp={g.kp:.6g} ki={g.ki:.6g} kd={g.kd:.6g} ({res.message})")
    return EXIT_OK


def cmd_config(args) -> int:
    if args.config_cmd != "dump":
        raise UsageError("usage: calsim config dump [--config FILE] [--set KEY=VALUE ...]")
    cfg = resolve(args.config, args.sets, perception=args.perception, cruise_cap=args.cruise_cap)
    sys.stdout.write(dump(cfg))
    return EXIT_OK


COMMANDS = {"run-episode": cmd_run_episode, "run-benchmark": cmd_run_benchmark,
            "tune-probe": cmd_tune_probe, "config": cmd_config}


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if not args.cmd:
            raise UsageError("missing subcommand (run-episode, run-benchmark, tune-probe, config dump)")
        return COMMANDS[args.cmd](args)
    except (UsageError, ConfigError, ScenarioError, SuiteError, TownError) as exc:
        print(f"calsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
