"""Command-line surface.

Subcommands: evolve, robustness, simulate, report, genbench, serve,
worker.  Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import distrib
from .morphology import generate_benchmark, parse_morphology, render_morphology
from .orchestrator import (
    ALGORITHMS,
    CampaignConfig,
    DEFAULT_MORPHOLOGY_SEED,
    config_from_mapping,
    parse_config_text,
    resolve_grids,
    run_campaign,
)
from .physics import PhaseOffsetField, SimParams, TipTrace, fitness_displacement, simulate

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="voxevo", description="Evolve phase-offset controllers for voxel actuators")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_morphology_flags(p, required=True):
        group = p.add_mutually_exclusive_group(required=required)
        group.add_argument("--bench", type=int, metavar="K", help="benchmark morphology index (1..9)")
        group.add_argument("--morph", metavar="FILE", help="morphology document path")
        group.add_argument("--bench-set", action="store_true", help="all nine benchmark morphologies")

    def add_campaign_flags(p):
        p.add_argument("--algo", choices=ALGORITHMS, help="controller design engine")
        p.add_argument("--gens", type=int, help="generations per trial")
        p.add_argument("--pop", type=int, help="population size")
        p.add_argument("--trials", type=int, help="number of evolutionary trials")
        p.add_argument("--seed", type=int, required=True, help="base seed (trial i uses seed+i)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", metavar="FILE", help="experiment config document")
        p.add_argument("--jobs", type=int, help="local parallel evaluations (default 1)")
        p.add_argument("--server", metavar="ADDR", help="delegate evaluation to a distrib master")

    p = sub.add_parser("evolve", help="evolve controllers for one morphology or a set")
    add_campaign_flags(p)
    add_morphology_flags(p, required=False)

    p = sub.add_parser("robustness", help="evolve on the nine-benchmark set (aptitude fitness)")
    add_campaign_flags(p)

    p = sub.add_parser("simulate", help="simulate a morphology under a phase-field CSV")
    p.add_argument("--morph", required=True, metavar="FILE")
    p.add_argument("--phases", required=True, metavar="CSV", help="one value per voxel, x-fastest")
    p.add_argument("--out", required=True, metavar="TRACE", help="tip trace CSV destination")
    p.add_argument("--config", metavar="FILE", help="config document (sim.* block)")

    p = sub.add_parser("report", help="displacement of a stored tip trace, without re-simulation")
    p.add_argument("trace", metavar="TRACE", help="trace CSV from `simulate`")
    p.add_argument("--freq", type=float, default=1.0, help="actuation frequency used (default 1)")
    p.add_argument("--voxel-len", type=float, default=1.0, help="voxel length unit (default 1)")

    p = sub.add_parser("genbench", help="write a benchmark morphology document")
    p.add_argument("--bench", type=int, required=True, metavar="K")
    p.add_argument("--seed", type=int, default=DEFAULT_MORPHOLOGY_SEED)
    p.add_argument("--out", metavar="FILE", help="destination (stdout when omitted)")

    p = sub.add_parser("serve", help="run a standing evaluation broker")
    p.add_argument("--bind", metavar="ADDR", help="host:port (default $VOXEVO_BIND)")
    p.add_argument("--timeout", type=float, default=distrib.DEFAULT_JOB_TIMEOUT,
                   help="seconds before an unacknowledged job is re-queued")

    p = sub.add_parser("worker", help="evaluate jobs for a master")
    p.add_argument("--server", required=True, metavar="ADDR")
    p.add_argument("--morph", action="append", default=[], metavar="FILE",
                   help="pre-register a file morphology (repeatable)")
    p.add_argument("--id", dest="worker_id", help="worker id for logs")
    return parser


def _campaign_config(args) -> CampaignConfig:
    mapping = {}
    if args.config:
        mapping.update(parse_config_text(Path(args.config).read_text()))
    if args.algo:
        mapping["algorithm"] = args.algo
    if getattr(args, "bench", None) is not None:
        mapping["morphology"] = f"bench:{args.bench}"
    if getattr(args, "morph", None):
        mapping["morphology"] = f"file:{args.morph}"
    if getattr(args, "bench_set", False) or args.command == "robustness":
        mapping["morphology"] = "bench-set"
    if args.gens is not None:
        mapping["generations"] = args.gens
    if args.pop is not None:
        mapping["pop_size"] = args.pop
    if args.trials is not None:
        mapping["trials"] = args.trials
    mapping["base_seed"] = args.seed
    mapping["out_dir"] = args.out
    if args.jobs is not None:
        mapping["jobs"] = args.jobs
    cfg = config_from_mapping(mapping)
    if "morphology" not in mapping and args.config is None:
        raise UsageError("evolve: one of --bench/--morph/--bench-set (or a config file) is required")
    cfg.algorithms()  # validate algorithm names before any computation
    return cfg


def _remote_factory(server: str):
    def factory(grids, cfg: CampaignConfig):
        ids = [distrib.morphology_id_for(g, cfg.morphology_seed) for g in grids]
        return distrib.RemoteEvaluator(server, ids, cfg.sim)

    return factory


def _cmd_evolve(args) -> int:
    cfg = _campaign_config(args)
    factory = _remote_factory(args.server) if args.server else None
    results = run_campaign(cfg, evaluate_factory=factory)
    for algo, trials in results.items():
        for i, t in enumerate(trials):
            print(f"{algo} trial {i} seed {t.seed}: champion fitness {t.champion_fitness!r}")
    return 0


def _sim_params_from_config(path: str | None) -> SimParams:
    if not path:
        return SimParams()
    mapping = parse_config_text(Path(path).read_text())
    sim_keys = {k.split(".", 1)[1]: v for k, v in mapping.items() if k.startswith("sim.")}
    return SimParams(**sim_keys)


def _cmd_simulate(args) -> int:
    grid = parse_morphology(Path(args.morph).read_text(), id=Path(args.morph).name)
    params = _sim_params_from_config(args.config)
    phases = PhaseOffsetField.from_csv(Path(args.phases).read_text(), grid.dims)
    trace = simulate(grid, phases, params)
    Path(args.out).write_text(trace.to_csv())
    log.info("trace with %d samples written to %s", trace.t.size, args.out)
    return 0


def _cmd_report(args) -> int:
    trace = TipTrace.from_csv(Path(args.trace).read_text())
    params = SimParams(actuation_freq=args.freq, voxel_len=args.voxel_len)
    print(repr(fitness_displacement(trace, params)))
    return 0


def _cmd_genbench(args) -> int:
    grid = generate_benchmark(args.bench, args.seed)
    text = render_morphology(grid)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_serve(args) -> int:
    master = distrib.serve(args.bind, job_source=None, timeout=args.timeout)
    print(f"serving on {master.address}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        master.shutdown()
    return 0


def _cmd_worker(args) -> int:
    registry = distrib.MorphologyRegistry()
    for path in args.morph:
        mid = registry.register_file(Path(path).read_text())
        log.info("registered %s as %s", path, mid)
    distrib.worker_loop(args.server, registry, worker_id=args.worker_id)
    return 0


_COMMANDS = {
    "evolve": _cmd_evolve,
    "robustness": _cmd_evolve,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "genbench": _cmd_genbench,
    "serve": _cmd_serve,
    "worker": _cmd_worker,
}


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as err:
        print(f"voxevo {args.command}: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
