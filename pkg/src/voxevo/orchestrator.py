"""Experiment harness: controller evaluation, robustness aptitude,
complexity reporting, and reproducible multi-trial campaigns with CSV
outputs.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .controllers import (
    HYPERNEAT_NET,
    NEAT_CPPN,
    SGA_MATRIX,
    Controller,
    UnsupportedControllerError,
    deserialize_controller,
    serialize_controller,
)
from .hyperneat import SubstrateSpec
from .morphology import VoxelGrid, generate_benchmark, parse_morphology
from .neat import GenerationRecord, NeatConfig, NeatEngine
from .physics import NumericalDivergenceError, SimParams, fitness_displacement, simulate
from .sga import SgaConfig, SgaEngine

log = logging.getLogger(__name__)

ALGORITHMS = ("sga", "neat", "hyperneat")

# ordering-preserving penalty assigned when a simulation diverges
DIVERGENCE_PENALTY = -1.0e3

DEFAULT_MORPHOLOGY_SEED = 1234


def evaluate_controller(c: Controller, grid: VoxelGrid, params: SimParams) -> float:
    """Tip displacement of the controller's phase field on one grid; a
    diverging simulation scores the logged penalty sentinel instead of
    aborting."""
    field_ = c.phase_field(grid)
    try:
        trace = simulate(grid, field_, params)
    except NumericalDivergenceError as err:
        log.warning("simulation diverged on grid %s: %s", grid.id or grid.dims, err)
        return DIVERGENCE_PENALTY
    return fitness_displacement(trace, params)


def aptitude(displacements) -> float:
    """Robustness aptitude: unweighted mean of per-morphology displacements."""
    displacements = list(displacements)
    return sum(displacements) / len(displacements)


def evaluate_robustness(c: Controller, grids, params: SimParams) -> float:
    return aptitude(evaluate_controller(c, g, params) for g in grids)


def complexity_report(c: Controller) -> tuple[int, int]:
    """(hidden nodes, connections) of the controller network."""
    if c.kind == NEAT_CPPN:
        return c.payload.n_hidden(), c.payload.n_enabled_conns()
    if c.kind == HYPERNEAT_NET:
        return c.painted_net().complexity()
    raise UnsupportedControllerError(f"complexity_report does not apply to {c.kind}")


@dataclass
class CampaignConfig:
    algorithm: str = "neat"  # one of ALGORITHMS, or a comma-separated list
    morphology: str = "bench:1"  # bench:K | bench-set | file:PATH
    trials: int = 1
    base_seed: int = 1
    generations: int | None = None  # override both engine configs when set
    pop_size: int | None = None
    out_dir: str = "out"
    jobs: int = 1
    morphology_seed: int = DEFAULT_MORPHOLOGY_SEED
    sim: SimParams = field(default_factory=SimParams)
    neat: NeatConfig = field(default_factory=NeatConfig)
    sga: SgaConfig = field(default_factory=SgaConfig)
    substrate: SubstrateSpec = field(default_factory=SubstrateSpec)

    def algorithms(self) -> list[str]:
        names = [a.strip() for a in self.algorithm.split(",") if a.strip()]
        for a in names:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; valid: {', '.join(ALGORITHMS)}")
        return names

    def neat_config(self, seed: int) -> NeatConfig:
        cfg = self.neat
        if self.generations is not None:
            cfg = replace(cfg, generations=self.generations)
        if self.pop_size is not None:
            cfg = replace(cfg, pop_size=self.pop_size)
        return replace(cfg, seed=seed)

    def sga_config(self, seed: int) -> SgaConfig:
        cfg = self.sga
        if self.generations is not None:
            cfg = replace(cfg, generations=self.generations)
        if self.pop_size is not None:
            cfg = replace(cfg, pop_size=self.pop_size)
        return replace(cfg, seed=seed)


def _coerce(value: str):
    low = value.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    if low.lower() in ("none", "auto"):
        return None
    try:
        return int(low)
    except ValueError:
        pass
    try:
        return float(low)
    except ValueError:
        pass
    return low


def parse_config_text(text: str) -> dict:
    """Flat `key = value` document with # comments; dotted keys address the
    sim/neat/sga/substrate blocks."""
    out: dict[str, object] = {}
    for i, ln in enumerate(text.splitlines()):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise ValueError(f"config line {i + 1}: expected 'key = value', got {ln!r}")
        key, _, value = ln.partition("=")
        out[key.strip()] = _coerce(value)
    return out


def config_from_mapping(mapping: dict) -> CampaignConfig:
    blocks = {"sim": {}, "neat": {}, "sga": {}, "substrate": {}}
    top: dict[str, object] = {}
    top_names = {f.name for f in fields(CampaignConfig)} - set(blocks)
    for key, value in mapping.items():
        if "." in key:
            block, _, name = key.partition(".")
            if block not in blocks:
                raise ValueError(f"unknown config block {block!r}")
            blocks[block][name] = value
        elif key in top_names:
            top[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    return CampaignConfig(
        **top,
        sim=SimParams(**blocks["sim"]),
        neat=NeatConfig(**blocks["neat"]),
        sga=SgaConfig(**blocks["sga"]),
        substrate=SubstrateSpec(**blocks["substrate"]),
    )


def resolve_grids(cfg: CampaignConfig) -> list[VoxelGrid]:
    spec = cfg.morphology.strip()
    if spec == "bench-set":
        return [generate_benchmark(k, cfg.morphology_seed) for k in range(1, 10)]
    if spec.startswith("bench:"):
        return [generate_benchmark(int(spec.split(":", 1)[1]), cfg.morphology_seed)]
    if spec.startswith("file:"):
        path = Path(spec.split(":", 1)[1])
        return [parse_morphology(path.read_text(), id=path.name)]
    raise ValueError(f"unknown morphology spec {spec!r}")


def make_evaluator(grids, params: SimParams, jobs: int = 1):
    """Local in-process evaluation backend; with jobs > 1 controllers are
    scored on a thread pool (evaluation is pure, so results are identical
    to the sequential path)."""
    grids = list(grids)

    def eval_one(c: Controller) -> float:
        if len(grids) == 1:
            return evaluate_controller(c, grids[0], params)
        return evaluate_robustness(c, grids, params)

    def evaluate(controllers) -> list[float]:
        controllers = list(controllers)
        if jobs <= 1 or len(controllers) <= 1:
            return [eval_one(c) for c in controllers]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(eval_one, controllers))

    return evaluate


@dataclass
class TrialLog:
    algorithm: str
    seed: int
    records: list[GenerationRecord]
    champion: Controller
    champion_fitness: float
    wall_time: float
    restarts: int = 0


def _wrap(algorithm: str, genome, substrate: SubstrateSpec) -> Controller:
    if algorithm == "sga":
        return Controller.sga(genome)
    if algorithm == "neat":
        return Controller.neat(genome)
    return Controller.hyperneat(genome, substrate)


def build_engine(algorithm: str, cfg: CampaignConfig, grids, seed: int):
    if algorithm == "sga":
        return SgaEngine(cfg.sga_config(seed), grids[0])
    if algorithm == "neat":
        return NeatEngine(cfg.neat_config(seed), io_spec=(4, 1))
    if algorithm == "hyperneat":
        # bounded outputs: the paint rule's threshold/scale assumes CPPN
        # values of roughly unit magnitude
        return NeatEngine(cfg.neat_config(seed), io_spec=(4, 2), output_activation="sine")
    raise ValueError(f"unknown algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")


def run_trial(algorithm: str, grids, cfg: CampaignConfig, seed: int,
              evaluate_batch=None) -> TrialLog:
    """One evolutionary trial; the champion is the best individual ever
    evaluated, archived in serialized form."""
    if evaluate_batch is None:
        evaluate_batch = make_evaluator(grids, cfg.sim, cfg.jobs)
    engine = build_engine(algorithm, cfg, grids, seed)
    generations = engine.config.generations
    records: list[GenerationRecord] = []
    best_fitness = -np.inf
    best_controller: Controller | None = None
    started = time.perf_counter()
    for gen in range(generations):
        controllers = [_wrap(algorithm, g, cfg.substrate) for g in engine.population]
        fits = evaluate_batch(controllers)
        for genome, fit in zip(engine.population, fits):
            genome.fitness = float(fit)
        rec = engine.record()
        records.append(rec)
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fitness:
            best_fitness = float(fits[gen_best])
            best_controller = _wrap(algorithm, engine.population[gen_best].copy(), cfg.substrate)
        if gen < generations - 1:
            engine.advance()
    wall = time.perf_counter() - started
    log.info("trial %s seed=%d best=%.6g wall=%.1fs", algorithm, seed, best_fitness, wall)
    return TrialLog(
        algorithm=algorithm,
        seed=seed,
        records=records,
        champion=best_controller,
        champion_fitness=best_fitness,
        wall_time=wall,
        restarts=getattr(engine, "restarts", 0),
    )


TRIAL_CSV_HEADER = "generation,best_fitness,mean_fitness,n_species,champion_hidden_nodes,champion_connections"


def trial_csv(records) -> str:
    rows = [TRIAL_CSV_HEADER]
    for r in records:
        rows.append(
            f"{r.generation},{repr(float(r.best_fitness))},{repr(float(r.mean_fitness))},"
            f"{r.n_species},{r.champion_hidden_nodes},{r.champion_connections}"
        )
    return "\n".join(rows) + "\n"


def aggregate_csv(trials: list[TrialLog]) -> str:
    rows = ["generation,mean_best,std_best"]
    n_gens = min(len(t.records) for t in trials)
    for g in range(n_gens):
        best = np.array([t.records[g].best_fitness for t in trials], dtype=np.float64)
        std = float(best.std(ddof=1)) if best.size > 1 else 0.0
        rows.append(f"{g},{repr(float(best.mean()))},{repr(std)}")
    return "\n".join(rows) + "\n"


def complexity_csv(trials: list[TrialLog]) -> str:
    rows = ["trial,hidden_nodes,connections"]
    for i, t in enumerate(trials):
        hidden, conns = complexity_report(t.champion)
        rows.append(f"{i},{hidden},{conns}")
    return "\n".join(rows) + "\n"


def run_campaign(cfg: CampaignConfig, evaluate_factory=None) -> dict[str, list[TrialLog]]:
    """Run trials for every configured algorithm and write the result files.

    evaluate_factory(grids, cfg) may supply a custom evaluation backend
    (e.g. a distributed one); it defaults to the local evaluator.
    """
    algorithms = cfg.algorithms()
    grids = resolve_grids(cfg)
    out_root = Path(cfg.out_dir)
    results: dict[str, list[TrialLog]] = {}
    for algo in algorithms:
        out_dir = out_root if len(algorithms) == 1 else out_root / algo
        out_dir.mkdir(parents=True, exist_ok=True)
        if evaluate_factory is None:
            evaluator = make_evaluator(grids, cfg.sim, cfg.jobs)
        else:
            evaluator = evaluate_factory(grids, cfg)
        trials = []
        for i in range(cfg.trials):
            trial = run_trial(algo, grids, cfg, cfg.base_seed + i, evaluator)
            (out_dir / f"trial_{i}.csv").write_text(trial_csv(trial.records))
            (out_dir / f"champion_{i}.genome").write_text(serialize_controller(trial.champion))
            trials.append(trial)
        (out_dir / "aggregate.csv").write_text(aggregate_csv(trials))
        if algo != "sga":
            (out_dir / "complexity.csv").write_text(complexity_csv(trials))
        results[algo] = trials
    return results


def reevaluate_champion(path: Path, cfg: CampaignConfig) -> float:
    """Score a serialized champion exactly as the campaign did."""
    controller = deserialize_controller(Path(path).read_text())
    grids = resolve_grids(cfg)
    if len(grids) == 1:
        return evaluate_controller(controller, grids[0], cfg.sim)
    return evaluate_robustness(controller, grids, cfg.sim)
