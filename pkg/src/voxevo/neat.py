"""NEAT evolutionary engine over CPPN genomes.

Populations start minimal (no hidden nodes, inputs fully connected to
outputs) and complexify through structural mutation.  Innovation numbers
are tracked globally per engine; structurally identical genes created in
the same generation share a number so crossover can align topologies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cppn import ACTIVATION_NAMES, ConnGene, CppnGenome, HIDDEN, INPUT, NodeGene, OUTPUT

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeatConfig:
    pop_size: int = 50
    generations: int = 200
    compat_threshold: float = 3.0
    c_disjoint: float = 1.0
    c_weight: float = 0.5
    max_stagnation: int = 25
    survival_threshold: float = 0.2
    p_mut_activation: float = 0.4
    p_add_conn: float = 0.2
    p_del_conn: float = 0.1
    p_toggle_conn: float = 0.5
    p_add_node: float = 0.2
    p_del_node: float = 0.1
    p_weight_mutate: float = 0.8
    weight_sigma: float = 0.5
    p_weight_replace: float = 0.1
    weight_range: float = 8.0
    elitism: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in (
            "p_mut_activation", "p_add_conn", "p_del_conn", "p_toggle_conn",
            "p_add_node", "p_del_node", "p_weight_mutate", "p_weight_replace",
            "survival_threshold",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.pop_size < 2:
            raise ValueError("pop_size must be at least 2")
        if self.compat_threshold <= 0:
            raise ValueError("compat_threshold must be positive")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")


class InnovationTracker:
    """Issues node ids and innovation numbers; structural signatures seen
    within one generation reuse their numbers."""

    def __init__(self, next_node_id: int = 0, next_innovation: int = 0):
        self.next_node_id = next_node_id
        self.next_innovation = next_innovation
        self._conn_sigs: dict[tuple[int, int], int] = {}
        self._split_sigs: dict[int, tuple[int, int, int]] = {}

    def begin_generation(self) -> None:
        self._conn_sigs.clear()
        self._split_sigs.clear()

    def connection_innovation(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self._conn_sigs:
            self._conn_sigs[key] = self.next_innovation
            self.next_innovation += 1
        return self._conn_sigs[key]

    def split_innovations(self, conn_innovation: int) -> tuple[int, int, int]:
        """(new node id, incoming innovation, outgoing innovation) for
        splitting the identified connection."""
        if conn_innovation not in self._split_sigs:
            node_id = self.next_node_id
            self.next_node_id += 1
            in_innov = self.next_innovation
            out_innov = self.next_innovation + 1
            self.next_innovation += 2
            self._split_sigs[conn_innovation] = (node_id, in_innov, out_innov)
        return self._split_sigs[conn_innovation]

    def fresh_node_id(self) -> int:
        node_id = self.next_node_id
        self.next_node_id += 1
        return node_id


@dataclass
class Species:
    id: int
    representative: CppnGenome
    members: list[CppnGenome] = field(default_factory=list)
    best_fitness_history: list[float] = field(default_factory=list)
    stagnation_counter: int = 0


def init_population(config: NeatConfig, io_spec: tuple[int, int],
                    rng: np.random.Generator, tracker: InnovationTracker,
                    output_activation: str = "identity") -> list[CppnGenome]:
    """Minimal genomes: inputs fully connected to outputs, no hidden nodes;
    weights and biases uniform on [-1, 1].

    Output activations stay fixed through evolution (mutation only retargets
    hidden nodes): identity for phase-emitting CPPNs, but weight-painting
    CPPNs use tanh so the downstream threshold/scale rule sees the bounded
    outputs it was designed around.
    """
    n_in, n_out = io_spec
    if n_in < 1 or n_out < 1:
        raise ValueError("io_spec entries must be positive")
    tracker.next_node_id = max(tracker.next_node_id, n_in + n_out)
    population = []
    for _ in range(config.pop_size):
        nodes = [NodeGene(i, INPUT, "identity", 0.0) for i in range(n_in)]
        for o in range(n_out):
            nodes.append(NodeGene(n_in + o, OUTPUT, output_activation, float(rng.uniform(-1, 1))))
        conns = []
        for o in range(n_out):
            for i in range(n_in):
                innov = tracker.connection_innovation(i, n_in + o)
                conns.append(ConnGene(innov, i, n_in + o, float(rng.uniform(-1, 1)), True))
        population.append(CppnGenome(nodes=nodes, conns=conns))
    return population


def compatibility_distance(g1: CppnGenome, g2: CppnGenome, config: NeatConfig) -> float:
    """c_disjoint * (disjoint+excess)/N + c_weight * mean matching |dw|.

    Connection genes only; N is the larger gene count with no small-genome
    exemption."""
    w1 = {c.innovation: c.weight for c in g1.conns}
    w2 = {c.innovation: c.weight for c in g2.conns}
    matching = w1.keys() & w2.keys()
    non_matching = len(w1) + len(w2) - 2 * len(matching)
    n = max(len(w1), len(w2), 1)
    wbar = sum(abs(w1[i] - w2[i]) for i in matching) / len(matching) if matching else 0.0
    return config.c_disjoint * non_matching / n + config.c_weight * wbar


def speciate(population: list[CppnGenome], previous_species: list[Species],
             config: NeatConfig) -> list[Species]:
    """Assign genomes to species by representative distance, founding new
    species as needed; drop empty species, then stagnant ones while more
    than two would stay alive."""
    next_id = max((s.id for s in previous_species), default=-1) + 1
    species = [
        Species(
            id=s.id,
            representative=s.representative,
            members=[],
            best_fitness_history=list(s.best_fitness_history),
            stagnation_counter=s.stagnation_counter,
        )
        for s in sorted(previous_species, key=lambda s: s.id)
    ]
    for genome in population:
        for sp in species:
            if compatibility_distance(sp.representative, genome, config) < config.compat_threshold:
                sp.members.append(genome)
                break
        else:
            species.append(Species(id=next_id, representative=genome, members=[genome]))
            next_id += 1

    alive = [sp for sp in species if sp.members]
    for sp in alive:
        sp.representative = sp.members[0]

    stagnant = [sp for sp in alive if sp.stagnation_counter > config.max_stagnation]
    # oldest/worst stagnant species go first; always keep at least two alive
    stagnant.sort(key=lambda s: (max(s.best_fitness_history, default=0.0), -s.id))
    for sp in stagnant:
        if len(alive) > 2:
            alive.remove(sp)
            log.info("species %d eliminated after %d stagnant generations", sp.id, sp.stagnation_counter)
    return alive


def update_stagnation(species: list[Species]) -> None:
    """Record each species' best fitness for this generation and advance its
    stagnation counter."""
    for sp in species:
        best = max(g.fitness for g in sp.members)
        if sp.best_fitness_history and best <= max(sp.best_fitness_history):
            sp.stagnation_counter += 1
        else:
            sp.stagnation_counter = 0
        sp.best_fitness_history.append(best)


def crossover(p1: CppnGenome, p2: CppnGenome, rng: np.random.Generator) -> CppnGenome:
    """NEAT crossover: matching genes picked per-parent at random,
    disjoint/excess inherited from the fitter parent (ties broken randomly).
    The child's structure equals the fitter parent's, so acyclicity is
    inherited."""
    f1 = p1.fitness if p1.fitness is not None else 0.0
    f2 = p2.fitness if p2.fitness is not None else 0.0
    if f1 > f2:
        fit, other = p1, p2
    elif f2 > f1:
        fit, other = p2, p1
    else:
        fit, other = (p1, p2) if rng.random() < 0.5 else (p2, p1)

    other_conns = {c.innovation: c for c in other.conns}
    conns = []
    for c in fit.conns:
        pick = other_conns.get(c.innovation)
        if pick is not None and rng.random() < 0.5:
            conns.append(replace(pick, src=c.src, dst=c.dst))
        else:
            conns.append(replace(c))
    other_nodes = {n.id: n for n in other.nodes}
    nodes = []
    for n in fit.nodes:
        pick = other_nodes.get(n.id)
        if pick is not None and pick.role == n.role and rng.random() < 0.5:
            nodes.append(replace(pick))
        else:
            nodes.append(replace(n))
    return CppnGenome(nodes=nodes, conns=conns)


def _would_cycle(genome: CppnGenome, src: int, dst: int) -> bool:
    """True if adding src->dst creates a cycle (path dst -> src exists)."""
    if src == dst:
        return True
    out: dict[int, list[int]] = {}
    for c in genome.conns:
        out.setdefault(c.src, []).append(c.dst)
    stack = [dst]
    seen = set()
    while stack:
        nid = stack.pop()
        if nid == src:
            return True
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(out.get(nid, ()))
    return False


def mutate(genome: CppnGenome, config: NeatConfig, rng: np.random.Generator,
           tracker: InnovationTracker) -> CppnGenome:
    """Apply each mutation operator independently with its configured
    probability; inapplicable operators are skipped silently."""
    g = genome.copy()
    g.fitness = None
    wr = config.weight_range

    for c in g.conns:
        r = rng.random()
        if r < config.p_weight_mutate:
            c.weight = float(np.clip(c.weight + rng.normal(0.0, config.weight_sigma), -wr, wr))
        elif r < config.p_weight_mutate + config.p_weight_replace:
            c.weight = float(rng.uniform(-1, 1))
    for n in g.nodes:
        if n.role == INPUT:
            continue
        r = rng.random()
        if r < config.p_weight_mutate:
            n.bias = float(np.clip(n.bias + rng.normal(0.0, config.weight_sigma), -wr, wr))
        elif r < config.p_weight_mutate + config.p_weight_replace:
            n.bias = float(rng.uniform(-1, 1))

    if rng.random() < config.p_mut_activation:
        hidden = [n for n in g.nodes if n.role == HIDDEN]
        if hidden:
            node = hidden[int(rng.integers(len(hidden)))]
            node.activation = ACTIVATION_NAMES[int(rng.integers(len(ACTIVATION_NAMES)))]

    if rng.random() < config.p_add_conn:
        existing = g.conn_keys()
        targets = [n.id for n in g.nodes if n.role != INPUT]
        candidates = []
        for src in (n.id for n in g.nodes):
            for dst in targets:
                if (src, dst) not in existing and not _would_cycle(g, src, dst):
                    candidates.append((src, dst))
        if candidates:
            candidates.sort()
            src, dst = candidates[int(rng.integers(len(candidates)))]
            innov = tracker.connection_innovation(src, dst)
            g.conns.append(ConnGene(innov, src, dst, float(rng.uniform(-1, 1)), True))

    if rng.random() < config.p_del_conn and g.conns:
        del g.conns[int(rng.integers(len(g.conns)))]

    if rng.random() < config.p_toggle_conn and g.conns:
        c = g.conns[int(rng.integers(len(g.conns)))]
        c.enabled = not c.enabled

    if rng.random() < config.p_add_node:
        enabled = [c for c in g.conns if c.enabled]
        if enabled:
            old = enabled[int(rng.integers(len(enabled)))]
            node_id, in_innov, out_innov = tracker.split_innovations(old.innovation)
            if any(n.id == node_id for n in g.nodes):
                # same split re-applied to one genome (re-enabled and split
                # again): fall back to fresh numbers
                node_id = tracker.fresh_node_id()
                in_innov = tracker.connection_innovation(old.src, node_id)
                out_innov = tracker.connection_innovation(node_id, old.dst)
            old.enabled = False
            act = ACTIVATION_NAMES[int(rng.integers(len(ACTIVATION_NAMES)))]
            g.nodes.append(NodeGene(node_id, HIDDEN, act, 0.0))
            g.conns.append(ConnGene(in_innov, old.src, node_id, 1.0, True))
            g.conns.append(ConnGene(out_innov, node_id, old.dst, old.weight, True))

    if rng.random() < config.p_del_node:
        hidden = [n for n in g.nodes if n.role == HIDDEN]
        if hidden:
            node = hidden[int(rng.integers(len(hidden)))]
            g.nodes = [n for n in g.nodes if n.id != node.id]
            g.conns = [c for c in g.conns if c.src != node.id and c.dst != node.id]

    return g


def _largest_remainder_quotas(shares: list[float], total: int) -> list[int]:
    s = sum(shares)
    if s <= 0:
        shares = [1.0] * len(shares)
        s = float(len(shares))
    raw = [total * v / s for v in shares]
    quotas = [int(np.floor(r)) for r in raw]
    remainder = total - sum(quotas)
    by_frac = sorted(range(len(raw)), key=lambda i: (-(raw[i] - quotas[i]), i))
    for i in by_frac[:remainder]:
        quotas[i] += 1
    return quotas


def reproduce(species: list[Species], config: NeatConfig, rng: np.random.Generator,
              tracker: InnovationTracker) -> list[CppnGenome]:
    """Fitness-share offspring quotas, truncation selection inside each
    species, per-species champion elitism, crossover plus mutation."""
    species = [sp for sp in sorted(species, key=lambda s: s.id) if sp.members]
    if not species:
        raise TotalExtinctionError("no species left to reproduce")
    tracker.begin_generation()

    all_fits = [g.fitness for sp in species for g in sp.members]
    floor_fit = min(all_fits)
    shares = [float(np.mean([g.fitness - floor_fit for g in sp.members])) for sp in species]
    quotas = _largest_remainder_quotas(shares, config.pop_size)

    next_pop: list[CppnGenome] = []
    for sp, quota in zip(species, quotas):
        if quota == 0:
            continue
        ranked = sorted(sp.members, key=lambda g: -g.fitness)
        pool = ranked[: max(1, int(np.ceil(config.survival_threshold * len(ranked))))]
        produced = 0
        if len(sp.members) >= 3 and config.elitism > 0:
            elite = ranked[0].copy()
            next_pop.append(elite)
            produced += 1
        while produced < quota:
            p1 = pool[int(rng.integers(len(pool)))]
            p2 = pool[int(rng.integers(len(pool)))]
            child = mutate(crossover(p1, p2, rng), config, rng, tracker)
            next_pop.append(child)
            produced += 1
    return next_pop[: config.pop_size]


class TotalExtinctionError(RuntimeError):
    """Every species was eliminated; the caller should restart."""


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    n_species: int
    champion_hidden_nodes: int
    champion_connections: int


class NeatEngine:
    """Owns the RNG, innovation tracker, population, and species list.

    Per generation: the caller evaluates `population`, then calls
    `advance()`.  All stochastic choices flow from the single seeded
    generator, so runs are reproducible."""

    def __init__(self, config: NeatConfig, io_spec: tuple[int, int] = (4, 1),
                 output_activation: str = "identity"):
        self.config = config
        self.io_spec = io_spec
        self.output_activation = output_activation
        self.rng = np.random.default_rng(config.seed)
        self.tracker = InnovationTracker()
        self.tracker.begin_generation()
        self.population = init_population(config, io_spec, self.rng, self.tracker,
                                          output_activation)
        self.species = speciate(self.population, [], config)
        self.generation = 0
        self.restarts = 0

    def champion(self) -> CppnGenome:
        return max(self.population, key=lambda g: g.fitness)

    def record(self) -> GenerationRecord:
        champ = self.champion()
        fits = [g.fitness for g in self.population]
        return GenerationRecord(
            generation=self.generation,
            best_fitness=champ.fitness,
            mean_fitness=float(np.mean(fits)),
            n_species=len(self.species),
            champion_hidden_nodes=champ.n_hidden(),
            champion_connections=champ.n_enabled_conns(),
        )

    def advance(self) -> None:
        """Consume the current generation's fitnesses and produce the next
        population."""
        if any(g.fitness is None for g in self.population):
            raise ValueError("advance() requires every genome to carry a fitness")
        update_stagnation(self.species)
        try:
            self.population = reproduce(self.species, self.config, self.rng, self.tracker)
        except TotalExtinctionError:
            log.warning("total extinction at generation %d; restarting population", self.generation)
            self.restarts += 1
            self.tracker.begin_generation()
            self.population = init_population(self.config, self.io_spec, self.rng, self.tracker,
                                              self.output_activation)
            self.species = []
        self.species = speciate(self.population, self.species, self.config)
        self.generation += 1
