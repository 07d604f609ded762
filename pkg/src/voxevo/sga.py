"""Standard-GA baseline: evolves the per-voxel phase matrix directly.

Genomes are dense real arrays over all lattice positions of the target
grid (x-fastest), every entry kept inside [-2*pi, 2*pi].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .morphology import VoxelGrid
from .neat import GenerationRecord
from .physics import TWO_PI, PhaseOffsetField


@dataclass(frozen=True)
class SgaConfig:
    pop_size: int = 50
    generations: int = 200
    p_crossover: float = 0.9
    p_mutation: float = 0.1
    tournament_size: int = 3
    elitism: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("p_crossover", "p_mutation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.pop_size < 2:
            raise ValueError("pop_size must be at least 2")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")


@dataclass
class MatrixGenome:
    values: np.ndarray  # flat, x-fastest, one entry per lattice position
    dims: tuple[int, int, int]
    fitness: float | None = None

    def copy(self) -> "MatrixGenome":
        return MatrixGenome(values=self.values.copy(), dims=self.dims, fitness=self.fitness)

    def phase_field(self, dims: tuple[int, int, int] | None = None) -> PhaseOffsetField:
        """Positional application: the same flat matrix can drive any grid
        sharing this genome's dimensions."""
        target = dims or self.dims
        return PhaseOffsetField.from_flat(self.values, target)


def sga_init(config: SgaConfig, grid: VoxelGrid, rng: np.random.Generator | None = None) -> list[MatrixGenome]:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n = grid.dims[0] * grid.dims[1] * grid.dims[2]
    return [
        MatrixGenome(values=rng.uniform(-TWO_PI, TWO_PI, n), dims=grid.dims)
        for _ in range(config.pop_size)
    ]


def apply_two_point(a_vals: np.ndarray, b_vals: np.ndarray, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Swap the [i, j) segment between two flat arrays."""
    c1 = a_vals.copy()
    c2 = b_vals.copy()
    c1[i:j] = b_vals[i:j]
    c2[i:j] = a_vals[i:j]
    return c1, c2


def two_point_crossover(a: MatrixGenome, b: MatrixGenome, rng: np.random.Generator,
                        p_crossover: float = 0.9) -> tuple[MatrixGenome, MatrixGenome]:
    if a.values.shape != b.values.shape or a.dims != b.dims:
        raise ValueError("crossover requires genomes of identical shape")
    if rng.random() >= p_crossover:
        return a.copy(), b.copy()
    n = a.values.size
    cuts = rng.choice(n + 1, size=2, replace=False)
    i, j = int(cuts.min()), int(cuts.max())
    v1, v2 = apply_two_point(a.values, b.values, i, j)
    return (
        MatrixGenome(values=v1, dims=a.dims),
        MatrixGenome(values=v2, dims=b.dims),
    )


def sga_mutate(g: MatrixGenome, rng: np.random.Generator, p_mutation: float = 0.1) -> MatrixGenome:
    """With probability p_mutation, replace exactly one uniformly chosen
    entry by a fresh uniform draw on [-2*pi, 2*pi]."""
    out = g.copy()
    out.fitness = None
    if rng.random() < p_mutation:
        idx = int(rng.integers(out.values.size))
        out.values[idx] = rng.uniform(-TWO_PI, TWO_PI)
    return out


def _tournament(fitnesses: list[float], config: SgaConfig, rng: np.random.Generator) -> int:
    picks = rng.integers(len(fitnesses), size=config.tournament_size)
    best = int(picks[0])
    for p in picks[1:]:
        if fitnesses[int(p)] > fitnesses[best]:
            best = int(p)
    return best


def sga_step(population: list[MatrixGenome], fitnesses: list[float], config: SgaConfig,
             rng: np.random.Generator) -> list[MatrixGenome]:
    """Elitism plus tournament(k) selection -> two-point crossover ->
    mutation; population size is preserved."""
    if len(population) != len(fitnesses):
        raise ValueError("one fitness per member required")
    next_pop: list[MatrixGenome] = []
    if config.elitism > 0:
        best = int(np.argmax(fitnesses))
        next_pop.append(population[best].copy())
    while len(next_pop) < config.pop_size:
        p1 = population[_tournament(fitnesses, config, rng)]
        p2 = population[_tournament(fitnesses, config, rng)]
        c1, c2 = two_point_crossover(p1, p2, rng, config.p_crossover)
        next_pop.append(sga_mutate(c1, rng, config.p_mutation))
        if len(next_pop) < config.pop_size:
            next_pop.append(sga_mutate(c2, rng, config.p_mutation))
    return next_pop


class SgaEngine:
    """Same generation protocol as NeatEngine: evaluate, then advance()."""

    def __init__(self, config: SgaConfig, grid: VoxelGrid):
        self.config = config
        self.grid = grid
        self.rng = np.random.default_rng(config.seed)
        self.population = sga_init(config, grid, self.rng)
        self.generation = 0

    def champion(self) -> MatrixGenome:
        return max(self.population, key=lambda g: g.fitness)

    def record(self) -> GenerationRecord:
        fits = [g.fitness for g in self.population]
        return GenerationRecord(
            generation=self.generation,
            best_fitness=max(fits),
            mean_fitness=float(np.mean(fits)),
            n_species=1,
            champion_hidden_nodes=0,
            champion_connections=0,
        )

    def advance(self) -> None:
        if any(g.fitness is None for g in self.population):
            raise ValueError("advance() requires every genome to carry a fitness")
        fits = [g.fitness for g in self.population]
        self.population = sga_step(self.population, fits, self.config, self.rng)
        self.generation += 1


def matrix_to_text(g: MatrixGenome) -> str:
    nx, ny, nz = g.dims
    lines = [f"dims {nx} {ny} {nz}"]
    lines.extend(repr(float(v)) for v in g.values)
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> MatrixGenome:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("dims "):
        raise ValueError("matrix genome text must start with a dims line")
    nx, ny, nz = (int(v) for v in lines[0].split()[1:])
    values = np.array([float(v) for v in lines[1:]], dtype=np.float64)
    if values.size != nx * ny * nz:
        raise ValueError(f"expected {nx * ny * nz} values, got {values.size}")
    if np.any(np.abs(values) > TWO_PI):
        raise ValueError("matrix entries must lie in [-2*pi, 2*pi]")
    return MatrixGenome(values=values, dims=(nx, ny, nz))
