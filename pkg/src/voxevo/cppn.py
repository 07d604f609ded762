"""CPPN genomes and their feedforward evaluation.

A genome is a small directed acyclic graph whose nodes mix heterogeneous
activation functions.  Queried over normalized voxel coordinates plus the
material code, its clamped output is the per-voxel actuation phase offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .morphology import VoxelGrid, coordinate_inputs
from .physics import TWO_PI, PhaseOffsetField

_SELU_ALPHA = 1.6733
_SELU_LAMBDA = 1.0507


def _sine(v):
    return np.sin(np.pi * v)


def _abs(v):
    return np.abs(v)


def _square(v):
    w = np.clip(v, -10.0, 10.0)
    return w * w


def _sqrt_abs(v):
    return np.sqrt(np.abs(v))


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(np.clip(-5.0 * v, -60.0, 60.0)))


def _clamped(v):
    return np.clip(v, -1.0, 1.0)


def _cube(v):
    w = np.clip(v, -10.0, 10.0)
    return w * w * w


def _exp(v):
    return np.exp(np.clip(v, -10.0, 10.0))


def _gauss(v):
    w = np.clip(v, -40.0, 40.0)  # exp(-5*40^2) underflows to 0 exactly like the true tail
    return np.exp(-5.0 * w * w)


def _hat(v):
    return np.maximum(0.0, 1.0 - np.abs(v))


def _identity(v):
    return v + 0.0


def _inverse(v):
    w = np.clip(v, -1e150, 1e150)
    return w / (w * w + 1e-7)


def _log(v):
    return np.log(np.maximum(np.abs(v), 1e-7))


def _relu(v):
    return np.maximum(0.0, v)


def _selu(v):
    neg = _SELU_ALPHA * (np.exp(np.minimum(v, 0.0)) - 1.0)
    return _SELU_LAMBDA * np.where(v > 0.0, v, neg)


def _lelu(v):
    return np.where(v > 0.0, v, 0.005 * v)


def _elu(v):
    neg = np.exp(np.minimum(v, 0.0)) - 1.0
    return np.where(v > 0.0, v, neg)


def _softplus(v):
    x = 5.0 * np.asarray(v, dtype=np.float64)
    small = 0.2 * np.log1p(np.exp(np.minimum(x, 30.0)))
    return np.where(x > 30.0, 0.2 * x, small)  # exact continuation in double precision


def _tanh(v):
    return np.tanh(2.5 * v)


def _negated(fn):
    def neg(v):
        return -fn(v)

    return neg


ACTIVATIONS = {
    "sine": _sine,
    "neg_sine": _negated(_sine),
    "abs": _abs,
    "neg_abs": _negated(_abs),
    "square": _square,
    "neg_square": _negated(_square),
    "sqrt_abs": _sqrt_abs,
    "neg_sqrt_abs": _negated(_sqrt_abs),
    "sigmoid": _sigmoid,
    "clamped": _clamped,
    "cube": _cube,
    "exp": _exp,
    "gauss": _gauss,
    "hat": _hat,
    "identity": _identity,
    "inverse": _inverse,
    "log": _log,
    "relu": _relu,
    "selu": _selu,
    "lelu": _lelu,
    "elu": _elu,
    "softplus": _softplus,
    "tanh": _tanh,
}

ACTIVATION_NAMES = tuple(ACTIVATIONS)

INPUT, OUTPUT, HIDDEN = "input", "output", "hidden"


class CycleError(ValueError):
    """The genome graph is not feedforward."""


def apply_activation(kind: str, v: float) -> float:
    """Evaluate one activation function at a scalar point."""
    return float(ACTIVATIONS[kind](float(v)))


@dataclass
class NodeGene:
    id: int
    role: str  # input | output | hidden
    activation: str
    bias: float


@dataclass
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool


@dataclass
class CppnGenome:
    nodes: list[NodeGene]
    conns: list[ConnGene]
    fitness: float | None = None

    def copy(self) -> "CppnGenome":
        return CppnGenome(
            nodes=[replace(n) for n in self.nodes],
            conns=[replace(c) for c in self.conns],
            fitness=self.fitness,
        )

    def input_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role == INPUT]

    def output_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role == OUTPUT]

    def hidden_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role == HIDDEN]

    def n_hidden(self) -> int:
        return len(self.hidden_ids())

    def n_enabled_conns(self) -> int:
        return sum(1 for c in self.conns if c.enabled)

    def conn_keys(self) -> set[tuple[int, int]]:
        return {(c.src, c.dst) for c in self.conns}


def validate_genome(genome: CppnGenome) -> None:
    ids = [n.id for n in genome.nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids")
    by_id = {n.id: n for n in genome.nodes}
    for n in genome.nodes:
        if n.role not in (INPUT, OUTPUT, HIDDEN):
            raise ValueError(f"bad role {n.role!r}")
        if n.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {n.activation!r}")
    seen = set()
    for c in genome.conns:
        if c.src not in by_id or c.dst not in by_id:
            raise ValueError(f"connection {c.src}->{c.dst} references missing node")
        if by_id[c.dst].role == INPUT:
            raise ValueError(f"connection into input node {c.dst}")
        if (c.src, c.dst) in seen:
            raise ValueError(f"duplicate connection {c.src}->{c.dst}")
        seen.add((c.src, c.dst))
    topological_order(genome)  # raises CycleError


def topological_order(genome: CppnGenome) -> list[int]:
    """Kahn's algorithm over all connections (enabled or not)."""
    indeg = {n.id: 0 for n in genome.nodes}
    out: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for c in genome.conns:
        indeg[c.dst] += 1
        out[c.src].append(c.dst)
    ready = [nid for nid, d in indeg.items() if d == 0]
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for nxt in out[nid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if len(order) != len(genome.nodes):
        raise CycleError("genome graph contains a cycle")
    return order


def _eval_nodes(genome: CppnGenome, input_values: dict[int, object]):
    """Shared walk for scalar and batched evaluation; values may be floats
    or numpy arrays."""
    by_id = {n.id: n for n in genome.nodes}
    incoming: dict[int, list[ConnGene]] = {}
    for c in genome.conns:
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)
    values: dict[int, object] = dict(input_values)
    for nid in topological_order(genome):
        node = by_id[nid]
        if node.role == INPUT:
            continue
        total = node.bias
        for c in incoming.get(nid, ()):
            total = total + c.weight * values[c.src]
        values[nid] = ACTIVATIONS[node.activation](total)
    return values


def activate_all(genome: CppnGenome, inputs) -> list[float]:
    """Raw (unclamped) output-node values for one input tuple."""
    input_ids = genome.input_ids()
    if len(inputs) != len(input_ids):
        raise ValueError(f"expected {len(input_ids)} inputs, got {len(inputs)}")
    values = _eval_nodes(genome, {nid: float(v) for nid, v in zip(input_ids, inputs)})
    return [float(values[oid]) for oid in genome.output_ids()]


def activate(genome: CppnGenome, inputs) -> float:
    """Raw output of a single-output genome."""
    outs = activate_all(genome, inputs)
    if len(outs) != 1:
        raise ValueError(f"expected a single-output genome, found {len(outs)} outputs")
    return outs[0]


def activate_many(genome: CppnGenome, inputs: np.ndarray) -> np.ndarray:
    """Vectorized evaluation: inputs (N, n_in) -> outputs (N, n_out)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    input_ids = genome.input_ids()
    if inputs.ndim != 2 or inputs.shape[1] != len(input_ids):
        raise ValueError(f"expected inputs of shape (N, {len(input_ids)})")
    n = inputs.shape[0]
    values = _eval_nodes(genome, {nid: inputs[:, i] for i, nid in enumerate(input_ids)})
    cols = []
    for oid in genome.output_ids():
        v = values[oid]
        cols.append(np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)))
    return np.stack(cols, axis=1)


def clamp_phase(v):
    return np.clip(v, -TWO_PI, TWO_PI)


def query_phase_field(genome: CppnGenome, grid: VoxelGrid) -> PhaseOffsetField:
    """Evaluate the genome at every non-empty voxel and clamp to [-2pi, 2pi];
    empty voxels get phase 0."""
    if len(genome.input_ids()) != 4 or len(genome.output_ids()) != 1:
        raise ValueError("phase-field queries need a 4-input / 1-output genome")
    coords, inputs = coordinate_inputs(grid)
    raw = activate_many(genome, inputs)[:, 0]
    vals = np.zeros(grid.dims, dtype=np.float64)
    vals[coords[:, 0], coords[:, 1], coords[:, 2]] = clamp_phase(raw)
    return PhaseOffsetField(vals)


def genome_to_text(genome: CppnGenome) -> str:
    """One record per line: nodes then connections."""
    lines = []
    for n in genome.nodes:
        lines.append(f"node {n.id} {n.role} {n.activation} {repr(float(n.bias))}")
    for c in genome.conns:
        lines.append(
            f"conn {c.innovation} {c.src} {c.dst} {repr(float(c.weight))} {1 if c.enabled else 0}"
        )
    return "\n".join(lines) + "\n"


def genome_from_text(text: str) -> CppnGenome:
    nodes: list[NodeGene] = []
    conns: list[ConnGene] = []
    for i, ln in enumerate(text.splitlines()):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if parts[0] == "node" and len(parts) == 5:
            nodes.append(NodeGene(id=int(parts[1]), role=parts[2], activation=parts[3], bias=float(parts[4])))
        elif parts[0] == "conn" and len(parts) == 6:
            conns.append(
                ConnGene(
                    innovation=int(parts[1]),
                    src=int(parts[2]),
                    dst=int(parts[3]),
                    weight=float(parts[4]),
                    enabled=parts[5] not in ("0", "false", "False"),
                )
            )
        else:
            raise ValueError(f"genome line {i}: unrecognized record {ln!r}")
    genome = CppnGenome(nodes=nodes, conns=conns)
    validate_genome(genome)
    return genome
