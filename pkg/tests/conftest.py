"""Shared test helpers: random genome construction and an independent
graph-walk evaluator used as the oracle for CPPN activation."""
from __future__ import annotations

import numpy as np

from voxevo.cppn import (
    ACTIVATION_NAMES,
    ConnGene,
    CppnGenome,
    NodeGene,
    apply_activation,
)


def random_genome(rng: np.random.Generator, max_nodes: int = 8, n_out: int = 1,
                  n_in: int | None = None) -> CppnGenome:
    """Random feedforward genome with at most max_nodes nodes.

    Nodes are created in a fixed order (inputs, outputs, hidden) and
    connections only point from earlier to later rank, so the result is
    acyclic by construction.
    """
    n_in = int(rng.integers(1, 5)) if n_in is None else n_in
    n_hidden = int(rng.integers(0, max(1, max_nodes - n_in - n_out) + 1))
    nodes = []
    nid = 0
    for _ in range(n_in):
        nodes.append(NodeGene(id=nid, role="input", activation="identity", bias=0.0))
        nid += 1
    outputs = []
    for _ in range(n_out):
        nodes.append(NodeGene(id=nid, role="output", activation="identity", bias=float(rng.normal())))
        outputs.append(nid)
        nid += 1
    hidden = []
    for _ in range(n_hidden):
        act = ACTIVATION_NAMES[int(rng.integers(len(ACTIVATION_NAMES)))]
        nodes.append(NodeGene(id=nid, role="hidden", activation=act, bias=float(rng.normal())))
        hidden.append(nid)
        nid += 1

    # feedforward rank: inputs < hidden (in id order) < outputs
    rank = {n.id: 0 for n in nodes if n.role == "input"}
    for i, h in enumerate(hidden):
        rank[h] = 1 + i
    for o in outputs:
        rank[o] = 2 + len(hidden)

    conns = []
    innov = 0
    seen = set()
    for _ in range(int(rng.integers(1, 13))):
        src = int(rng.integers(nid))
        dst = int(rng.integers(n_in, nid))
        if rank[src] >= rank[dst] or (src, dst) in seen:
            continue
        seen.add((src, dst))
        conns.append(
            ConnGene(
                innovation=innov,
                src=src,
                dst=dst,
                weight=float(rng.normal()),
                enabled=bool(rng.random() < 0.9),
            )
        )
        innov += 1
    return CppnGenome(nodes=nodes, conns=conns)


def interpret_genome(genome: CppnGenome, inputs) -> list[float]:
    """Recursive memoized evaluation, independent of the package's
    topological-order walk."""
    by_id = {n.id: n for n in genome.nodes}
    input_vals = dict(zip([n.id for n in genome.nodes if n.role == "input"], inputs))
    incoming: dict[int, list[ConnGene]] = {}
    for c in genome.conns:
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)
    memo: dict[int, float] = {}

    def value(nid: int, path: frozenset) -> float:
        if nid in input_vals:
            return float(input_vals[nid])
        if nid in memo:
            return memo[nid]
        if nid in path:
            raise ValueError("cycle reached during interpretation")
        node = by_id[nid]
        total = node.bias
        for c in incoming.get(nid, ()):
            total = total + c.weight * value(c.src, path | {nid})
        out = apply_activation(node.activation, total)
        memo[nid] = out
        return out

    return [value(o.id, frozenset()) for o in genome.nodes if o.role == "output"]
