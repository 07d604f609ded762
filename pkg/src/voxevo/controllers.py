"""Uniform controller wrapper: any of the three evolved representations,
plus text serialization used for champion archiving and the wire protocol.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .cppn import CppnGenome, genome_from_text, genome_to_text, query_phase_field
from .hyperneat import (
    SubstrateNet,
    SubstrateSpec,
    build_substrate,
    paint_weights,
    query_phase_field_net,
)
from .morphology import VoxelGrid
from .physics import PhaseOffsetField
from .sga import MatrixGenome, matrix_from_text, matrix_to_text

NEAT_CPPN = "neat_cppn"
HYPERNEAT_NET = "hyperneat_net"
SGA_MATRIX = "sga_matrix"

KINDS = (NEAT_CPPN, HYPERNEAT_NET, SGA_MATRIX)


class UnsupportedControllerError(ValueError):
    pass


@dataclass
class Controller:
    kind: str
    payload: object
    substrate: SubstrateSpec | None = None
    _net: SubstrateNet | None = field(default=None, repr=False, compare=False)

    @classmethod
    def neat(cls, genome: CppnGenome) -> "Controller":
        return cls(kind=NEAT_CPPN, payload=genome)

    @classmethod
    def hyperneat(cls, genome: CppnGenome, substrate: SubstrateSpec) -> "Controller":
        return cls(kind=HYPERNEAT_NET, payload=genome, substrate=substrate)

    @classmethod
    def sga(cls, matrix: MatrixGenome) -> "Controller":
        return cls(kind=SGA_MATRIX, payload=matrix)

    def painted_net(self) -> SubstrateNet:
        """Paint lazily and cache: painting is voxel-independent, so one net
        serves every grid this controller is evaluated on."""
        if self.kind != HYPERNEAT_NET:
            raise UnsupportedControllerError(f"{self.kind} has no substrate net")
        if self._net is None:
            self._net = paint_weights(self.payload, build_substrate(self.substrate))
        return self._net

    def phase_field(self, grid: VoxelGrid) -> PhaseOffsetField:
        if self.kind == NEAT_CPPN:
            return query_phase_field(self.payload, grid)
        if self.kind == HYPERNEAT_NET:
            return query_phase_field_net(self.painted_net(), grid)
        if self.kind == SGA_MATRIX:
            return self.payload.phase_field(grid.dims)
        raise UnsupportedControllerError(f"unknown controller kind {self.kind!r}")


def serialize_controller(c: Controller) -> str:
    header = f"controller {c.kind}\n"
    if c.kind == NEAT_CPPN:
        return header + genome_to_text(c.payload)
    if c.kind == HYPERNEAT_NET:
        s = c.substrate
        sub = (
            f"substrate {s.hidden_layers} {s.neurons_per_layer} "
            f"{repr(float(s.weight_threshold))} {repr(float(s.weight_scale))}\n"
        )
        return header + sub + genome_to_text(c.payload)
    if c.kind == SGA_MATRIX:
        return header + matrix_to_text(c.payload)
    raise UnsupportedControllerError(f"unknown controller kind {c.kind!r}")


def deserialize_controller(text: str) -> Controller:
    lines = text.splitlines()
    idx = 0
    while idx < len(lines) and (not lines[idx].strip() or lines[idx].lstrip().startswith("#")):
        idx += 1
    if idx >= len(lines):
        raise ValueError("empty controller document")
    head = lines[idx].split()
    if len(head) != 2 or head[0] != "controller" or head[1] not in KINDS:
        raise ValueError(f"bad controller header {lines[idx]!r}")
    kind = head[1]
    body = "\n".join(lines[idx + 1 :])
    if kind == NEAT_CPPN:
        return Controller.neat(genome_from_text(body))
    if kind == SGA_MATRIX:
        return Controller.sga(matrix_from_text(body))
    # hyperneat: substrate line then the genome
    body_lines = body.splitlines()
    jdx = 0
    while jdx < len(body_lines) and not body_lines[jdx].strip():
        jdx += 1
    sub = body_lines[jdx].split()
    if len(sub) != 5 or sub[0] != "substrate":
        raise ValueError(f"expected substrate line, got {body_lines[jdx]!r}")
    spec = SubstrateSpec(
        hidden_layers=int(sub[1]),
        neurons_per_layer=int(sub[2]),
        weight_threshold=float(sub[3]),
        weight_scale=float(sub[4]),
    )
    genome = genome_from_text("\n".join(body_lines[jdx + 1 :]))
    return Controller.hyperneat(genome, spec)
