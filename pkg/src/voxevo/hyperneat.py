"""HyperNEAT: a fixed ReLU substrate whose weights and biases are painted
by an evolved 4-input / 2-output CPPN queried over node coordinates.

The substrate itself is the controller: it maps (x, y, z, material) voxel
inputs to a clamped phase offset, exactly like a NEAT-mode CPPN does.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cppn import CppnGenome, activate_many, clamp_phase
from .morphology import VoxelGrid, coordinate_inputs
from .physics import PhaseOffsetField

N_SUBSTRATE_INPUTS = 4


@dataclass(frozen=True)
class SubstrateSpec:
    hidden_layers: int = 3
    neurons_per_layer: int = 4
    weight_threshold: float = 0.2
    weight_scale: float = 3.0

    def __post_init__(self):
        if not 3 <= self.hidden_layers <= 10:
            raise ValueError("hidden_layers must be in [3, 10]")
        if not 3 <= self.neurons_per_layer <= 10:
            raise ValueError("neurons_per_layer must be in [3, 10]")
        if self.weight_threshold < 0:
            raise ValueError("weight_threshold must be non-negative")
        if self.weight_scale <= 0:
            raise ValueError("weight_scale must be positive")


@dataclass(frozen=True)
class SubstrateLayout:
    """2D node coordinates per layer: inputs, hidden layers, output."""

    spec: SubstrateSpec
    layers: tuple  # tuple of (n_i, 2) float arrays

    @property
    def n_nodes(self) -> int:
        return sum(c.shape[0] for c in self.layers)


def _spread(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, n)


def build_substrate(spec: SubstrateSpec) -> SubstrateLayout:
    """Inputs on y=-1, output on y=+1, hidden layer j at y = -1 + 2j/(L+1);
    nodes evenly spaced on x in [-1, 1]."""
    layers = []
    layers.append(np.stack([_spread(N_SUBSTRATE_INPUTS), np.full(N_SUBSTRATE_INPUTS, -1.0)], axis=1))
    for j in range(1, spec.hidden_layers + 1):
        y = -1.0 + 2.0 * j / (spec.hidden_layers + 1)
        layers.append(np.stack(
            [_spread(spec.neurons_per_layer), np.full(spec.neurons_per_layer, y)], axis=1
        ))
    layers.append(np.array([[0.0, 1.0]]))
    return SubstrateLayout(spec=spec, layers=tuple(layers))


@dataclass
class SubstrateNet:
    """Painted feedforward net: ReLU hidden layers, identity output."""

    weights: list  # weights[i]: (n_{i+1}, n_i)
    biases: list  # biases[i]: (n_{i+1},)

    def complexity(self) -> tuple[int, int]:
        """(hidden nodes with any nonzero incident weight, nonzero weights)."""
        connections = int(sum(np.count_nonzero(w) for w in self.weights))
        hidden = 0
        for i in range(len(self.weights) - 1):
            incoming = np.count_nonzero(self.weights[i], axis=1) > 0
            outgoing = np.count_nonzero(self.weights[i + 1], axis=0) > 0
            hidden += int(np.count_nonzero(incoming | outgoing))
        return hidden, connections


def _threshold_scale(raw: np.ndarray, spec: SubstrateSpec) -> np.ndarray:
    mag = np.abs(raw)
    scaled = np.sign(raw) * np.minimum(mag - spec.weight_threshold, 1.0) * spec.weight_scale
    return np.where(mag < spec.weight_threshold, 0.0, scaled)


def paint_weights(cppn: CppnGenome, layout: SubstrateLayout) -> SubstrateNet:
    """Query the CPPN once per node pair (output 1 -> weight) and once per
    non-input node (output 2 at partner coordinate (0,0) -> bias), applying
    the threshold/scale rule to both."""
    if len(cppn.input_ids()) != 4 or len(cppn.output_ids()) != 2:
        raise ValueError("weight painting needs a 4-input / 2-output genome")
    spec = layout.spec
    queries = []
    shapes = []
    for src, dst in zip(layout.layers[:-1], layout.layers[1:]):
        n_src, n_dst = src.shape[0], dst.shape[0]
        grid_src = np.repeat(src, n_dst, axis=0)  # (n_src*n_dst, 2)
        grid_dst = np.tile(dst, (n_src, 1))
        queries.append(np.hstack([grid_src, grid_dst]))
        shapes.append((n_dst, n_src))
    for coords in layout.layers[1:]:
        queries.append(np.hstack([coords, np.zeros_like(coords)]))
    out = activate_many(cppn, np.vstack(queries))

    weights = []
    offset = 0
    for n_dst, n_src in shapes:
        raw = out[offset : offset + n_src * n_dst, 0].reshape(n_src, n_dst).T
        weights.append(_threshold_scale(raw, spec))
        offset += n_src * n_dst
    biases = []
    for coords in layout.layers[1:]:
        n = coords.shape[0]
        biases.append(_threshold_scale(out[offset : offset + n, 1], spec))
        offset += n
    return SubstrateNet(weights=weights, biases=biases)


def substrate_forward(net: SubstrateNet, inputs: np.ndarray) -> np.ndarray:
    """Batched feedforward: inputs (N, 4) -> clamped outputs (N,)."""
    a = np.asarray(inputs, dtype=np.float64)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(0.0, a @ w.T + b)
    a = a @ net.weights[-1].T + net.biases[-1]
    out = clamp_phase(a[:, 0])
    return float(out[0]) if squeeze else out


def substrate_activate(net: SubstrateNet, inputs) -> float:
    """Phase offset for one (xn, yn, zn, m) input tuple."""
    return substrate_forward(net, np.asarray(inputs, dtype=np.float64))


def query_phase_field_hyper(cppn: CppnGenome, layout: SubstrateLayout,
                            grid: VoxelGrid) -> PhaseOffsetField:
    """Paint once, then evaluate the substrate at every non-empty voxel."""
    net = paint_weights(cppn, layout)
    return query_phase_field_net(net, grid)


def query_phase_field_net(net: SubstrateNet, grid: VoxelGrid) -> PhaseOffsetField:
    coords, inputs = coordinate_inputs(grid)
    vals = np.zeros(grid.dims, dtype=np.float64)
    vals[coords[:, 0], coords[:, 1], coords[:, 2]] = substrate_forward(net, inputs)
    return PhaseOffsetField(vals)
