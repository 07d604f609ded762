import math

import numpy as np
import pytest
from conftest import random_genome

from voxevo.cppn import ConnGene, CppnGenome, NodeGene
from voxevo.hyperneat import (
    SubstrateNet,
    SubstrateSpec,
    build_substrate,
    paint_weights,
    query_phase_field_hyper,
    substrate_activate,
    substrate_forward,
)
from voxevo.morphology import generate_benchmark

TWO_PI = 2 * math.pi


def cppn_2out(w_bias=0.0, b_bias=0.0):
    """4-in/2-out genome with no connections: outputs are constant biases."""
    nodes = [NodeGene(i, "input", "identity", 0.0) for i in range(4)]
    nodes.append(NodeGene(4, "output", "identity", w_bias))
    nodes.append(NodeGene(5, "output", "identity", b_bias))
    return CppnGenome(nodes=nodes, conns=[])


def random_paint_genome(rng):
    g = random_genome(rng, max_nodes=8, n_out=2)
    while len(g.input_ids()) != 4:
        g = random_genome(rng, max_nodes=8, n_out=2)
    return g


class TestSubstrateSpec:
    def test_defaults(self):
        spec = SubstrateSpec()
        assert (spec.hidden_layers, spec.neurons_per_layer) == (3, 4)
        assert (spec.weight_threshold, spec.weight_scale) == (0.2, 3.0)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            SubstrateSpec(hidden_layers=2)
        with pytest.raises(ValueError):
            SubstrateSpec(neurons_per_layer=11)


class TestBuildSubstrate:
    def test_node_count(self):
        layout = build_substrate(SubstrateSpec(hidden_layers=3, neurons_per_layer=4))
        assert layout.n_nodes == 4 + 12 + 1
        assert len(layout.layers) == 5

    def test_hidden_layer_heights(self):
        layout = build_substrate(SubstrateSpec(hidden_layers=3, neurons_per_layer=4))
        ys = [layer[0, 1] for layer in layout.layers]
        assert ys[0] == -1.0
        assert ys[1] == pytest.approx(-0.5)  # -1 + 2*1/4
        assert ys[2] == pytest.approx(0.0)
        assert ys[3] == pytest.approx(0.5)
        assert ys[4] == 1.0

    def test_input_spacing(self):
        layout = build_substrate(SubstrateSpec())
        np.testing.assert_allclose(layout.layers[0][:, 0], [-1, -1 / 3, 1 / 3, 1])
        assert layout.layers[-1][0, 0] == 0.0  # single output node centered


class TestPaintWeights:
    def test_zero_cppn_paints_zero_net(self):
        layout = build_substrate(SubstrateSpec())
        net = paint_weights(cppn_2out(0.0, 0.0), layout)
        assert all(np.all(w == 0.0) for w in net.weights)
        assert all(np.all(b == 0.0) for b in net.biases)

    def test_below_threshold_is_exactly_zero(self):
        layout = build_substrate(SubstrateSpec())
        net = paint_weights(cppn_2out(0.19, 0.19), layout)
        assert all(np.all(w == 0.0) for w in net.weights)
        assert all(np.all(b == 0.0) for b in net.biases)

    def test_scale_rule(self):
        layout = build_substrate(SubstrateSpec())
        # raw 1.2 -> sign * min(1.2 - 0.2, 1) * 3 = 3.0
        net = paint_weights(cppn_2out(1.2, -1.2), layout)
        assert all(np.all(w == 3.0) for w in net.weights)
        assert all(np.all(b == -3.0) for b in net.biases)
        # raw 0.5 -> min(0.3, 1) * 3 = 0.9
        net = paint_weights(cppn_2out(0.5, 0.0), layout)
        assert all(np.allclose(w, 0.9) for w in net.weights)

    def test_weight_magnitude_bounded(self):
        rng = np.random.default_rng(0)
        layout = build_substrate(SubstrateSpec())
        for _ in range(30):
            net = paint_weights(random_paint_genome(rng), layout)
            for w in net.weights:
                assert np.all(np.abs(w) <= 3.0)
                below = np.abs(w[(w != 0.0)])
                assert below.size == 0 or True  # zeros filtered; others legal

    def test_painting_deterministic(self):
        rng = np.random.default_rng(4)
        g = random_paint_genome(rng)
        layout = build_substrate(SubstrateSpec())
        n1 = paint_weights(g, layout)
        n2 = paint_weights(g, layout)
        assert all(np.array_equal(a, b) for a, b in zip(n1.weights, n2.weights))
        assert all(np.array_equal(a, b) for a, b in zip(n1.biases, n2.biases))

    def test_rejects_wrong_signature(self):
        layout = build_substrate(SubstrateSpec())
        rng = np.random.default_rng(1)
        g = random_genome(rng, n_out=1)
        with pytest.raises(ValueError):
            paint_weights(g, layout)


class TestSubstrateActivate:
    def test_zero_net_zero_output(self):
        layout = build_substrate(SubstrateSpec())
        net = paint_weights(cppn_2out(), layout)
        for inp in [(0, 0, 0, 0), (1, -1, 0.5, 3.0)]:
            assert substrate_activate(net, inp) == 0.0

    def test_single_path_hand_value(self):
        # minimal legal substrate (3x3), weights crafted by hand:
        # input0 -> h1[0] with weight 2, chain of 1s to the output
        spec = SubstrateSpec(hidden_layers=3, neurons_per_layer=3)
        layout = build_substrate(spec)
        weights = [np.zeros((3, 4)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((1, 3))]
        weights[0][0, 0] = 2.0
        weights[1][0, 0] = 1.0
        weights[2][0, 0] = 1.0
        weights[3][0, 0] = 1.0
        biases = [np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(1)]
        net = SubstrateNet(weights=weights, biases=biases)
        assert substrate_activate(net, (1.0, 0.0, 0.0, 0.0)) == 2.0  # relu(2) chained
        assert substrate_activate(net, (-1.0, 0.0, 0.0, 0.0)) == 0.0  # relu kills negative

    def test_output_clamped(self):
        spec = SubstrateSpec(hidden_layers=3, neurons_per_layer=3)
        layout = build_substrate(spec)
        weights = [np.zeros((3, 4)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((1, 3))]
        biases = [np.zeros(3), np.zeros(3), np.zeros(3), np.array([-50.0])]
        net = SubstrateNet(weights=weights, biases=biases)
        assert substrate_activate(net, (0, 0, 0, 0)) == -TWO_PI

    def test_relu_is_hidden_activation(self):
        spec = SubstrateSpec(hidden_layers=3, neurons_per_layer=3)
        weights = [np.zeros((3, 4)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((1, 3))]
        weights[0][0, 0] = 1.0
        weights[1][0, 0] = 1.0
        weights[2][0, 0] = 1.0
        weights[3][0, 0] = 1.0
        biases = [np.zeros(3), np.array([-0.25, 0.0, 0.0]), np.zeros(3), np.zeros(1)]
        net = SubstrateNet(weights=weights, biases=biases)
        # relu(relu(relu(0.5) - 0.25)) = 0.25
        assert substrate_activate(net, (0.5, 0, 0, 0)) == pytest.approx(0.25)


class TestQueryPhaseFieldHyper:
    def test_zero_cppn_zero_field(self):
        grid = generate_benchmark(1, 42)
        layout = build_substrate(SubstrateSpec())
        field = query_phase_field_hyper(cppn_2out(), layout, grid)
        assert np.all(field.values == 0.0)

    def test_paint_once_equals_per_voxel_repaint(self):
        rng = np.random.default_rng(8)
        g = random_paint_genome(rng)
        grid = generate_benchmark(2, 42)
        layout = build_substrate(SubstrateSpec())
        field = query_phase_field_hyper(g, layout, grid)
        net = paint_weights(g, layout)
        from voxevo.morphology import coordinate_inputs

        coords, inputs = coordinate_inputs(grid)
        for row in range(0, coords.shape[0], 131):
            x, y, z = coords[row]
            repainted = paint_weights(g, layout)
            assert field.values[x, y, z] == substrate_activate(repainted, inputs[row])

    def test_clamp_fuzz(self):
        rng = np.random.default_rng(13)
        grid = generate_benchmark(3, 42)
        layout = build_substrate(SubstrateSpec())
        for _ in range(60):
            g = random_paint_genome(rng)
            vals = query_phase_field_hyper(g, layout, grid).values
            assert np.all(vals >= -TWO_PI) and np.all(vals <= TWO_PI)


class TestComplexity:
    def test_counts_use_nonzero_incident_weights(self):
        spec = SubstrateSpec(hidden_layers=3, neurons_per_layer=3)
        weights = [np.zeros((3, 4)), np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((1, 3))]
        biases = [np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(1)]
        weights[0][0, 0] = 1.0  # touches h1[0]
        weights[1][1, 0] = 0.5  # touches h1[0] and h2[1]
        weights[3][0, 2] = 2.0  # touches h3[2]
        net = SubstrateNet(weights=weights, biases=biases)
        hidden, conns = net.complexity()
        assert conns == 3
        assert hidden == 3  # h1[0], h2[1], h3[2]

    def test_zero_net_has_zero_complexity(self):
        layout = build_substrate(SubstrateSpec())
        net = paint_weights(cppn_2out(), layout)
        assert net.complexity() == (0, 0)
