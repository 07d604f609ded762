import math
from pathlib import Path

import numpy as np
import pytest

from voxevo.controllers import Controller, deserialize_controller, serialize_controller
from voxevo.cppn import ConnGene, CppnGenome, NodeGene
from voxevo.hyperneat import SubstrateNet, SubstrateSpec
from voxevo.morphology import PASSIVE, VoxelGrid, generate_benchmark, parse_morphology
from voxevo.orchestrator import (
    DIVERGENCE_PENALTY,
    CampaignConfig,
    aptitude,
    complexity_report,
    config_from_mapping,
    evaluate_controller,
    evaluate_robustness,
    make_evaluator,
    parse_config_text,
    reevaluate_champion,
    resolve_grids,
    run_campaign,
    run_trial,
)
from voxevo.physics import SimParams
from voxevo.sga import MatrixGenome, SgaConfig
from voxevo.neat import NeatConfig


SMALL_GRID = "dims 6 3 3\n" + "\n\n".join("\n".join(["333333"] * 3) for _ in range(3)) + "\n"


def small_grid():
    return parse_morphology(SMALL_GRID)


def const_neat_controller(bias=0.0):
    nodes = [NodeGene(i, "input", "identity", 0.0) for i in range(4)]
    nodes.append(NodeGene(4, "output", "identity", bias))
    conns = [ConnGene(i, i, 4, 0.0, True) for i in range(4)]
    return Controller.neat(CppnGenome(nodes=nodes, conns=conns))


def const_hyper_controller(weight_bias=0.0, bias_bias=0.0):
    nodes = [NodeGene(i, "input", "identity", 0.0) for i in range(4)]
    nodes.append(NodeGene(4, "output", "identity", weight_bias))
    nodes.append(NodeGene(5, "output", "identity", bias_bias))
    return Controller.hyperneat(CppnGenome(nodes=nodes, conns=[]), SubstrateSpec())


def fast_campaign(tmp_path, **kw):
    base = dict(
        algorithm="neat",
        morphology="file:" + str(tmp_path / "m.txt"),
        trials=1,
        base_seed=3,
        generations=3,
        pop_size=4,
        out_dir=str(tmp_path / "out"),
        sim=SimParams(duration=0.5),
    )
    base.update(kw)
    (tmp_path / "m.txt").write_text(SMALL_GRID)
    return CampaignConfig(**base)


class TestEvaluateController:
    def test_zero_controller_on_passive_grid_scores_zero(self):
        grid = VoxelGrid(np.full((4, 2, 2), PASSIVE, dtype=np.uint8))
        fit = evaluate_controller(const_neat_controller(), grid, SimParams(duration=0.5))
        assert fit == 0.0

    def test_bitwise_deterministic(self):
        grid = small_grid()
        c = const_neat_controller(bias=1.0)
        params = SimParams(duration=1.0)
        assert evaluate_controller(c, grid, params) == evaluate_controller(c, grid, params)

    def test_matched_fields_across_kinds_score_identically(self):
        # the substrate's painted output bias passes straight through, so a
        # NEAT genome whose constant output equals that painted value yields
        # a bit-identical field
        grid = small_grid()
        params = SimParams(duration=1.0)
        hyper_c = const_hyper_controller(weight_bias=0.0, bias_bias=0.7)
        f2 = hyper_c.phase_field(grid)
        painted = float(f2.values[0, 0, 0])
        neat_c = const_neat_controller(bias=painted)
        f1 = neat_c.phase_field(grid)
        assert np.array_equal(f1.values, f2.values)
        assert evaluate_controller(neat_c, grid, params) == evaluate_controller(hyper_c, grid, params)

    def test_divergence_penalty_sentinel(self):
        grid = generate_benchmark(1, 42)
        rng = np.random.default_rng(0)
        c = Controller.sga(MatrixGenome(values=rng.uniform(-2 * math.pi, 2 * math.pi, 1280), dims=(20, 8, 8)))
        params = SimParams(dt=0.5 * math.sqrt(1 / 500.0))
        assert evaluate_controller(c, grid, params) == DIVERGENCE_PENALTY


class TestRobustness:
    def test_aptitude_matches_direct_nine_term_mean(self):
        vals = [0.09, 0.12, 0.12, 0.10, 0.11, 0.12, 0.13, 0.12, 0.13]
        expected = sum(vals) / 9
        assert aptitude(vals) == pytest.approx(expected, abs=1e-12)
        assert aptitude([0.0] * 9) == 0.0

    def test_mean_of_evaluate_controller(self):
        grids = [generate_benchmark(k, 7, dims=(6, 3, 3)) for k in (1, 2, 3)]
        params = SimParams(duration=0.5)
        c = const_neat_controller(bias=0.8)
        singles = [evaluate_controller(c, g, params) for g in grids]
        assert evaluate_robustness(c, grids, params) == pytest.approx(sum(singles) / 3, abs=1e-15)

    def test_permutation_invariance(self):
        grids = [generate_benchmark(k, 7, dims=(6, 3, 3)) for k in (1, 2, 3)]
        params = SimParams(duration=0.5)
        c = const_neat_controller(bias=0.8)
        a = evaluate_robustness(c, grids, params)
        b = evaluate_robustness(c, grids[::-1], params)
        assert a == pytest.approx(b, abs=1e-12)


class TestComplexityReport:
    def test_minimal_neat_genome(self):
        assert complexity_report(const_neat_controller()) == (0, 4)

    def test_after_one_split(self):
        from voxevo.neat import InnovationTracker, NeatConfig, init_population, mutate

        cfg = NeatConfig(pop_size=2, seed=0, p_add_node=1.0, p_add_conn=0, p_del_conn=0,
                         p_del_node=0, p_toggle_conn=0, p_weight_mutate=0,
                         p_weight_replace=0, p_mut_activation=0)
        tracker = InnovationTracker()
        g = init_population(cfg, (4, 1), np.random.default_rng(0), tracker)[0]
        g = mutate(g, cfg, np.random.default_rng(1), tracker)
        assert complexity_report(Controller.neat(g)) == (1, 5)

    def test_painted_substrate_counts(self):
        # crafted net: 36 nonzero weights touching 13 of 15 hidden nodes
        w0 = np.ones((5, 4))
        w1 = np.zeros((5, 5))
        w1[0:4, 0:3] = 1.0  # 12 nonzero, h2 rows 0..3
        w2 = np.zeros((5, 5))
        w2[0, 0] = w2[1, 1] = w2[2, 2] = 1.0  # h3 nodes 0..2, never column 4
        w3 = np.zeros((1, 5))
        w3[0, 3] = 1.0  # h3 node 3 via outgoing
        net = SubstrateNet(weights=[w0, w1, w2, w3], biases=[np.zeros(5)] * 3 + [np.zeros(1)])
        hidden, conns = net.complexity()
        assert (hidden, conns) == (13, 36)
        c = const_hyper_controller()
        c._net = net
        assert complexity_report(c) == (13, 36)

    def test_sga_unsupported(self):
        c = Controller.sga(MatrixGenome(values=np.zeros(4), dims=(2, 2, 1)))
        with pytest.raises(ValueError):
            complexity_report(c)


class TestControllerSerialization:
    def test_roundtrip_all_kinds(self):
        rng = np.random.default_rng(0)
        grid = small_grid()
        neat_c = const_neat_controller(bias=0.3)
        hyper_c = const_hyper_controller(0.5, -0.4)
        sga_c = Controller.sga(
            MatrixGenome(values=rng.uniform(-1, 1, 54), dims=grid.dims)
        )
        for c in (neat_c, hyper_c, sga_c):
            again = deserialize_controller(serialize_controller(c))
            assert again.kind == c.kind
            f1 = c.phase_field(grid)
            f2 = again.phase_field(grid)
            assert np.array_equal(f1.values, f2.values)

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            deserialize_controller("controller bogus\n")


class TestConfig:
    def test_parse_and_build(self):
        text = """
        # comment
        algorithm = neat
        morphology = bench:2
        trials = 4
        base_seed = 9
        generations = 11
        pop_size = 6
        sim.duration = 1.5
        neat.compat_threshold = 2.5
        sga.p_crossover = 0.8
        substrate.hidden_layers = 4
        """
        cfg = config_from_mapping(parse_config_text(text))
        assert cfg.algorithm == "neat"
        assert cfg.trials == 4
        assert cfg.generations == 11
        assert cfg.sim.duration == 1.5
        assert cfg.neat.compat_threshold == 2.5
        assert cfg.sga.p_crossover == 0.8
        assert cfg.substrate.hidden_layers == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            config_from_mapping({"nonsense": 1})
        with pytest.raises(ValueError):
            config_from_mapping({"bogus.duration": 1.0})

    def test_resolve_grids(self):
        cfg = CampaignConfig(morphology="bench-set")
        grids = resolve_grids(cfg)
        assert len(grids) == 9
        assert all(g.dims == (20, 8, 8) for g in grids)
        cfg = CampaignConfig(morphology="bench:3")
        assert resolve_grids(cfg)[0].id == "bha-3"

    def test_algorithm_validation(self):
        with pytest.raises(ValueError):
            CampaignConfig(algorithm="bogus").algorithms()
        assert CampaignConfig(algorithm="sga,neat").algorithms() == ["sga", "neat"]


class TestRunTrial:
    def test_records_match_generations(self, tmp_path):
        cfg = fast_campaign(tmp_path)
        grids = resolve_grids(cfg)
        trial = run_trial("neat", grids, cfg, seed=5)
        assert len(trial.records) == 3
        assert [r.generation for r in trial.records] == [0, 1, 2]
        assert trial.champion is not None
        assert trial.champion_fitness == max(r.best_fitness for r in trial.records)

    def test_champion_is_best_ever(self, tmp_path):
        cfg = fast_campaign(tmp_path, algorithm="sga")
        grids = resolve_grids(cfg)
        trial = run_trial("sga", grids, cfg, seed=5)
        fit = evaluate_controller(trial.champion, grids[0], cfg.sim)
        assert fit == trial.champion_fitness

    def test_parallel_evaluator_matches_sequential(self, tmp_path):
        cfg = fast_campaign(tmp_path)
        grids = resolve_grids(cfg)
        t1 = run_trial("neat", grids, cfg, seed=5, evaluate_batch=make_evaluator(grids, cfg.sim, jobs=1))
        t2 = run_trial("neat", grids, cfg, seed=5, evaluate_batch=make_evaluator(grids, cfg.sim, jobs=3))
        assert [r.best_fitness for r in t1.records] == [r.best_fitness for r in t2.records]


class TestRunCampaign:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = fast_campaign(tmp_path, trials=2)
        run_campaign(cfg)
        out = Path(cfg.out_dir)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert set(first) == {
            "trial_0.csv", "trial_1.csv", "champion_0.genome", "champion_1.genome",
            "aggregate.csv", "complexity.csv",
        }
        run_campaign(cfg)
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second

    def test_champion_reevaluation_matches_logged_fitness(self, tmp_path):
        for algo in ("sga", "neat", "hyperneat"):
            cfg = fast_campaign(tmp_path, algorithm=algo, out_dir=str(tmp_path / f"out_{algo}"))
            results = run_campaign(cfg)
            trial = results[algo][0]
            again = reevaluate_champion(Path(cfg.out_dir) / "champion_0.genome", cfg)
            assert again == trial.champion_fitness

    def test_multi_algorithm_layout(self, tmp_path):
        cfg = fast_campaign(tmp_path, algorithm="sga,neat,hyperneat", generations=2, pop_size=3)
        run_campaign(cfg)
        out = Path(cfg.out_dir)
        gen_axes = []
        for algo in ("sga", "neat", "hyperneat"):
            agg = (out / algo / "aggregate.csv").read_text().splitlines()
            gen_axes.append([row.split(",")[0] for row in agg[1:]])
            assert (out / algo / "trial_0.csv").exists()
        assert gen_axes[0] == gen_axes[1] == gen_axes[2]
        assert not (out / "sga" / "complexity.csv").exists()
        assert (out / "neat" / "complexity.csv").exists()

    def test_trial_csv_parses_back(self, tmp_path):
        cfg = fast_campaign(tmp_path)
        results = run_campaign(cfg)
        rows = (Path(cfg.out_dir) / "trial_0.csv").read_text().splitlines()
        assert rows[0] == "generation,best_fitness,mean_fitness,n_species,champion_hidden_nodes,champion_connections"
        best = float(rows[-1].split(",")[1])
        assert best == results["neat"][0].records[-1].best_fitness
